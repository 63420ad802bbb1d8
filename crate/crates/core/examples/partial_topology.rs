//! Sparse graphs and clients that drop out of rounds.
//!
//! cargo run --release --example partial_topology

use dfl_sim::config::AlgorithmId;
use dfl_sim::types::TopologySpec;
use dfl_sim::{ExperimentConfig, Simulation};

fn main() -> dfl_sim::Result<()> {
    let mut config = ExperimentConfig::synthetic(20, 10, AlgorithmId::AfindPlus);
    config.topology.spec = TopologySpec::Random { density: 0.5 };
    config.topology.availability = 0.7;

    let (sim, _) = Simulation::from_config(&config, 1)?;
    for i in 0..3 {
        println!("client {i} neighbors {:?}", sim.topology.neighbors(i));
    }
    let online: Vec<usize> = (0..10).filter(|&i| sim.topology.is_available(0, i)).collect();
    println!("online in round 1: {online:?}");

    let out = sim.run(Vec::new())?;
    for m in out.metrics.iter().step_by(5) {
        println!(
            "round {:>2}  acc {:.3}  mean coreset {:.2}",
            m.round, m.mean_acc, m.mean_coreset
        );
    }
    Ok(())
}
