//! Train on clustered clients and watch coresets form.
//!
//! cargo run --release --example train_afind

use dfl_sim::config::AlgorithmId;
use dfl_sim::data::SyntheticSpec;
use dfl_sim::{ExperimentConfig, Simulation};

fn main() -> dfl_sim::Result<()> {
    let mut config = ExperimentConfig::synthetic(40, 12, AlgorithmId::AfindPlus);
    config.data = dfl_sim::config::DataConfig::Synthetic(SyntheticSpec {
        clusters: 3,
        dim: 10,
        num_classes: 4,
        components: Some(8),
        n_per_client: 100,
        ..SyntheticSpec::default()
    });
    config.experiment.train_fraction = 0.3;
    config.model.hidden = 8;
    config.collaboration.upsilon = 0.03;
    config.collaboration.t_agg = 0.2;

    let (mut sim, data) = Simulation::from_config(&config, 0)?;
    let cluster_of = data.cluster_of.expect("synthetic clusters");
    println!("clusters {cluster_of:?}");
    for _ in 0..config.experiment.rounds {
        let (plan, m) = sim.step()?;
        if plan.round % 10 == 9 {
            let c = &plan.clients[0];
            let same = c.coreset.iter().filter(|&&j| cluster_of[j] == cluster_of[0]).count();
            println!(
                "round {:>2}  acc {:.3}  mean coreset {:.2}  client 0 coreset {:?} ({same} same-cluster)",
                plan.round + 1,
                m.mean_acc,
                m.mean_coreset,
                c.coreset
            );
        }
    }
    Ok(())
}
