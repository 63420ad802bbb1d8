//! Clip-and-noise on everything clients send each other.
//!
//! cargo run --release --example noise_injection

use std::path::Path;

use dfl_sim::config::NoiseSpec;
use dfl_sim::engine::noise::inject_noise;
use dfl_sim::rng::seeded_rng;
use dfl_sim::{run_training, ExperimentConfig};

fn main() -> dfl_sim::Result<()> {
    let v = vec![3.0, 4.0];
    println!(
        "clipped to 1: {:.3?}",
        inject_noise(&v, 0.0, 1.0, 1, &mut seeded_rng(0))
    );
    println!(
        "plus noise:   {:.3?}",
        inject_noise(&v, 5.0, 1.0, 64, &mut seeded_rng(0))
    );

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/clusters.toml");
    let mut config = ExperimentConfig::load(path, &["experiment.rounds=60".into()])?;
    for sigma2 in [0.0, 5.0, 50.0] {
        config.noise = Some(NoiseSpec {
            sigma2,
            clip: 1.0,
            batch_l: 64,
        });
        let out = run_training(&config, 0)?;
        println!("sigma2 {sigma2:<4} best accuracy {:.3}", out.best_acc());
    }
    Ok(())
}
