//! Every algorithm on the shipped clustered benchmark.
//!
//! cargo run --release --example compare_baselines

use std::path::Path;

use dfl_sim::cli::compare;
use dfl_sim::config::parse_algorithms;
use dfl_sim::ExperimentConfig;

fn main() -> dfl_sim::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/clusters.toml");
    let config = ExperimentConfig::load(path, &["experiment.rounds=60".into()])?;
    let algorithms =
        parse_algorithms("afind_plus,afind_uniform_agg,fixed_k_greedy(4),gossip_k(5),local_only,fedavg_uniform")?;
    for row in compare(&config, &algorithms, &[0, 1, 2])? {
        println!(
            "{:<20} best {}  final {:.2}",
            row.algorithm,
            row.best_acc,
            100.0 * row.final_mean
        );
    }
    Ok(())
}
