//! Loss-aware mixing of shared blocks.
//!
//! cargo run --example boltzmann_aggregation

use std::collections::BTreeMap;

use dfl_sim::aggregation::{aggregate, boltzmann_weights, smooth_loss, uniform_weights};

fn main() -> dfl_sim::Result<()> {
    // (loss after local steps, loss at the requester's starting point)
    let reports = [(0, 0.10, 0.15), (1, 0.12, 0.20), (2, 0.80, 1.10)];
    let losses: BTreeMap<usize, f64> = reports
        .iter()
        .map(|&(j, end, start)| (j, smooth_loss(end, start, 0.9)))
        .collect();
    println!("smoothed losses {losses:.3?}");

    for t_agg in [5.0, 1.0, 0.2] {
        println!("t_agg {t_agg:<3}  {:.3?}", boltzmann_weights(&losses, t_agg));
    }
    println!("uniform    {:.3?}", uniform_weights(losses.keys().copied()));

    let models: BTreeMap<usize, Vec<f64>> = [(0, vec![1.0, 0.0]), (1, vec![1.0, 0.2]), (2, vec![-3.0, 4.0])]
        .into_iter()
        .collect();
    let mixed = aggregate(&models, &boltzmann_weights(&losses, 0.2))?;
    let plain = aggregate(&models, &uniform_weights(models.keys().copied()))?;
    println!("boltzmann mix {mixed:.3?}  uniform mix {plain:.3?}");
    Ok(())
}
