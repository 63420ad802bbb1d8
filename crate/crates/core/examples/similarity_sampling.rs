//! From proxy similarities to sampling probabilities.
//!
//! cargo run --example similarity_sampling

use std::collections::{BTreeMap, BTreeSet};

use dfl_sim::collaboration::{restricted_probs, sampling_probs, SimilarityRow};

fn main() {
    // Client 0 sees two look-alikes, one unrelated neighbor and one opposite.
    let sims: BTreeMap<usize, f64> = [(1, 0.9), (2, 0.8), (3, 0.0), (4, -0.7)].into_iter().collect();
    let row = SimilarityRow::new(0, sims);

    for upsilon in [1.0, 0.3, 0.05] {
        let probs = sampling_probs(&row, upsilon);
        let shown: Vec<String> = probs.iter().map(|(j, p)| format!("{j}:{p:.3}")).collect();
        println!("upsilon {upsilon:<4}  {}", shown.join("  "));
    }

    // Renormalize over the selected neighbors, keeping the unselected mass aside.
    let probs = sampling_probs(&row, 0.3);
    let coreset: BTreeSet<usize> = [1, 2].into_iter().collect();
    let outside: f64 = probs.iter().filter(|(j, _)| !coreset.contains(j)).map(|(_, p)| p).sum();
    let restricted = restricted_probs(&row, 0.3, &coreset, outside);
    println!("restricted to {coreset:?}: {restricted:.3?}, outside mass {outside:.3}");
    println!("total {:.12}", restricted.values().sum::<f64>() + outside);
}
