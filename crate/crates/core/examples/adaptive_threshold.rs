//! The participation threshold drops as similarities become ambiguous, so an
//! uncertain client admits more neighbors.
//!
//! cargo run --example adaptive_threshold

use std::collections::BTreeMap;

use dfl_sim::collaboration::{confidence, entropy_h, sampling_probs, select_coreset, threshold, SimilarityRow};

fn main() {
    let tau = 0.5;
    let cases: [(&str, &[f64]); 3] = [
        ("decisive", &[1.0, 1.0, -1.0]),
        ("mixed", &[0.9, 0.2, -0.5]),
        ("ambiguous", &[0.0, 0.05, -0.05]),
    ];
    for (name, values) in cases {
        let sims: BTreeMap<usize, f64> = values.iter().enumerate().map(|(k, &s)| (k + 1, s)).collect();
        let row = SimilarityRow::new(0, sims);
        let h = entropy_h(row.refined.values().copied());
        let conf = confidence(h);
        let theta = threshold(tau, conf);
        let coreset = select_coreset(&sampling_probs(&row, 0.3), theta, 0);
        println!("{name:<10} h {h:.3}  confidence {conf:.3}  theta {theta:.3}  coreset {coreset:?}");
    }
}
