//! Three clients: cooperating helps with a similar partner and hurts with a
//! dissimilar one.
//!
//! cargo run --release --example toy_cooperation

use dfl_sim::toy::{run_toy, Regime, ToySpec};

fn main() -> dfl_sim::Result<()> {
    let spec = ToySpec::default();
    let reports: Vec<_> = (0..5)
        .map(|seed| run_toy(&spec, seed))
        .collect::<dfl_sim::Result<_>>()?;
    for regime in Regime::ALL {
        let accs: Vec<f64> = reports.iter().map(|r| r.get(regime)).collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{:<12} {:.2}%", regime.name(), 100.0 * mean);
    }
    Ok(())
}
