//! Load a CSV dataset and split it across clients.
//!
//! cargo run --example csv_dataset

use std::io::Write;

use dfl_sim::config::{AlgorithmId, DataConfig};
use dfl_sim::data::{load_csv, PartitionKind, PartitionSpec};
use dfl_sim::{run_training, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("dfl_sim_csv_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("xor.csv");
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "f0,f1,label")?;
    for k in 0..400 {
        let (x, y) = ((k % 20) as f64 / 10.0 - 0.95, (k / 20) as f64 / 10.0 - 0.95);
        writeln!(file, "{x},{y},{}", if x * y > 0.0 { 7 } else { -1 })?;
    }
    drop(file);

    let loaded = load_csv(&path)?;
    println!("{} rows, labels {:?}", loaded.dataset.len(), loaded.label_map);

    let mut config = ExperimentConfig::synthetic(30, 4, AlgorithmId::AfindPlus);
    config.data = DataConfig::Csv {
        path,
        partition: PartitionSpec {
            kind: PartitionKind::Iid,
            min_per_client: 10,
        },
        write_manifest: false,
    };
    config.model.eta_w = 0.3;
    config.model.eta_beta = 0.3;
    let out = run_training(&config, 0)?;
    println!("best accuracy {:.3}", out.best_acc());
    Ok(())
}
