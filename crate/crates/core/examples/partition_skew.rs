//! How much each partitioner skews client label distributions.
//!
//! cargo run --example partition_skew

use dfl_sim::data::{dirichlet_partition, gaussian_pool, iid_partition, pathological_partition, Dataset, Partition};
use dfl_sim::rng::seeded_rng;

fn mean_entropy(pool: &Dataset, p: &Partition) -> f64 {
    p.shards.iter().map(|s| pool.subset(s).label_entropy()).sum::<f64>() / p.shards.len() as f64
}

fn main() -> dfl_sim::Result<()> {
    let mut rng = seeded_rng(0);
    let pool = gaussian_pool(5000, 8, 10, 1.0, 1.0, &mut rng);
    println!("max entropy for 10 classes: {:.3}", (10f64).ln());

    let iid = iid_partition(&pool, 20, &mut rng)?;
    println!("iid               {:.3}", mean_entropy(&pool, &iid));
    for alpha in [100.0, 1.0, 0.1] {
        let p = dirichlet_partition(&pool, 20, alpha, 10, &mut rng)?;
        println!(
            "dirichlet({alpha:<5})  {:.3}  sizes {:?}",
            mean_entropy(&pool, &p),
            p.sizes()
        );
    }
    let patho = pathological_partition(&pool, 20, 2, &mut rng)?;
    println!("pathological(2)   {:.3}", mean_entropy(&pool, &patho));
    for w in &patho.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
