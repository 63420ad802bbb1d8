//! Three-client cooperation scenario.
//!
//! Eight Gaussian classes. Clients 1 and 2 draw from classes 4..8, client 3
//! from classes 0..4, whose means are displaced by `shift` along the diagonal. Client 2 is trained alone and alongside each partner,
//! and its test accuracy is compared across the regimes.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::config::{AlgorithmId, ExperimentConfig};
use crate::data::{Dataset, Shard};
use crate::engine::{evaluate, Simulation};
use crate::error::Result;
use crate::rng::{purpose, substream};
use crate::types::Topology;

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub class_sep: f64,
    /// Distance between the two groups' input regions.
    pub shift: f64,
    pub hidden: usize,
    pub rounds: usize,
    /// Learning rate for both parameter blocks.
    pub eta: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            dim: 20,
            n_train: 20,
            n_test: 400,
            class_sep: 1.0,
            shift: 8.0,
            hidden: 8,
            rounds: 100,
            eta: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Solo,
    CoopSimilar,
    CoopDissimilar,
    CoopAll,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Solo,
        Regime::CoopSimilar,
        Regime::CoopDissimilar,
        Regime::CoopAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Solo => "solo(2)",
            Regime::CoopSimilar => "coop(1,2)",
            Regime::CoopDissimilar => "coop(2,3)",
            Regime::CoopAll => "coop(1,2,3)",
        }
    }

    /// Edges among clients 0, 1, 2 (clients 1, 2, 3 in the scenario).
    fn edges(self) -> &'static [(usize, usize)] {
        match self {
            Regime::Solo => &[],
            Regime::CoopSimilar => &[(0, 1)],
            Regime::CoopDissimilar => &[(1, 2)],
            Regime::CoopAll => &[(0, 1), (1, 2), (0, 2)],
        }
    }
}

/// Client 2's late-training test accuracy under each regime for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyReport {
    pub seed: u64,
    pub solo: f64,
    pub coop_similar: f64,
    pub coop_dissimilar: f64,
    pub coop_all: f64,
}

impl ToyReport {
    pub fn get(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Solo => self.solo,
            Regime::CoopSimilar => self.coop_similar,
            Regime::CoopDissimilar => self.coop_dissimilar,
            Regime::CoopAll => self.coop_all,
        }
    }
}

const CLASSES: usize = 8;
/// Accuracy is averaged over this many final rounds.
const TAIL: usize = 10;

/// Shards for clients 1, 2, 3.
pub fn toy_shards(spec: &ToySpec, seed: u64) -> Result<Vec<Shard>> {
    let mut rng = substream(seed, &[purpose::DATA]);
    let offset = spec.shift / (spec.dim as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..CLASSES)
        .map(|c| {
            (0..spec.dim)
                .map(|_| {
                    let mu = spec.class_sep * rng.sample::<f64, _>(StandardNormal);
                    if c < 4 {
                        mu + offset
                    } else {
                        mu
                    }
                })
                .collect()
        })
        .collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |classes: std::ops::Range<usize>, n: usize| -> Result<Dataset> {
        let mut features = Vec::with_capacity(n * spec.dim);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(classes.clone());
            features.extend(means[c].iter().map(|mu| mu + unit.sample(&mut rng)));
            ys.push(c);
        }
        Dataset::new(features, spec.dim, ys, CLASSES)
    };
    [4..8, 4..8, 0..4]
        .into_iter()
        .map(|classes| {
            Ok(Shard {
                train: draw(classes.clone(), spec.n_train)?,
                test: draw(classes, spec.n_test)?,
            })
        })
        .collect()
}

/// Train client 2 under every regime with uniform averaging over its
/// neighbors and report its test accuracy over the last rounds.
pub fn run_toy(spec: &ToySpec, seed: u64) -> Result<ToyReport> {
    let shards = toy_shards(spec, seed)?;
    let mut config = ExperimentConfig::synthetic(spec.rounds, 3, AlgorithmId::GossipK(2));
    config.model.hidden = spec.hidden;
    config.model.eta_w = spec.eta;
    config.model.eta_beta = spec.eta;
    let mut accs = [0.0; 4];
    for (slot, regime) in accs.iter_mut().zip(Regime::ALL) {
        let topology = Topology::from_edges(3, regime.edges())?;
        let mut sim = Simulation::from_parts(&config, shards.clone(), topology, seed)?;
        let tail = TAIL.min(spec.rounds).max(1);
        for round in 0..spec.rounds {
            sim.step()?;
            if round + tail >= spec.rounds {
                *slot += evaluate(&sim.states, &sim.shape)[1] / tail as f64;
            }
        }
        if spec.rounds == 0 {
            *slot = evaluate(&sim.states, &sim.shape)[1];
        }
    }
    Ok(ToyReport {
        seed,
        solo: accs[0],
        coop_similar: accs[1],
        coop_dissimilar: accs[2],
        coop_all: accs[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_sets_are_disjoint() {
        let shards = toy_shards(&ToySpec::default(), 3).unwrap();
        assert!(shards[0].train.labels().iter().all(|&y| (4..8).contains(&y)));
        assert!(shards[1].test.labels().iter().all(|&y| (4..8).contains(&y)));
        assert!(shards[2].train.labels().iter().all(|&y| y < 4));
    }

    #[test]
    fn accuracies_in_unit_interval() {
        let spec = ToySpec {
            rounds: 3,
            n_test: 50,
            ..ToySpec::default()
        };
        let r = run_toy(&spec, 1).unwrap();
        for regime in Regime::ALL {
            assert!((0.0..=1.0).contains(&r.get(regime)));
        }
    }
}
