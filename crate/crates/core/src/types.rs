//! Domain types shared by every stage of a simulation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Shard;
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::model::ModelShape;
use crate::rng::{purpose, substream, Rng};

pub type ClientId = usize;

/// Shared featurizer block `w` and personal head block `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        ModelParams {
            w: vec![0.0; shape.w_len()],
            beta: vec![0.0; shape.beta_len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.w) && all_finite(&self.beta)
    }
}

/// One simulated client and everything it carries between rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: ClientId,
    pub shard: Shard,
    pub params: ModelParams,
    /// Most recent feature proxy of this client.
    pub proxy: Vec<f64>,
    /// Own smoothed loss from the last round.
    pub loss_smoothed: f64,
    /// Participation threshold used for the next selection.
    pub threshold: f64,
    /// Confidence the threshold was derived from.
    pub confidence: f64,
    /// Cosine similarity to each neighbor seen in the last round.
    pub sims: BTreeMap<ClientId, f64>,
    /// Selection probabilities over those neighbors.
    pub prob_row: BTreeMap<ClientId, f64>,
    /// Smoothed loss last reported by each coreset member; feeds the optional
    /// cross-round moving average.
    pub member_losses: BTreeMap<ClientId, f64>,
}

impl ClientState {
    pub fn new(id: ClientId, shard: Shard, params: ModelParams) -> Self {
        ClientState {
            id,
            shard,
            params,
            proxy: Vec::new(),
            loss_smoothed: 0.0,
            threshold: 0.0,
            confidence: 0.5,
            sims: BTreeMap::new(),
            prob_row: BTreeMap::new(),
            member_losses: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    #[default]
    Full,
    /// Random symmetric graph: every pair is linked with probability `density`.
    Random { density: f64 },
    /// Ring where each client links to `k` neighbors on each side.
    Ring { k: usize },
}

/// Which clients take part in a given round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Availability {
    Always,
    /// Each client is independently available with probability `p` per round.
    Bernoulli {
        p: f64,
        seed: u64,
    },
}

/// Symmetric communication graph plus per-round availability.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    m: usize,
    adjacency: Vec<Vec<bool>>,
    availability: Availability,
}

impl Topology {
    pub fn full(m: usize) -> Self {
        let adjacency = (0..m).map(|i| (0..m).map(|j| i != j).collect()).collect();
        Topology {
            m,
            adjacency,
            availability: Availability::Always,
        }
    }

    /// Build from an explicit edge list. Self-loops are rejected.
    pub fn from_edges(m: usize, edges: &[(ClientId, ClientId)]) -> Result<Self> {
        let mut adjacency = vec![vec![false; m]; m];
        for &(a, b) in edges {
            if a >= m || b >= m || a == b {
                return Err(Error::config(
                    "topology",
                    format!("bad edge ({a}, {b}) for {m} clients"),
                ));
            }
            adjacency[a][b] = true;
            adjacency[b][a] = true;
        }
        Ok(Topology {
            m,
            adjacency,
            availability: Availability::Always,
        })
    }

    pub fn from_spec(spec: &TopologySpec, m: usize, rng: &mut Rng) -> Result<Self> {
        match *spec {
            TopologySpec::Full => Ok(Topology::full(m)),
            TopologySpec::Random { density } => {
                if !(0.0..=1.0).contains(&density) {
                    return Err(Error::config("topology.density", "must be in [0, 1]"));
                }
                let mut edges = Vec::new();
                for a in 0..m {
                    for b in a + 1..m {
                        if rng.random_bool(density) {
                            edges.push((a, b));
                        }
                    }
                }
                Topology::from_edges(m, &edges)
            }
            TopologySpec::Ring { k } => {
                let mut edges = Vec::new();
                for a in 0..m {
                    for step in 1..=k {
                        let b = (a + step) % m;
                        if a != b {
                            edges.push((a, b));
                        }
                    }
                }
                Topology::from_edges(m, &edges)
            }
        }
    }

    /// Each client links to a random half of the other clients, symmetric.
    pub fn half_connected(m: usize, rng: &mut Rng) -> Self {
        let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
        pairs.shuffle(rng);
        pairs.truncate(pairs.len() / 2);
        Topology::from_edges(m, &pairs).expect("valid pairs")
    }

    pub fn with_availability(mut self, availability: Availability) -> Self {
        self.availability = availability;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn connected(&self, a: ClientId, b: ClientId) -> bool {
        self.adjacency[a][b]
    }

    pub fn neighbors(&self, i: ClientId) -> Vec<ClientId> {
        (0..self.m).filter(|&j| self.adjacency[i][j]).collect()
    }

    pub fn degree(&self, i: ClientId) -> usize {
        self.adjacency[i].iter().filter(|&&b| b).count()
    }

    pub fn is_available(&self, round: usize, client: ClientId) -> bool {
        match self.availability {
            Availability::Always => true,
            Availability::Bernoulli { p, seed } => {
                substream(seed, &[purpose::AVAILABILITY, round as u64, client as u64]).random_bool(p)
            }
        }
    }

    /// Neighbors of `i` that are available in `round`.
    pub fn available_neighbors(&self, round: usize, i: ClientId) -> Vec<ClientId> {
        (0..self.m)
            .filter(|&j| self.adjacency[i][j] && self.is_available(round, j))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.m).all(|i| !self.adjacency[i][i] && (0..self.m).all(|j| self.adjacency[i][j] == self.adjacency[j][i]))
    }
}

/// Aggregation-side view of one coreset member's losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub member: ClientId,
    /// Loss at the requester's shared block and the member's head, before training.
    pub loss_start: f64,
    /// Loss after the member's local steps.
    pub loss_end: f64,
    pub smoothed: f64,
}

/// What one client decided in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPlan {
    pub client: ClientId,
    pub coreset: BTreeSet<ClientId>,
    /// Fresh similarity to every available neighbor.
    pub sims: BTreeMap<ClientId, f64>,
    /// Published sampling distribution over available neighbors.
    pub probs: BTreeMap<ClientId, f64>,
    pub agg_weights: BTreeMap<ClientId, f64>,
    pub losses: Vec<LossReport>,
    /// Threshold used for this round's selection.
    pub threshold: f64,
    /// Confidence computed at the end of the round.
    pub confidence: f64,
    /// Number of degenerate (zero-norm) proxy comparisons.
    pub degenerate_proxies: usize,
}

/// Audit record of one round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundPlan {
    pub round: usize,
    pub clients: Vec<ClientPlan>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn topologies_are_symmetric_without_loops() {
        let mut rng = seeded_rng(3);
        for spec in [
            TopologySpec::Full,
            TopologySpec::Random { density: 0.5 },
            TopologySpec::Ring { k: 2 },
        ] {
            let t = Topology::from_spec(&spec, 9, &mut rng).unwrap();
            assert!(t.is_symmetric(), "{spec:?}");
        }
        assert!(Topology::half_connected(10, &mut rng).is_symmetric());
    }

    #[test]
    fn half_connected_density() {
        let t = Topology::half_connected(20, &mut seeded_rng(1));
        let edges: usize = (0..20).map(|i| t.degree(i)).sum::<usize>() / 2;
        assert_eq!(edges, 190 / 2);
    }

    #[test]
    fn from_edges_rejects_self_loop() {
        assert!(Topology::from_edges(3, &[(1, 1)]).is_err());
        assert!(Topology::from_edges(3, &[(1, 3)]).is_err());
    }

    #[test]
    fn availability_is_deterministic_subset() {
        let t = Topology::full(6).with_availability(Availability::Bernoulli { p: 0.5, seed: 4 });
        for round in 0..5 {
            let a = t.available_neighbors(round, 0);
            assert_eq!(a, t.available_neighbors(round, 0));
            assert!(a.iter().all(|&j| t.connected(0, j)));
        }
    }
}
