//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [experiment]
//! rounds = 100
//! clients = 20
//! algorithm = "afind_plus"
//! seed = 1
//!
//! [collaboration]
//! tau = 0.5
//!
//! [data]
//! source = "synthetic"
//! clusters = 4
//! dim = 20
//! num_classes = 4
//! n_per_client = 60
//! mode = "label_permutation"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PartitionSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::LocalSchedule;
use crate::types::TopologySpec;

/// The collaboration strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AlgorithmId {
    /// Similarity sampling, adaptive threshold, Boltzmann aggregation.
    AfindPlus,
    /// Same selection as `AfindPlus` with uniform aggregation.
    AfindUniformAgg,
    /// `k` uniformly random neighbors, uniform aggregation.
    GossipK(usize),
    /// Top-`k` neighbors by proxy similarity, uniform aggregation.
    FixedKGreedy(usize),
    LocalOnly,
    /// Central uniform averaging over a random fraction of clients.
    FedAvgUniform,
}

impl AlgorithmId {
    pub fn boltzmann(&self) -> bool {
        matches!(self, AlgorithmId::AfindPlus)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmId::AfindPlus => write!(f, "afind_plus"),
            AlgorithmId::AfindUniformAgg => write!(f, "afind_uniform_agg"),
            AlgorithmId::GossipK(k) => write!(f, "gossip_k({k})"),
            AlgorithmId::FixedKGreedy(k) => write!(f, "fixed_k_greedy({k})"),
            AlgorithmId::LocalOnly => write!(f, "local_only"),
            AlgorithmId::FedAvgUniform => write!(f, "fedavg_uniform"),
        }
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let with_k = |prefix: &str| -> Option<Result<usize>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(match inner.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(Error::config("experiment.algorithm", format!("bad k in {s:?}"))),
            })
        };
        match s {
            "afind_plus" => return Ok(AlgorithmId::AfindPlus),
            "afind_uniform_agg" => return Ok(AlgorithmId::AfindUniformAgg),
            "local_only" => return Ok(AlgorithmId::LocalOnly),
            "fedavg_uniform" => return Ok(AlgorithmId::FedAvgUniform),
            _ => {}
        }
        if let Some(k) = with_k("gossip_k") {
            return k.map(AlgorithmId::GossipK);
        }
        if let Some(k) = with_k("fixed_k_greedy") {
            return k.map(AlgorithmId::FixedKGreedy);
        }
        Err(Error::config(
            "experiment.algorithm",
            format!("unknown algorithm {s:?}"),
        ))
    }
}

impl TryFrom<String> for AlgorithmId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AlgorithmId> for String {
    fn from(a: AlgorithmId) -> String {
        a.to_string()
    }
}

/// Parse a comma-separated algorithm list such as `local_only,gossip_k(3)`.
pub fn parse_algorithms(list: &str) -> Result<Vec<AlgorithmId>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Parse `1,2,3` or `1..4` into seeds.
pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seed", format!("cannot parse seed list {list:?}"));
    if let Some((a, b)) = list.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub collaboration: CollaborationSection,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Client count `m`.
    pub clients: usize,
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Share of each client's examples used for training; the rest is its test split.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_algorithm() -> AlgorithmId {
    AlgorithmId::AfindPlus
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: usize,
    /// Local featurizer steps `K_w`.
    pub k_w: usize,
    /// Local head steps `K_beta`.
    pub k_beta: usize,
    pub eta_w: f64,
    pub eta_beta: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Rows in the per-round batch used for proxies and starting losses.
    pub eval_batch: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 16,
            k_w: 5,
            k_beta: 5,
            eta_w: 0.05,
            eta_beta: 0.05,
            batch_size: 32,
            momentum: 0.0,
            eval_batch: 32,
        }
    }
}

impl ModelSection {
    pub fn schedule(&self) -> LocalSchedule {
        LocalSchedule {
            k_beta: self.k_beta,
            k_w: self.k_w,
            eta_beta: self.eta_beta,
            eta_w: self.eta_w,
            batch_size: self.batch_size,
            momentum: self.momentum,
        }
    }
}

/// How coreset members produce the shared blocks a client aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborCompute {
    /// Every member warm-starts from the requesting client's shared block and
    /// trains on its behalf.
    Literal,
    /// Every client trains once from its own model; requesters reuse that result.
    SharedOnce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollaborationSection {
    /// Global threshold `tau`.
    pub tau: f64,
    /// Sampling temperature `upsilon`.
    pub upsilon: f64,
    /// Loss smoothing weight `gamma`.
    pub gamma: f64,
    /// Aggregation temperature.
    pub t_agg: f64,
    /// Smooth against the member's previous-round value instead of this
    /// round's starting loss.
    pub loss_ema: bool,
    pub neighbor_compute: NeighborCompute,
    /// Keep at most this many neighbors (highest probability first).
    pub max_coreset: Option<usize>,
    /// Fraction of clients the central baseline samples per round.
    pub fedavg_fraction: f64,
}

impl Default for CollaborationSection {
    fn default() -> Self {
        CollaborationSection {
            tau: 0.5,
            upsilon: 0.1,
            gamma: 0.9,
            t_agg: 1.0,
            loss_ema: false,
            neighbor_compute: NeighborCompute::Literal,
            max_coreset: None,
            fedavg_fraction: 0.1,
        }
    }
}

/// Where client data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Clustered clients; no partitioner involved.
    Synthetic(SyntheticSpec),
    /// A pooled Gaussian-mixture dataset split by a partitioner.
    Gaussian {
        n: usize,
        dim: usize,
        num_classes: usize,
        #[serde(default = "one")]
        class_sep: f64,
        #[serde(default = "one")]
        noise: f64,
        partition: PartitionSpec,
        #[serde(default)]
        write_manifest: bool,
    },
    /// A CSV file split by a partitioner.
    Csv {
        path: PathBuf,
        partition: PartitionSpec,
        #[serde(default)]
        write_manifest: bool,
    },
}

fn one() -> f64 {
    1.0
}

impl DataConfig {
    /// Whether the partition assignment should be written next to the metrics.
    pub fn wants_manifest(&self) -> bool {
        match self {
            DataConfig::Synthetic(_) => false,
            DataConfig::Gaussian { write_manifest, .. } | DataConfig::Csv { write_manifest, .. } => *write_manifest,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologySection {
    #[serde(flatten)]
    pub spec: TopologySpec,
    /// Per-round probability that a client is available.
    pub availability: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            spec: TopologySpec::Full,
            availability: 1.0,
        }
    }
}

/// Clip-then-add-Gaussian-noise applied to everything a client transmits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Noise multiplier `sigma_2`.
    pub sigma2: f64,
    /// Clipping norm `C_0`.
    pub clip: f64,
    /// Batch size `L` dividing the noise.
    pub batch_l: usize,
}

impl ExperimentConfig {
    /// A small runnable configuration on synthetic clusters.
    pub fn synthetic(rounds: usize, clients: usize, algorithm: AlgorithmId) -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                rounds,
                clients,
                algorithm,
                seed: 0,
                out_dir: default_out_dir(),
                train_fraction: default_train_fraction(),
            },
            model: ModelSection::default(),
            collaboration: CollaborationSection::default(),
            data: DataConfig::default(),
            topology: TopologySection::default(),
            noise: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(toml_error)?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let config: ExperimentConfig = table.try_into().map_err(toml_error)?;
        config.validate()?;
        Ok(config)
    }

    /// Read a file and apply `key.path=value` overrides before validating.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(toml_error)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.collaboration;
        let m = &self.model;
        let positive = [
            ("model.eta_w", m.eta_w),
            ("model.eta_beta", m.eta_beta),
            ("collaboration.tau", c.tau),
            ("collaboration.upsilon", c.upsilon),
            ("collaboration.t_agg", c.t_agg),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&c.gamma) {
            return Err(Error::config("collaboration.gamma", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&m.momentum) {
            return Err(Error::config("model.momentum", "must be in [0, 1)"));
        }
        let f = self.experiment.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config("experiment.train_fraction", "must be in (0, 1)"));
        }
        if self.experiment.clients == 0 {
            return Err(Error::config("experiment.clients", "must be >= 1"));
        }
        if m.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1"));
        }
        if !(c.fedavg_fraction > 0.0 && c.fedavg_fraction <= 1.0) {
            return Err(Error::config("collaboration.fedavg_fraction", "must be in (0, 1]"));
        }
        if !(self.topology.availability > 0.0 && self.topology.availability <= 1.0) {
            return Err(Error::config("topology.availability", "must be in (0, 1]"));
        }
        if let Some(n) = &self.noise {
            if !(n.sigma2 >= 0.0) || !(n.clip > 0.0) || n.batch_l == 0 {
                return Err(Error::config("noise", "need sigma2 >= 0, clip > 0, batch_l >= 1"));
            }
        }
        Ok(())
    }

    /// Stable identifier of (config, seed).
    pub fn run_id(&self, seed: u64) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string().as_bytes());
        hasher.update(seed.to_le_bytes());
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let key = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .unwrap_or("config")
        .to_string();
    Error::Config { key, message }
}

/// Set `a.b.c=value` in a TOML table. The value is parsed as a TOML value and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::config(path, "empty key"))?;
    let mut cursor = table;
    for k in keys {
        cursor = cursor
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[experiment]
rounds = 3
clients = 4
"#;

    #[test]
    fn algorithm_ids_round_trip() {
        for s in [
            "afind_plus",
            "afind_uniform_agg",
            "gossip_k(5)",
            "fixed_k_greedy(2)",
            "local_only",
            "fedavg_uniform",
        ] {
            assert_eq!(s.parse::<AlgorithmId>().unwrap().to_string(), s);
        }
        assert!("gossip_k(0)".parse::<AlgorithmId>().is_err());
        assert!("gossip".parse::<AlgorithmId>().is_err());
        assert_eq!(
            parse_algorithms("local_only,gossip_k(3),afind_plus").unwrap(),
            vec![AlgorithmId::LocalOnly, AlgorithmId::GossipK(3), AlgorithmId::AfindPlus]
        );
    }

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.experiment.rounds, 3);
        assert_eq!(c.collaboration.tau, 0.5);
        assert_eq!(c.collaboration.gamma, 0.9);
        assert_eq!(c.collaboration.t_agg, 1.0);
        assert_eq!(c.model.k_w, 5);
        assert_eq!(c.experiment.algorithm, AlgorithmId::AfindPlus);
    }

    #[test]
    fn missing_rounds_names_the_key() {
        let err = ExperimentConfig::from_toml_str("[experiment]\nclients = 4\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "rounds"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "collaboration.tau=0",
            "collaboration.gamma=1.5",
            "collaboration.upsilon=-1",
        ] {
            let mut t: toml::Table = toml::from_str(MINIMAL).unwrap();
            apply_override(&mut t, bad).unwrap();
            assert!(ExperimentConfig::from_table(t).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_apply() {
        let mut t: toml::Table = toml::from_str(MINIMAL).unwrap();
        apply_override(&mut t, "collaboration.tau=0.2").unwrap();
        apply_override(&mut t, "experiment.algorithm=gossip_k(2)").unwrap();
        let c = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(c.collaboration.tau, 0.2);
        assert_eq!(c.experiment.algorithm, AlgorithmId::GossipK(2));
    }

    #[test]
    fn serialize_parse_is_idempotent() {
        let text = r#"
[experiment]
rounds = 7
clients = 6
algorithm = "fixed_k_greedy(2)"
seed = 3

[data]
source = "gaussian"
n = 600
dim = 5
num_classes = 3

[data.partition]
kind = "dirichlet"
alpha = 0.5

[topology]
kind = "random"
density = 0.5

[noise]
sigma2 = 5.0
clip = 1.0
batch_l = 32
"#;
        let a = ExperimentConfig::from_toml_str(text).unwrap();
        let b = ExperimentConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run_id(1), b.run_id(1));
        assert_ne!(a.run_id(1), a.run_id(2));
    }
}
