//! Datasets and the non-IID partitioners used to spread them over clients.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::ShapeMismatch {
                expected: num_classes,
                actual: bad,
            });
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy out the given rows. Panics on an empty index list.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, self.dim, labels, self.num_classes).expect("subset of a valid dataset")
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Shannon entropy (nats) of the empirical label distribution.
    pub fn label_entropy(&self) -> f64 {
        label_entropy(&self.label_counts())
    }
}

pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// One client's local data, split into train and test halves.
#[derive(Debug, Clone)]
pub struct Shard {
    pub train: Dataset,
    pub test: Dataset,
}

impl Shard {
    /// Shuffle and split `data` with `train_frac` of rows going to train. Both
    /// halves get at least one row when there are two or more rows; a single
    /// row is used for both.
    pub fn split(data: &Dataset, train_frac: f64, rng: &mut Rng) -> Shard {
        let n = data.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        if n == 1 {
            return Shard {
                train: data.clone(),
                test: data.clone(),
            };
        }
        let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
        Shard {
            train: data.subset(&idx[..n_train]),
            test: data.subset(&idx[n_train..]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    Dirichlet { alpha: f64 },
    Pathological { classes_per_client: usize },
    Iid,
    Cluster { clusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub kind: PartitionKind,
    #[serde(default = "default_min_per_client")]
    pub min_per_client: usize,
}

fn default_min_per_client() -> usize {
    10
}

impl PartitionSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.kind {
            PartitionKind::Dirichlet { alpha } if !(alpha > 0.0) => {
                Err(Error::config("data.alpha", "dirichlet alpha must be > 0"))
            }
            PartitionKind::Pathological { classes_per_client: c } if c == 0 || c > num_classes => Err(Error::config(
                "data.classes_per_client",
                format!("must be in 1..={num_classes}"),
            )),
            PartitionKind::Cluster { clusters } if clusters < 2 => {
                Err(Error::config("data.clusters", "need at least 2 clusters"))
            }
            _ if self.min_per_client == 0 => Err(Error::config("data.min_per_client", "must be >= 1")),
            _ => Ok(()),
        }
    }
}

/// Disjoint index sets, one per client.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
    /// Non-fatal irregularities, e.g. a class with fewer examples than claimants.
    pub warnings: Vec<String>,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }
}

const DIRICHLET_MAX_RETRIES: usize = 1000;

/// Split each class across `m` clients with proportions drawn from
/// `Dir(alpha * 1_m)`, redrawing until every client holds at least
/// `min_per_client` examples.
///
/// While a class is being dealt, clients that already hold their fair share
/// (`n / m`) receive nothing more from it; this is the usual balancing step of
/// the common FL partition code and is what makes small `alpha` feasible at all.
pub fn dirichlet_partition(
    ds: &Dataset,
    m: usize,
    alpha: f64,
    min_per_client: usize,
    rng: &mut Rng,
) -> Result<Partition> {
    if !(alpha > 0.0) {
        return Err(Error::config("data.alpha", "dirichlet alpha must be > 0"));
    }
    if m == 0 || ds.len() < m * min_per_client {
        return Err(Error::InfeasiblePartition(format!(
            "{} examples cannot give {m} clients {min_per_client} each",
            ds.len()
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let by_class = indices_by_class(ds);
    let fair_share = ds.len() as f64 / m as f64;

    for _ in 0..DIRICHLET_MAX_RETRIES {
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
        for class_idx in &by_class {
            if class_idx.is_empty() {
                continue;
            }
            let mut idx = class_idx.clone();
            idx.shuffle(rng);
            let mut props: Vec<f64> = (0..m)
                .map(|c| {
                    if (shards[c].len() as f64) < fair_share {
                        gamma.sample(rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = props.iter().sum();
            if !(total > 0.0) {
                // every draw underflowed or every client is full: fall back to uniform
                props.iter_mut().for_each(|p| *p = 1.0);
            }
            let total: f64 = props.iter().sum();
            let mut start = 0usize;
            let mut cum = 0.0;
            for (client, p) in props.iter().enumerate() {
                cum += p / total;
                let end = if client + 1 == m {
                    idx.len()
                } else {
                    ((cum * idx.len() as f64) as usize).min(idx.len())
                };
                shards[client].extend_from_slice(&idx[start..end.max(start)]);
                start = end.max(start);
            }
        }
        if shards.iter().all(|s| s.len() >= min_per_client) {
            for s in &mut shards {
                s.sort_unstable();
            }
            return Ok(Partition {
                shards,
                warnings: Vec::new(),
            });
        }
    }
    Err(Error::InfeasiblePartition(format!(
        "no dirichlet draw gave every client {min_per_client} examples in {DIRICHLET_MAX_RETRIES} tries"
    )))
}

/// Give every client `c` distinct classes at random and split each class evenly
/// among the clients that drew it.
///
/// Classes are dealt from a repeatedly shuffled deck, so claims are spread
/// evenly and every class is claimed whenever `m * c >= num_classes`.
pub fn pathological_partition(ds: &Dataset, m: usize, c: usize, rng: &mut Rng) -> Result<Partition> {
    let num_classes = ds.num_classes();
    if c == 0 || c > num_classes {
        return Err(Error::config(
            "data.classes_per_client",
            format!("must be in 1..={num_classes}"),
        ));
    }
    let mut deck: Vec<usize> = Vec::new();
    let mut claims: Vec<Vec<usize>> = Vec::with_capacity(m);
    for _ in 0..m {
        let mut mine: Vec<usize> = Vec::with_capacity(c);
        while mine.len() < c {
            if deck.is_empty() {
                deck = (0..num_classes).collect();
                deck.shuffle(rng);
            }
            // take the first card from the deck that this client does not hold yet
            match deck.iter().position(|k| !mine.contains(k)) {
                Some(pos) => mine.push(deck.remove(pos)),
                None => {
                    let mut fresh: Vec<usize> = (0..num_classes).filter(|k| !mine.contains(k)).collect();
                    fresh.shuffle(rng);
                    deck.extend(fresh);
                }
            }
        }
        claims.push(mine);
    }

    let mut claimants: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (client, classes) in claims.iter().enumerate() {
        for &k in classes {
            claimants[k].push(client);
        }
    }

    let mut warnings = Vec::new();
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (class, mut idx) in indices_by_class(ds).into_iter().enumerate() {
        let who = &claimants[class];
        if who.is_empty() {
            if !idx.is_empty() {
                warnings.push(format!("class {class} was not claimed by any client"));
            }
            continue;
        }
        if idx.len() < who.len() {
            warnings.push(format!(
                "class {class} has {} examples for {} claimants",
                idx.len(),
                who.len()
            ));
        }
        idx.shuffle(rng);
        for (part, &client) in who.iter().enumerate() {
            let lo = part * idx.len() / who.len();
            let hi = (part + 1) * idx.len() / who.len();
            shards[client].extend_from_slice(&idx[lo..hi]);
        }
    }
    if let Some(empty) = shards.iter().position(Vec::is_empty) {
        return Err(Error::InfeasiblePartition(format!(
            "client {empty} received no examples"
        )));
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(Partition { shards, warnings })
}

/// Uniformly random equal-size split.
pub fn iid_partition(ds: &Dataset, m: usize, rng: &mut Rng) -> Result<Partition> {
    if m == 0 || ds.len() < m {
        return Err(Error::InfeasiblePartition(format!(
            "{} examples for {m} clients",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(rng);
    let shards = (0..m)
        .map(|c| {
            let mut s = idx[c * idx.len() / m..(c + 1) * idx.len() / m].to_vec();
            s.sort_unstable();
            s
        })
        .collect();
    Ok(Partition {
        shards,
        warnings: Vec::new(),
    })
}

fn indices_by_class(ds: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Pooled Gaussian-mixture dataset: one isotropic Gaussian per class around a
/// random mean of norm roughly `class_sep * sqrt(d)`.
pub fn gaussian_pool(n: usize, dim: usize, num_classes: usize, class_sep: f64, noise: f64, rng: &mut Rng) -> Dataset {
    let means = class_means(num_classes, dim, class_sep, rng);
    let normal = Normal::new(0.0, noise).expect("noise >= 0");
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % num_classes;
        features.extend(means[y].iter().map(|mu| mu + normal.sample(rng)));
        labels.push(y);
    }
    Dataset::new(features, dim, labels, num_classes).expect("well-formed pool")
}

fn class_means(num_classes: usize, dim: usize, class_sep: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| class_sep * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Clusters share feature marginals; each cluster permutes the mixture
    /// components before folding them onto labels (`label = perm[c] % classes`).
    LabelPermutation,
    /// Clusters share labels; each cluster's inputs are shifted by `sep` along
    /// its own random direction.
    MeanShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub n_per_client: usize,
    /// Gaussian components in the input mixture. With more components than
    /// classes, clusters disagree about which components share a label.
    #[serde(default)]
    pub components: Option<usize>,
    pub mode: ClusterMode,
    /// Mean-shift magnitude between clusters (mean-shift mode only).
    #[serde(default)]
    pub sep: f64,
    /// Scale of the class means.
    #[serde(default = "default_class_sep")]
    pub class_sep: f64,
    /// Within-class standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_class_sep() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    1.0
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 2,
            dim: 20,
            num_classes: 4,
            n_per_client: 100,
            components: None,
            mode: ClusterMode::LabelPermutation,
            sep: 0.0,
            class_sep: default_class_sep(),
            noise: default_noise(),
        }
    }
}

/// Client data drawn from latent clusters.
#[derive(Debug, Clone)]
pub struct ClusteredData {
    pub shards: Vec<Dataset>,
    /// Latent cluster of each client.
    pub cluster_of: Vec<usize>,
    /// Component permutation of each cluster (identity in mean-shift mode).
    pub permutations: Vec<Vec<usize>>,
}

/// Generate `m` client datasets from `spec.clusters` latent clusters.
///
/// Clients are assigned to clusters round-robin, so `m` divisible by the
/// cluster count gives equal cluster sizes. All clusters share the class means;
/// they differ either by a label permutation or by a mean shift.
pub fn synthetic_clusters(spec: &SyntheticSpec, m: usize, rng: &mut Rng) -> Result<ClusteredData> {
    if spec.clusters < 2 {
        return Err(Error::config("data.clusters", "need at least 2 clusters"));
    }
    if spec.num_classes < 2 || spec.dim == 0 || spec.n_per_client == 0 {
        return Err(Error::config(
            "data",
            "need >= 2 classes, dim >= 1 and n_per_client >= 1",
        ));
    }
    let k = spec.clusters;
    let components = spec.components.unwrap_or(spec.num_classes);
    if components < spec.num_classes {
        return Err(Error::config("data.components", "must be >= num_classes"));
    }
    let means = class_means(components, spec.dim, spec.class_sep, rng);
    let permutations = match spec.mode {
        ClusterMode::LabelPermutation => distinct_permutations(components, k, rng),
        ClusterMode::MeanShift => vec![(0..components).collect(); k],
    };
    let shifts: Vec<Vec<f64>> = (0..k)
        .map(|_| match spec.mode {
            ClusterMode::MeanShift => {
                let mut u: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = crate::linalg::norm(&u).max(1e-12);
                u.iter_mut().for_each(|v| *v *= spec.sep / n);
                u
            }
            ClusterMode::LabelPermutation => vec![0.0; spec.dim],
        })
        .collect();

    let normal = Normal::new(0.0, spec.noise).map_err(|_| Error::config("data.noise", "must be >= 0"))?;
    let cluster_of: Vec<usize> = (0..m).map(|i| i % k).collect();
    let shards = cluster_of
        .iter()
        .map(|&cl| {
            let mut features = Vec::with_capacity(spec.n_per_client * spec.dim);
            let mut labels = Vec::with_capacity(spec.n_per_client);
            for _ in 0..spec.n_per_client {
                let component = rng.random_range(0..components);
                features.extend(
                    means[component]
                        .iter()
                        .zip(&shifts[cl])
                        .map(|(mu, s)| mu + s + normal.sample(rng)),
                );
                labels.push(permutations[cl][component] % spec.num_classes);
            }
            Dataset::new(features, spec.dim, labels, spec.num_classes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusteredData {
        shards,
        cluster_of,
        permutations,
    })
}

/// Identity for cluster 0, then distinct random permutations while enough exist.
fn distinct_permutations(n: usize, k: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..n).collect();
    let total: f64 = (1..=n).map(|v| v as f64).product();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    seen.insert(identity.clone());
    let mut perms = vec![identity];
    while perms.len() < k {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        if (seen.len() as f64) < total && !seen.insert(p.clone()) {
            continue;
        }
        perms.push(p);
    }
    perms
}

/// A dataset read from CSV plus the original label of each remapped class.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    /// `label_map[k]` is the original label that became class `k`.
    pub label_map: Vec<i64>,
}

/// Read `f0,...,f{d-1},label` rows. Labels may be any integers; they are
/// remapped to `0..num_classes` in ascending order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::EmptyDataset),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 2 || columns.last() != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            message: "header must be f0,...,f{d-1},label".into(),
        });
    }
    let dim = columns.len() - 1;

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        for f in &fields[..dim] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value {f:?}"),
            })?;
            features.push(v);
        }
        let label: i64 = fields[dim].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad label {:?}", fields[dim]),
        })?;
        raw_labels.push(label);
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let label_map: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<i64, usize> = label_map.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let labels = raw_labels.iter().map(|l| index[l]).collect();
    let dataset = Dataset::new(features, dim, labels, label_map.len())?;
    Ok(LoadedCsv { dataset, label_map })
}

/// Write `client_id,example_index` rows.
pub fn write_manifest(path: impl AsRef<Path>, partition: &Partition) -> Result<()> {
    let path = path.as_ref();
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::from("client_id,example_index\n");
    for (client, shard) in partition.shards.iter().enumerate() {
        for idx in shard {
            buf.push_str(&format!("{client},{idx}\n"));
        }
    }
    out.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn balanced(n_per_class: usize, classes: usize) -> Dataset {
        let n = n_per_class * classes;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Dataset::new(features, 1, labels, classes).unwrap()
    }

    fn assert_exact_partition(p: &Partition, n: usize) {
        let mut all: Vec<usize> = p.shards.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(Dataset::new(vec![], 2, vec![], 2), Err(Error::EmptyDataset)));
        assert!(Dataset::new(vec![1.0], 2, vec![0], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![3], 2).is_err());
    }

    #[test]
    fn dirichlet_large_alpha_is_near_uniform() {
        let ds = balanced(1000, 4);
        let p = dirichlet_partition(&ds, 4, 1e6, 10, &mut seeded_rng(3)).unwrap();
        assert_exact_partition(&p, ds.len());
        for shard in &p.shards {
            let counts = ds.subset(shard).label_counts();
            let total: usize = counts.iter().sum();
            for c in counts {
                assert!((c as f64 / total as f64 - 0.25).abs() <= 0.05);
            }
        }
    }

    #[test]
    fn dirichlet_entropy_grows_with_alpha() {
        let ds = balanced(1000, 5);
        let mean_entropy = |alpha: f64, seed: u64| {
            let p = dirichlet_partition(&ds, 10, alpha, 5, &mut seeded_rng(seed)).unwrap();
            p.shards.iter().map(|s| ds.subset(s).label_entropy()).sum::<f64>() / 10.0
        };
        for seed in 0..20 {
            let (low, mid, high) = (
                mean_entropy(0.1, seed),
                mean_entropy(1.0, seed),
                mean_entropy(100.0, seed),
            );
            assert!(low < mid && mid < high, "seed {seed}: {low} {mid} {high}");
        }
    }

    #[test]
    fn dirichlet_is_deterministic() {
        let ds = balanced(200, 5);
        let a = dirichlet_partition(&ds, 10, 0.3, 5, &mut seeded_rng(11)).unwrap();
        let b = dirichlet_partition(&ds, 10, 0.3, 5, &mut seeded_rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dirichlet_infeasible() {
        let ds = balanced(2, 2);
        assert!(matches!(
            dirichlet_partition(&ds, 4, 0.5, 10, &mut seeded_rng(0)),
            Err(Error::InfeasiblePartition(_))
        ));
    }

    #[test]
    fn pathological_exact_class_count() {
        let ds = balanced(100, 10);
        let p = pathological_partition(&ds, 20, 2, &mut seeded_rng(5)).unwrap();
        for shard in &p.shards {
            let present = ds.subset(shard).label_counts().iter().filter(|&&c| c > 0).count();
            assert_eq!(present, 2);
        }
        assert!(p.warnings.is_empty());
        assert_exact_partition(&p, ds.len());
    }

    #[test]
    fn pathological_hundred_classes_five_each() {
        let ds = balanced(20, 100);
        let p = pathological_partition(&ds, 100, 5, &mut seeded_rng(9)).unwrap();
        for shard in &p.shards {
            let present = ds.subset(shard).label_counts().iter().filter(|&&c| c > 0).count();
            assert_eq!(present, 5);
        }
    }

    #[test]
    fn pathological_all_classes() {
        let ds = balanced(50, 4);
        let p = pathological_partition(&ds, 5, 4, &mut seeded_rng(1)).unwrap();
        for shard in &p.shards {
            assert!(ds.subset(shard).label_counts().iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn pathological_rejects_too_many_classes() {
        let ds = balanced(10, 3);
        assert!(pathological_partition(&ds, 2, 4, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn pathological_flags_exhausted_class() {
        // one example per class, many claimants
        let ds = balanced(1, 2);
        let r = pathological_partition(&ds, 6, 1, &mut seeded_rng(0));
        assert!(matches!(r, Err(Error::InfeasiblePartition(_))));
    }

    #[test]
    fn clusters_three_per_cluster() {
        let spec = SyntheticSpec {
            clusters: 3,
            ..SyntheticSpec::default()
        };
        let data = synthetic_clusters(&spec, 9, &mut seeded_rng(2)).unwrap();
        for k in 0..3 {
            assert_eq!(data.cluster_of.iter().filter(|&&c| c == k).count(), 3);
        }
        assert_eq!(data.shards.len(), 9);
    }

    #[test]
    fn permutation_mode_swaps_labels_only() {
        let spec = SyntheticSpec {
            clusters: 2,
            num_classes: 3,
            ..SyntheticSpec::default()
        };
        let data = synthetic_clusters(&spec, 2, &mut seeded_rng(4)).unwrap();
        assert_ne!(data.permutations[0], data.permutations[1]);
        assert_eq!(data.permutations[0], vec![0, 1, 2]);
    }

    #[test]
    fn extra_components_fold_onto_labels() {
        let spec = SyntheticSpec {
            clusters: 2,
            num_classes: 4,
            components: Some(8),
            n_per_client: 400,
            ..SyntheticSpec::default()
        };
        let data = synthetic_clusters(&spec, 2, &mut seeded_rng(4)).unwrap();
        for perm in &data.permutations {
            assert_eq!(perm.len(), 8);
        }
        for shard in &data.shards {
            assert_eq!(shard.num_classes(), 4);
            assert!(shard.label_counts().iter().all(|&c| c > 0));
        }
        let bad = SyntheticSpec {
            components: Some(3),
            ..spec
        };
        assert!(synthetic_clusters(&bad, 2, &mut seeded_rng(4)).is_err());
    }

    #[test]
    fn mean_shift_zero_is_iid() {
        let spec = SyntheticSpec {
            clusters: 2,
            mode: ClusterMode::MeanShift,
            sep: 0.0,
            n_per_client: 4000,
            dim: 3,
            ..SyntheticSpec::default()
        };
        let data = synthetic_clusters(&spec, 2, &mut seeded_rng(4)).unwrap();
        let mean = |d: &Dataset| -> Vec<f64> {
            (0..d.dim())
                .map(|j| (0..d.len()).map(|i| d.row(i)[j]).sum::<f64>() / d.len() as f64)
                .collect()
        };
        let (a, b) = (mean(&data.shards[0]), mean(&data.shards[1]));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 0.15, "{x} vs {y}");
        }
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let ds = balanced(5, 1);
        let shard = Shard::split(&ds, 0.8, &mut seeded_rng(0));
        assert_eq!(shard.train.len(), 4);
        assert_eq!(shard.test.len(), 1);
        let tiny = balanced(2, 1);
        let shard = Shard::split(&tiny, 0.99, &mut seeded_rng(0));
        assert_eq!((shard.train.len(), shard.test.len()), (1, 1));
    }

    #[test]
    fn entropy_of_uniform_counts() {
        assert!((label_entropy(&[5, 5, 5, 5]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(label_entropy(&[7, 0]), 0.0);
    }
}
