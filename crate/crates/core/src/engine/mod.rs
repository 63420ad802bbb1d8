//! Round orchestration.
//!
//! Every round runs against an immutable snapshot of the client states taken
//! at the start of the round. Each client's work reads only the snapshot and
//! its own random streams, and all writes land together at the end of the
//! round, so the order in which clients are processed cannot change the
//! outcome.

pub mod baselines;
pub mod metrics;
pub mod noise;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rayon::prelude::*;

use crate::aggregation::{aggregate, boltzmann_weights, smooth_loss, uniform_weights};
use crate::collaboration::{
    confidence, entropy_h, refine, restricted_probs, sampling_probs, select_coreset, threshold, SimilarityRow,
};
use crate::config::{AlgorithmId, DataConfig, ExperimentConfig, NeighborCompute};
use crate::data::{self, Dataset, Partition, PartitionKind, PartitionSpec, Shard};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, cosine_sim};
use crate::model::{Batcher, LocalOutcome, ModelShape, NonFinite};
use crate::rng::{purpose, substream, Rng};
use crate::types::{Availability, ClientId, ClientPlan, ClientState, LossReport, RoundPlan, Topology};

pub use baselines::{fixed_k_greedy, gossip_select};
pub use metrics::{evaluate, write_audit_csv, write_metrics_csv, RoundMetrics};
pub use noise::inject_noise;

/// A running simulation: configuration, graph, and all client states.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub shape: ModelShape,
    pub topology: Topology,
    pub states: Vec<ClientState>,
    pub seed: u64,
    round: usize,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct TrainingOutput {
    /// Row 0 is the initial state; row `t` follows round `t`.
    pub metrics: Vec<RoundMetrics>,
    pub plans: Vec<RoundPlan>,
    pub states: Vec<ClientState>,
    pub partition_warnings: Vec<String>,
}

impl TrainingOutput {
    pub fn best_acc(&self) -> f64 {
        self.metrics
            .iter()
            .map(|m| m.mean_acc)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_acc(&self) -> f64 {
        self.metrics.last().map(|m| m.mean_acc).unwrap_or(0.0)
    }
}

/// Client shards plus the partition they came from, if any.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub shards: Vec<Shard>,
    pub partition: Option<Partition>,
    pub cluster_of: Option<Vec<usize>>,
}

/// Build every client's train/test shard from the data section of `config`.
pub fn build_client_data(config: &ExperimentConfig, seed: u64) -> Result<ClientData> {
    let m = config.experiment.clients;
    let split = |datasets: Vec<Dataset>| -> Vec<Shard> {
        datasets
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Shard::split(
                    d,
                    config.experiment.train_fraction,
                    &mut substream(seed, &[purpose::DATA, 1, i as u64]),
                )
            })
            .collect()
    };
    match &config.data {
        DataConfig::Synthetic(spec) => {
            let clustered = data::synthetic_clusters(spec, m, &mut substream(seed, &[purpose::DATA]))?;
            Ok(ClientData {
                shards: split(clustered.shards),
                partition: None,
                cluster_of: Some(clustered.cluster_of),
            })
        }
        DataConfig::Gaussian {
            n,
            dim,
            num_classes,
            class_sep,
            noise,
            partition,
            ..
        } => {
            let pool = data::gaussian_pool(
                *n,
                *dim,
                *num_classes,
                *class_sep,
                *noise,
                &mut substream(seed, &[purpose::DATA]),
            );
            partitioned(&pool, m, partition, seed, split)
        }
        DataConfig::Csv { path, partition, .. } => {
            let loaded = data::load_csv(path)?;
            partitioned(&loaded.dataset, m, partition, seed, split)
        }
    }
}

fn partitioned(
    pool: &Dataset,
    m: usize,
    spec: &PartitionSpec,
    seed: u64,
    split: impl Fn(Vec<Dataset>) -> Vec<Shard>,
) -> Result<ClientData> {
    spec.validate(pool.num_classes())?;
    let p = partition(pool, m, spec, &mut substream(seed, &[purpose::PARTITION]))?;
    let shards = split(p.shards.iter().map(|s| pool.subset(s)).collect());
    Ok(ClientData {
        shards,
        partition: Some(p),
        cluster_of: None,
    })
}

/// Dispatch to the partitioner named by `spec`.
pub fn partition(ds: &Dataset, m: usize, spec: &PartitionSpec, rng: &mut Rng) -> Result<Partition> {
    match spec.kind {
        PartitionKind::Dirichlet { alpha } => data::dirichlet_partition(ds, m, alpha, spec.min_per_client, rng),
        PartitionKind::Pathological { classes_per_client } => {
            data::pathological_partition(ds, m, classes_per_client, rng)
        }
        PartitionKind::Iid => data::iid_partition(ds, m, rng),
        PartitionKind::Cluster { clusters } => cluster_partition(ds, m, clusters, rng),
    }
}

/// Classes are dealt to `k` groups (class `c` to group `c % k`) and clients
/// join groups round-robin; each group's examples are split evenly among its
/// clients.
fn cluster_partition(ds: &Dataset, m: usize, k: usize, rng: &mut Rng) -> Result<Partition> {
    use rand::seq::SliceRandom;
    if k < 2 || k > ds.num_classes() || m < k {
        return Err(Error::InfeasiblePartition(format!(
            "{k} clusters over {} classes and {m} clients",
            ds.num_classes()
        )));
    }
    let mut shards = vec![Vec::new(); m];
    for g in 0..k {
        let members: Vec<usize> = (0..m).filter(|i| i % k == g).collect();
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&r| ds.label(r) % k == g).collect();
        idx.shuffle(rng);
        for (part, &client) in members.iter().enumerate() {
            let lo = part * idx.len() / members.len();
            let hi = (part + 1) * idx.len() / members.len();
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
    Ok(Partition {
        shards,
        warnings: Vec::new(),
    })
}

/// Build the communication graph named in `config`.
pub fn build_topology(config: &ExperimentConfig, seed: u64) -> Result<Topology> {
    let m = config.experiment.clients;
    let mut rng = substream(seed, &[purpose::TOPOLOGY]);
    #[allow(clippy::redundant_guards)] // float literal patterns are not stable
    let topology = match config.topology.spec {
        crate::types::TopologySpec::Random { density } if density == 0.5 => Topology::half_connected(m, &mut rng),
        ref spec => Topology::from_spec(spec, m, &mut rng)?,
    };
    let availability = config.topology.availability;
    Ok(if availability < 1.0 {
        topology.with_availability(Availability::Bernoulli { p: availability, seed })
    } else {
        topology
    })
}

impl Simulation {
    pub fn from_config(config: &ExperimentConfig, seed: u64) -> Result<(Self, ClientData)> {
        config.validate()?;
        let client_data = build_client_data(config, seed)?;
        let topology = build_topology(config, seed)?;
        let sim = Simulation::from_parts(config, client_data.shards.clone(), topology, seed)?;
        Ok((sim, client_data))
    }

    /// Start a simulation from ready-made shards and graph. All clients begin
    /// from the same parameters, uniform neighbor probabilities, and the
    /// threshold those neutral similarities imply.
    pub fn from_parts(config: &ExperimentConfig, shards: Vec<Shard>, topology: Topology, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = config.experiment.clients;
        if shards.len() != m || topology.m() != m {
            return Err(Error::config(
                "experiment.clients",
                format!(
                    "{m} clients but {} shards and a {}-node graph",
                    shards.len(),
                    topology.m()
                ),
            ));
        }
        let first = &shards[0].train;
        let shape = ModelShape::new(first.dim(), config.model.hidden, first.num_classes())?;
        let init = shape.init(&mut substream(seed, &[purpose::INIT]));
        let tau = config.collaboration.tau;
        let states = shards
            .into_iter()
            .enumerate()
            .map(|(i, shard)| {
                let mut s = ClientState::new(i, shard, init.clone());
                let neighbors = topology.neighbors(i);
                s.confidence = confidence(entropy_h(neighbors.iter().map(|_| refine(0.0))));
                s.threshold = threshold(tau, s.confidence);
                let uniform = 1.0 / neighbors.len().max(1) as f64;
                s.prob_row = neighbors.iter().map(|&j| (j, uniform)).collect();
                s
            })
            .collect();
        Ok(Simulation {
            config: config.clone(),
            shape,
            topology,
            states,
            seed,
            round: 0,
        })
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn metrics(&self, plan: Option<&RoundPlan>) -> RoundMetrics {
        metrics::compute(&self.states, &self.shape, self.round, plan)
    }

    /// Run one round with clients processed in parallel.
    pub fn step(&mut self) -> Result<(RoundPlan, RoundMetrics)> {
        self.step_inner(None)
    }

    /// Run one round processing clients sequentially in `order`.
    pub fn step_in_order(&mut self, order: &[ClientId]) -> Result<(RoundPlan, RoundMetrics)> {
        self.step_inner(Some(order))
    }

    fn step_inner(&mut self, order: Option<&[ClientId]>) -> Result<(RoundPlan, RoundMetrics)> {
        let ctx = RoundContext {
            config: &self.config,
            shape: &self.shape,
            topology: &self.topology,
            seed: self.seed,
        };
        let (states, plan) = run_round(&self.states, &ctx, self.round, order)?;
        self.states = states;
        self.round += 1;
        let metrics = self.metrics(Some(&plan));
        Ok((plan, metrics))
    }

    pub fn run(mut self, partition_warnings: Vec<String>) -> Result<TrainingOutput> {
        let mut metrics = vec![self.metrics(None)];
        let mut plans = Vec::with_capacity(self.config.experiment.rounds);
        for _ in 0..self.config.experiment.rounds {
            let (plan, m) = self.step()?;
            metrics.push(m);
            plans.push(plan);
        }
        Ok(TrainingOutput {
            metrics,
            plans,
            states: self.states,
            partition_warnings,
        })
    }
}

/// Build data and graph from `config` and train for `config.experiment.rounds`.
pub fn run_training(config: &ExperimentConfig, seed: u64) -> Result<TrainingOutput> {
    let (sim, data) = Simulation::from_config(config, seed)?;
    let warnings = data.partition.map(|p| p.warnings).unwrap_or_default();
    sim.run(warnings)
}

/// Read-only inputs shared by every client in a round.
#[derive(Clone, Copy)]
pub struct RoundContext<'a> {
    pub config: &'a ExperimentConfig,
    pub shape: &'a ModelShape,
    pub topology: &'a Topology,
    pub seed: u64,
}

impl RoundContext<'_> {
    fn eval_rows(&self, round: usize, client: &ClientState) -> Vec<usize> {
        let mut rng = substream(self.seed, &[purpose::EVAL_BATCH, round as u64, client.id as u64]);
        Batcher::new(self.config.model.eval_batch).draw(client.shard.train.len(), &mut rng)
    }

    fn local_rng(&self, round: usize, member: ClientId, requester: ClientId) -> Rng {
        substream(
            self.seed,
            &[purpose::LOCAL_UPDATE, round as u64, member as u64, requester as u64],
        )
    }

    fn noise_rng(&self, round: usize, member: ClientId, requester: ClientId, what: u64) -> Rng {
        substream(
            self.seed,
            &[purpose::NOISE, round as u64, member as u64, requester as u64, what],
        )
    }
}

/// Execute one round against `snapshot` and return the next states.
///
/// `order` fixes a sequential processing order; `None` processes clients in
/// parallel. Both give identical results.
pub fn run_round(
    snapshot: &[ClientState],
    ctx: &RoundContext<'_>,
    round: usize,
    order: Option<&[ClientId]>,
) -> Result<(Vec<ClientState>, RoundPlan)> {
    if ctx.config.experiment.algorithm == AlgorithmId::FedAvgUniform {
        return fedavg_round(snapshot, ctx, round);
    }
    let eval_rows: Vec<Vec<usize>> = snapshot.iter().map(|s| ctx.eval_rows(round, s)).collect();
    let shared_once = match ctx.config.collaboration.neighbor_compute {
        NeighborCompute::SharedOnce => Some(own_updates(snapshot, ctx, round, &eval_rows)?),
        NeighborCompute::Literal => None,
    };
    let inputs = RoundInputs {
        snapshot,
        ctx,
        round,
        eval_rows: &eval_rows,
        shared_once: shared_once.as_deref(),
    };

    let outcomes: Vec<std::result::Result<(ClientState, ClientPlan), NonFinite>> = match order {
        None => (0..snapshot.len())
            .into_par_iter()
            .map(|i| client_round(&inputs, i))
            .collect(),
        Some(order) => {
            let mut slots: Vec<Option<_>> = (0..snapshot.len()).map(|_| None).collect();
            for &i in order {
                slots[i] = Some(client_round(&inputs, i));
            }
            slots
                .into_iter()
                .enumerate()
                .map(|(i, s)| s.unwrap_or_else(|| panic!("client {i} missing from processing order")))
                .collect()
        }
    };

    let mut states = Vec::with_capacity(snapshot.len());
    let mut plan = RoundPlan {
        round,
        clients: Vec::with_capacity(snapshot.len()),
    };
    for outcome in outcomes {
        let (state, client_plan) = outcome.map_err(|_| Error::Diverged { round: round + 1 })?;
        states.push(state);
        plan.clients.push(client_plan);
    }
    Ok((states, plan))
}

struct RoundInputs<'a> {
    snapshot: &'a [ClientState],
    ctx: &'a RoundContext<'a>,
    round: usize,
    eval_rows: &'a [Vec<usize>],
    shared_once: Option<&'a [MemberResult]>,
}

/// What one coreset member reports back to the requesting client.
#[derive(Debug, Clone)]
struct MemberResult {
    w: Vec<f64>,
    beta: Vec<f64>,
    loss_start: f64,
    loss_end: f64,
}

fn member_update(
    inputs: &RoundInputs<'_>,
    member: ClientId,
    start_w: &[f64],
    requester: ClientId,
) -> std::result::Result<MemberResult, NonFinite> {
    let ctx = inputs.ctx;
    let state = &inputs.snapshot[member];
    let rows = &inputs.eval_rows[member];
    let start = crate::types::ModelParams {
        w: start_w.to_vec(),
        beta: state.params.beta.clone(),
    };
    let loss_start = ctx.shape.loss(&start, &state.shard.train, rows);
    let mut rng = ctx.local_rng(inputs.round, member, requester);
    let LocalOutcome { params, .. } =
        ctx.shape
            .local_update(&start, &state.shard.train, &ctx.config.model.schedule(), &mut rng)?;
    let loss_end = ctx.shape.loss(&params, &state.shard.train, rows);
    if !loss_start.is_finite() || !loss_end.is_finite() {
        return Err(NonFinite);
    }
    Ok(MemberResult {
        w: params.w,
        beta: params.beta,
        loss_start,
        loss_end,
    })
}

fn own_updates(
    snapshot: &[ClientState],
    ctx: &RoundContext<'_>,
    round: usize,
    eval_rows: &[Vec<usize>],
) -> Result<Vec<MemberResult>> {
    let inputs = RoundInputs {
        snapshot,
        ctx,
        round,
        eval_rows,
        shared_once: None,
    };
    (0..snapshot.len())
        .into_par_iter()
        .map(|j| member_update(&inputs, j, &snapshot[j].params.w, j))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Diverged { round: round + 1 })
}

fn client_round(inputs: &RoundInputs<'_>, i: ClientId) -> std::result::Result<(ClientState, ClientPlan), NonFinite> {
    let ctx = inputs.ctx;
    let round = inputs.round;
    let me = &inputs.snapshot[i];
    let collab = &ctx.config.collaboration;
    let algorithm = ctx.config.experiment.algorithm;
    let noise = ctx.config.noise.as_ref();

    if !ctx.topology.is_available(round, i) {
        let plan = ClientPlan {
            client: i,
            coreset: BTreeSet::from([i]),
            sims: BTreeMap::new(),
            probs: BTreeMap::new(),
            agg_weights: BTreeMap::from([(i, 1.0)]),
            losses: Vec::new(),
            threshold: me.threshold,
            confidence: me.confidence,
            degenerate_proxies: 0,
        };
        return Ok((me.clone(), plan));
    }

    let available = ctx.topology.available_neighbors(round, i);

    // Selection uses what the client learned last round; unknown neighbors are neutral.
    let stale_row = SimilarityRow::new(
        i,
        available
            .iter()
            .map(|&j| (j, me.sims.get(&j).copied().unwrap_or(0.0)))
            .collect(),
    );
    let selection_probs = if stale_row.is_empty() {
        BTreeMap::new()
    } else {
        sampling_probs(&stale_row, collab.upsilon)
    };
    let mut coreset = match algorithm {
        AlgorithmId::AfindPlus | AlgorithmId::AfindUniformAgg => select_coreset(&selection_probs, me.threshold, i),
        AlgorithmId::GossipK(k) => gossip_select(
            i,
            &available,
            k,
            &mut substream(ctx.seed, &[purpose::SELECT, round as u64, i as u64]),
        ),
        AlgorithmId::FixedKGreedy(k) => fixed_k_greedy(i, &stale_row.sims, k),
        AlgorithmId::LocalOnly => BTreeSet::from([i]),
        AlgorithmId::FedAvgUniform => unreachable!("handled by fedavg_round"),
    };
    if let Some(cap) = collab.max_coreset {
        cap_coreset(&mut coreset, &selection_probs, i, cap);
    }

    let uses_similarity = matches!(
        algorithm,
        AlgorithmId::AfindPlus | AlgorithmId::AfindUniformAgg | AlgorithmId::FixedKGreedy(_)
    );

    // Fresh proxies: every available neighbor evaluated at this client's shared block.
    let my_proxy = ctx
        .shape
        .proxy(&me.params.w, &me.params.beta, &me.shard.train, &inputs.eval_rows[i]);
    let mut sims = BTreeMap::new();
    let mut degenerate = 0;
    if uses_similarity {
        for &j in &available {
            let other = &inputs.snapshot[j];
            let raw = ctx.shape.proxy(
                &me.params.w,
                &other.params.beta,
                &other.shard.train,
                &inputs.eval_rows[j],
            );
            let phi = noise::perturb(noise, &raw, &mut ctx.noise_rng(round, j, i, 0));
            let c = cosine_sim(&my_proxy, &phi);
            degenerate += usize::from(c.degenerate);
            sims.insert(j, c.value);
        }
    }

    // Members train and report.
    let mut models: BTreeMap<ClientId, Vec<f64>> = BTreeMap::new();
    let mut smoothed: BTreeMap<ClientId, f64> = BTreeMap::new();
    let mut losses = Vec::with_capacity(coreset.len());
    let mut own_beta = None;
    for &j in &coreset {
        let result = match inputs.shared_once {
            Some(shared) => shared[j].clone(),
            None => member_update(inputs, j, &me.params.w, i)?,
        };
        let previous = if collab.loss_ema {
            me.member_losses.get(&j).copied()
        } else {
            None
        };
        let mut f_tilde = smooth_loss(result.loss_end, previous.unwrap_or(result.loss_start), collab.gamma);
        let mut w_j = result.w;
        if j == i {
            own_beta = Some(result.beta);
        } else if noise.is_some() {
            // the block travels as a delta against the requester's own block
            let delta: Vec<f64> = w_j.iter().zip(&me.params.w).map(|(a, b)| a - b).collect();
            let noisy = noise::perturb(noise, &delta, &mut ctx.noise_rng(round, j, i, 1));
            w_j = me.params.w.iter().zip(&noisy).map(|(b, d)| b + d).collect();
            f_tilde = noise::perturb_scalar(noise, f_tilde, &mut ctx.noise_rng(round, j, i, 2));
        }
        losses.push(LossReport {
            member: j,
            loss_start: result.loss_start,
            loss_end: result.loss_end,
            smoothed: f_tilde,
        });
        smoothed.insert(j, f_tilde);
        models.insert(j, w_j);
    }

    let weights = if algorithm.boltzmann() {
        boltzmann_weights(&smoothed, collab.t_agg)
    } else {
        uniform_weights(coreset.iter().copied())
    };
    let new_w = aggregate(&models, &weights).map_err(|_| NonFinite)?;
    if !all_finite(&new_w) {
        return Err(NonFinite);
    }

    // Refresh probabilities and the threshold for the next round.
    let fresh_row = SimilarityRow::new(i, sims.clone());
    let next_probs = if fresh_row.is_empty() {
        BTreeMap::new()
    } else {
        sampling_probs(&fresh_row, collab.upsilon)
    };
    let conf = confidence(entropy_h(fresh_row.refined.values().copied()));
    let next_threshold = threshold(collab.tau, conf);
    let published = publish_probs(&fresh_row, collab.upsilon, &coreset, i, &selection_probs, &next_probs);

    let mut next = me.clone();
    next.params.w = new_w;
    next.params.beta = own_beta.expect("client is always in its own coreset");
    next.proxy = my_proxy;
    next.loss_smoothed = smoothed[&i];
    if uses_similarity {
        next.sims = sims.clone();
        next.prob_row = next_probs;
        next.confidence = conf;
        next.threshold = next_threshold;
    }
    if collab.loss_ema {
        next.member_losses.extend(smoothed.iter().map(|(&j, &v)| (j, v)));
    }

    let plan = ClientPlan {
        client: i,
        coreset,
        sims,
        probs: published,
        agg_weights: weights,
        losses,
        threshold: me.threshold,
        confidence: next.confidence,
        degenerate_proxies: degenerate,
    };
    Ok((next, plan))
}

/// The distribution a client publishes after selection: refreshed softmax over
/// the selected neighbors, rescaled so that together with the unselected
/// neighbors' selection-time probabilities it sums to one.
fn publish_probs(
    fresh: &SimilarityRow,
    upsilon: f64,
    coreset: &BTreeSet<ClientId>,
    self_id: ClientId,
    selection_probs: &BTreeMap<ClientId, f64>,
    fresh_probs: &BTreeMap<ClientId, f64>,
) -> BTreeMap<ClientId, f64> {
    if fresh.is_empty() {
        return BTreeMap::new();
    }
    let selected: BTreeSet<ClientId> = coreset
        .iter()
        .copied()
        .filter(|&j| j != self_id && fresh.sims.contains_key(&j))
        .collect();
    let outside: f64 = fresh
        .sims
        .keys()
        .filter(|j| !selected.contains(j))
        .map(|j| selection_probs.get(j).copied().unwrap_or(0.0))
        .sum();
    if selected.is_empty() || outside >= 1.0 {
        return fresh_probs.clone();
    }
    let mut out = restricted_probs(fresh, upsilon, &selected, outside);
    for j in fresh.sims.keys().filter(|j| !selected.contains(j)) {
        out.insert(*j, selection_probs.get(j).copied().unwrap_or(0.0));
    }
    out
}

fn cap_coreset(coreset: &mut BTreeSet<ClientId>, probs: &BTreeMap<ClientId, f64>, self_id: ClientId, cap: usize) {
    let mut neighbors: Vec<ClientId> = coreset.iter().copied().filter(|&j| j != self_id).collect();
    if neighbors.len() <= cap {
        return;
    }
    neighbors.sort_by(|a, b| {
        let (pa, pb) = (
            probs.get(a).copied().unwrap_or(0.0),
            probs.get(b).copied().unwrap_or(0.0),
        );
        pb.total_cmp(&pa).then(a.cmp(b))
    });
    *coreset = neighbors
        .into_iter()
        .take(cap)
        .chain(std::iter::once(self_id))
        .collect();
}

/// Central baseline: a server samples a fraction of the available clients,
/// each trains from the global shared block with its own head, and the
/// server's uniform average becomes every client's shared block.
fn fedavg_round(
    snapshot: &[ClientState],
    ctx: &RoundContext<'_>,
    round: usize,
) -> Result<(Vec<ClientState>, RoundPlan)> {
    let m = snapshot.len();
    let available: Vec<ClientId> = (0..m).filter(|&i| ctx.topology.is_available(round, i)).collect();
    let mut next: Vec<ClientState> = snapshot.to_vec();
    if available.is_empty() {
        let plan = RoundPlan {
            round,
            clients: Vec::new(),
        };
        return Ok((next, plan));
    }
    let count = ((ctx.config.collaboration.fedavg_fraction * m as f64).round() as usize).clamp(1, available.len());
    let mut rng = substream(ctx.seed, &[purpose::SERVER, round as u64]);
    let mut sampled: Vec<ClientId> = index::sample(&mut rng, available.len(), count)
        .into_iter()
        .map(|k| available[k])
        .collect();
    sampled.sort_unstable();

    let eval_rows: Vec<Vec<usize>> = snapshot.iter().map(|s| ctx.eval_rows(round, s)).collect();
    let inputs = RoundInputs {
        snapshot,
        ctx,
        round,
        eval_rows: &eval_rows,
        shared_once: None,
    };
    let global = snapshot[sampled[0]].params.w.clone();
    let results: Vec<MemberResult> = sampled
        .par_iter()
        .map(|&j| member_update(&inputs, j, &global, j))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Diverged { round: round + 1 })?;

    let weights = uniform_weights(sampled.iter().copied());
    let models: BTreeMap<ClientId, Vec<f64>> = sampled.iter().zip(&results).map(|(&j, r)| (j, r.w.clone())).collect();
    let new_global = aggregate(&models, &weights)?;
    if !all_finite(&new_global) {
        return Err(Error::Diverged { round: round + 1 });
    }
    for (&j, r) in sampled.iter().zip(&results) {
        next[j].params.beta = r.beta.clone();
        next[j].loss_smoothed = smooth_loss(r.loss_end, r.loss_start, ctx.config.collaboration.gamma);
    }
    for s in &mut next {
        s.params.w = new_global.clone();
    }
    let coreset: BTreeSet<ClientId> = sampled.iter().copied().collect();
    let losses: Vec<LossReport> = sampled
        .iter()
        .zip(&results)
        .map(|(&j, r)| LossReport {
            member: j,
            loss_start: r.loss_start,
            loss_end: r.loss_end,
            smoothed: smooth_loss(r.loss_end, r.loss_start, ctx.config.collaboration.gamma),
        })
        .collect();
    let plan = RoundPlan {
        round,
        clients: (0..m)
            .map(|i| ClientPlan {
                client: i,
                coreset: coreset.clone(),
                sims: BTreeMap::new(),
                probs: BTreeMap::new(),
                agg_weights: weights.clone(),
                losses: losses.clone(),
                threshold: snapshot[i].threshold,
                confidence: snapshot[i].confidence,
                degenerate_proxies: 0,
            })
            .collect(),
    };
    Ok((next, plan))
}
