use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelShape;
use crate::types::{ClientState, RoundPlan};

/// Per-round summary over all clients. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_acc: f64,
    pub min_acc: f64,
    pub max_acc: f64,
    pub mean_loss: f64,
    /// Squared norm of the client-averaged full-shard gradient.
    pub mean_grad_sq: f64,
    pub mean_coreset: f64,
    pub mean_conf: f64,
}

/// Test accuracy of every client on its own test split.
pub fn evaluate(states: &[ClientState], shape: &ModelShape) -> Vec<f64> {
    states
        .par_iter()
        .map(|s| shape.accuracy(&s.params, &s.shard.test))
        .collect()
}

pub(crate) fn compute(
    states: &[ClientState],
    shape: &ModelShape,
    round: usize,
    plan: Option<&RoundPlan>,
) -> RoundMetrics {
    let per_client: Vec<(f64, f64, Vec<f64>)> = states
        .par_iter()
        .map(|s| {
            let acc = shape.accuracy(&s.params, &s.shard.test);
            let rows: Vec<usize> = (0..s.shard.train.len()).collect();
            let (loss, g) = shape.loss_and_grads(&s.params, &s.shard.train, &rows);
            (acc, loss, g.concat())
        })
        .collect();
    let m = states.len() as f64;
    let accs: Vec<f64> = per_client.iter().map(|c| c.0).collect();
    let mut mean_grad = vec![0.0; per_client[0].2.len()];
    for (_, _, g) in &per_client {
        crate::linalg::axpy(1.0 / m, g, &mut mean_grad);
    }
    let (mean_coreset, mean_conf) = match plan {
        Some(p) if !p.clients.is_empty() => {
            let n = p.clients.len() as f64;
            (
                p.clients.iter().map(|c| c.coreset.len() as f64).sum::<f64>() / n,
                p.clients.iter().map(|c| c.confidence).sum::<f64>() / n,
            )
        }
        _ => (1.0, states.iter().map(|s| s.confidence).sum::<f64>() / m),
    };
    RoundMetrics {
        round,
        mean_acc: accs.iter().sum::<f64>() / m,
        min_acc: accs.iter().copied().fold(f64::INFINITY, f64::min),
        max_acc: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_loss: per_client.iter().map(|c| c.1).sum::<f64>() / m,
        mean_grad_sq: crate::linalg::dot(&mean_grad, &mean_grad),
        mean_coreset,
        mean_conf,
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[RoundMetrics]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct AuditRow {
    round: usize,
    client: usize,
    neighbor: usize,
    sim: Option<f64>,
    prob: Option<f64>,
    selected: bool,
    weight: Option<f64>,
}

/// One row per (round, client, candidate). The client's own row has no
/// similarity or probability.
pub fn write_audit_csv(path: impl AsRef<Path>, plans: &[RoundPlan]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for plan in plans {
        for c in &plan.clients {
            let mut candidates: Vec<usize> = c.sims.keys().chain(c.coreset.iter()).copied().collect();
            candidates.sort_unstable();
            candidates.dedup();
            for j in candidates {
                w.serialize(AuditRow {
                    round: plan.round,
                    client: c.client,
                    neighbor: j,
                    sim: c.sims.get(&j).copied(),
                    prob: c.probs.get(&j).copied(),
                    selected: c.coreset.contains(&j),
                    weight: c.agg_weights.get(&j).copied(),
                })?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
