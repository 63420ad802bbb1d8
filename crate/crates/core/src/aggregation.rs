//! Mixing the shared blocks of a coreset.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::ClientId;

/// Blend of the loss after local training and the loss at the round's starting
/// point: `(1 - gamma) * loss_end + gamma * loss_start`.
pub fn smooth_loss(loss_end: f64, loss_start: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * loss_end + gamma * loss_start
}

/// Boltzmann weights `exp(-loss / t_agg) / Z`. Lower loss gets more weight,
/// but every member keeps a positive share.
pub fn boltzmann_weights(losses: &BTreeMap<ClientId, f64>, t_agg: f64) -> BTreeMap<ClientId, f64> {
    assert!(!losses.is_empty(), "no members to weight");
    assert!(t_agg > 0.0, "aggregation temperature must be positive");
    let min = losses.values().copied().fold(f64::INFINITY, f64::min);
    let raw: BTreeMap<ClientId, f64> = losses.iter().map(|(&j, &l)| (j, (-(l - min) / t_agg).exp())).collect();
    let z: f64 = raw.values().sum();
    raw.into_iter().map(|(j, v)| (j, v / z)).collect()
}

pub fn uniform_weights<I: IntoIterator<Item = ClientId>>(members: I) -> BTreeMap<ClientId, f64> {
    let members: Vec<ClientId> = members.into_iter().collect();
    assert!(!members.is_empty(), "no members to weight");
    let w = 1.0 / members.len() as f64;
    members.into_iter().map(|j| (j, w)).collect()
}

/// Coordinatewise convex combination of shared blocks.
pub fn aggregate(models: &BTreeMap<ClientId, Vec<f64>>, weights: &BTreeMap<ClientId, f64>) -> Result<Vec<f64>> {
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config("aggregation", format!("weights sum to {total}, not 1")));
    }
    let len = models
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::config("aggregation", "no models to aggregate"))?;
    let mut out = vec![0.0; len];
    for (j, &wj) in weights {
        let model = models
            .get(j)
            .ok_or_else(|| Error::config("aggregation", format!("no model for member {j}")))?;
        if model.len() != len {
            return Err(Error::ShapeMismatch {
                expected: len,
                actual: model.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(model) {
            *o += wj * v;
        }
    }
    Ok(out)
}
