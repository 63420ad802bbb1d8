//! Selection rules of the comparison methods.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;

use crate::rng::Rng;
use crate::types::ClientId;

/// `k` neighbors drawn uniformly without replacement, plus the client itself.
/// Takes everyone when `k` exceeds the neighbor count.
pub fn gossip_select(self_id: ClientId, available: &[ClientId], k: usize, rng: &mut Rng) -> BTreeSet<ClientId> {
    available
        .choose_multiple(rng, k.min(available.len()))
        .copied()
        .chain(std::iter::once(self_id))
        .collect()
}

/// The `k` most similar neighbors plus the client itself; ties go to the lower id.
pub fn fixed_k_greedy(self_id: ClientId, sims: &BTreeMap<ClientId, f64>, k: usize) -> BTreeSet<ClientId> {
    let mut ranked: Vec<(ClientId, f64)> = sims.iter().map(|(&j, &s)| (j, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(j, _)| j)
        .chain(std::iter::once(self_id))
        .collect()
}
