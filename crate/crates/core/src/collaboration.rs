//! Neighbor scoring and selection.
//!
//! A client scores each available neighbor by the cosine similarity of their
//! feature proxies, turns the scores into a temperature softmax, and keeps
//! every neighbor whose probability clears an adaptive threshold. The
//! threshold is the global cap `tau` scaled by the client's confidence, which
//! in turn falls as the entropy of its refined similarities rises.

use std::collections::{BTreeMap, BTreeSet};

use crate::linalg::{sigmoid, softmax, sq_dist};
use crate::types::ClientId;

/// One client's similarities to its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub owner: ClientId,
    pub sims: BTreeMap<ClientId, f64>,
    /// `(sim + 1) / 2` for every neighbor in `sims`.
    pub refined: BTreeMap<ClientId, f64>,
}

impl SimilarityRow {
    pub fn new(owner: ClientId, sims: BTreeMap<ClientId, f64>) -> Self {
        let refined = sims.iter().map(|(&j, &s)| (j, refine(s))).collect();
        SimilarityRow { owner, sims, refined }
    }

    pub fn is_empty(&self) -> bool {
        self.sims.is_empty()
    }
}

/// Map a cosine similarity in `[-1, 1]` to `[0, 1]`.
pub fn refine(sim: f64) -> f64 {
    (sim + 1.0) / 2.0
}

/// Softmax of similarities at temperature `upsilon` over every neighbor in the row.
pub fn sampling_probs(row: &SimilarityRow, upsilon: f64) -> BTreeMap<ClientId, f64> {
    assert!(upsilon > 0.0, "sampling temperature must be positive");
    let ids: Vec<ClientId> = row.sims.keys().copied().collect();
    let scores: Vec<f64> = row.sims.values().copied().collect();
    ids.into_iter().zip(softmax(&scores, upsilon)).collect()
}

/// Softmax restricted to `coreset`, scaled by `1 - outside_mass` so that,
/// together with the unselected neighbors' unrestricted probabilities, the
/// distribution still sums to one.
pub fn restricted_probs(
    row: &SimilarityRow,
    upsilon: f64,
    coreset: &BTreeSet<ClientId>,
    outside_mass: f64,
) -> BTreeMap<ClientId, f64> {
    assert!(!coreset.is_empty(), "restricted_probs needs a nonempty coreset");
    assert!((0.0..1.0).contains(&outside_mass), "outside mass must be in [0, 1)");
    let ids: Vec<ClientId> = coreset.iter().copied().collect();
    let scores: Vec<f64> = ids
        .iter()
        .map(|j| *row.sims.get(j).expect("coreset member without a similarity"))
        .collect();
    ids.into_iter()
        .zip(softmax(&scores, upsilon))
        .map(|(j, p)| (j, p * (1.0 - outside_mass)))
        .collect()
}

/// Uncertainty `-sum e ln e` over refined similarities. The values are not
/// normalized first; each term is nonnegative on `[0, 1]`.
pub fn entropy_h<I: IntoIterator<Item = f64>>(refined: I) -> f64 {
    refined
        .into_iter()
        .map(|e| if e > 0.0 && e < 1.0 { -e * e.ln() } else { 0.0 })
        .sum()
}

/// `1 - sigmoid(h)`, computed as `sigmoid(-h)` so it stays positive for large h.
pub fn confidence(h: f64) -> f64 {
    sigmoid(-h)
}

pub fn threshold(tau: f64, conf: f64) -> f64 {
    tau * conf
}

/// Neighbors whose probability reaches `theta`, plus the client itself.
pub fn select_coreset(probs: &BTreeMap<ClientId, f64>, theta: f64, self_id: ClientId) -> BTreeSet<ClientId> {
    probs
        .iter()
        .filter(|(_, &p)| p >= theta)
        .map(|(&j, _)| j)
        .chain(std::iter::once(self_id))
        .collect()
}

/// Reference selection by gradient distance: the `budget` candidates whose
/// gradients are closest (Euclidean) to the target's, which minimizes the sum
/// of squared gradient distances over all `budget`-subsets. Ties go to the
/// lower id. Meant for checking proxy-based rankings on small instances.
pub fn coreset_oracle(grads: &BTreeMap<ClientId, Vec<f64>>, target: ClientId, budget: usize) -> BTreeSet<ClientId> {
    let anchor = &grads[&target];
    let mut ranked: Vec<(f64, ClientId)> = grads
        .iter()
        .filter(|(&j, _)| j != target)
        .map(|(&j, g)| (sq_dist(anchor, g), j))
        .collect();
    assert!(budget <= ranked.len(), "budget exceeds candidate count");
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(budget).map(|(_, j)| j).collect()
}

/// Sum of squared gradient distances from the target to a candidate set.
pub fn coreset_cost(grads: &BTreeMap<ClientId, Vec<f64>>, target: ClientId, set: &BTreeSet<ClientId>) -> f64 {
    set.iter().map(|j| sq_dist(&grads[&target], &grads[j])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(sims: &[(ClientId, f64)]) -> SimilarityRow {
        SimilarityRow::new(0, sims.iter().copied().collect())
    }

    #[test]
    fn equal_sims_split_evenly() {
        let p = sampling_probs(&row(&[(1, 0.3), (2, 0.3)]), 0.7);
        assert!((p[&1] - 0.5).abs() < 1e-15 && (p[&2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_two_neighbors() {
        let p = sampling_probs(&row(&[(1, 1.0), (2, 0.0)]), 1.0);
        let e = std::f64::consts::E;
        assert!((p[&1] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[&2] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((p[&1] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn cold_temperature_concentrates_on_argmax() {
        let p = sampling_probs(&row(&[(1, 0.2), (2, 0.25), (3, -0.5)]), 1e-4);
        assert!(p[&2] > 1.0 - 1e-12);
    }

    #[test]
    fn restricted_full_coreset_matches_unrestricted() {
        let r = row(&[(1, 0.1), (2, 0.9), (3, -0.3)]);
        let all: BTreeSet<_> = [1, 2, 3].into_iter().collect();
        let a = sampling_probs(&r, 0.5);
        let b = restricted_probs(&r, 0.5, &all, 0.0);
        for j in [1, 2, 3] {
            assert!((a[&j] - b[&j]).abs() < 1e-15);
        }
    }

    #[test]
    fn restricted_single_member() {
        let r = row(&[(1, 0.1), (2, 0.9)]);
        let one: BTreeSet<_> = [2].into_iter().collect();
        let p = restricted_probs(&r, 0.5, &one, 0.3);
        assert!((p[&2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn entropy_closed_forms() {
        assert!((entropy_h([0.5]) - 0.34657).abs() < 1e-5);
        assert!((entropy_h([0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(entropy_h([1.0 - 1e-12, 1.0 - 1e-12]) < 1e-10);
        assert_eq!(entropy_h([]), 0.0);
    }

    #[test]
    fn confidence_closed_forms() {
        assert_eq!(confidence(0.0), 0.5);
        assert!((confidence(std::f64::consts::LN_2 / 2.0) - (std::f64::consts::SQRT_2 - 1.0)).abs() < 1e-12);
        assert!(confidence(800.0) < 1e-300);
        assert!(confidence(40.0) > 0.0);
    }

    #[test]
    fn threshold_closed_forms() {
        assert_eq!(threshold(0.5, 0.8), 0.4);
        assert_eq!(threshold(0.5, 0.5), 0.25);
    }

    #[test]
    fn select_examples() {
        let probs: BTreeMap<ClientId, f64> = [(1, 0.5), (2, 0.3), (3, 0.2)].into_iter().collect();
        let sel = select_coreset(&probs, 0.25, 9);
        assert_eq!(sel, [1, 2, 9].into_iter().collect());
        assert_eq!(select_coreset(&probs, 0.0, 9).len(), 4);
        assert_eq!(select_coreset(&probs, 0.6, 9), [9].into_iter().collect());
    }

    #[test]
    fn oracle_picks_nearest() {
        let grads: BTreeMap<ClientId, Vec<f64>> = [(0, vec![0.0, 0.0]), (1, vec![0.0, 1.0]), (2, vec![0.0, 3.0])]
            .into_iter()
            .collect();
        assert_eq!(coreset_oracle(&grads, 0, 1), [1].into_iter().collect());
    }

    #[test]
    fn oracle_identical_gradients_cost_zero() {
        let grads: BTreeMap<ClientId, Vec<f64>> = (0..4).map(|j| (j, vec![1.0, 2.0])).collect();
        let set = coreset_oracle(&grads, 0, 2);
        assert_eq!(set.len(), 2);
        assert_eq!(coreset_cost(&grads, 0, &set), 0.0);
    }

    proptest! {
        #[test]
        fn probs_shift_invariant(
            sims in prop::collection::vec(-1.0f64..1.0, 1..8),
            shift in -3.0f64..3.0,
            upsilon in 0.05f64..2.0,
        ) {
            let a = row(&sims.iter().copied().enumerate().collect::<Vec<_>>());
            let b = row(&sims.iter().map(|s| s + shift).enumerate().collect::<Vec<_>>());
            let (pa, pb) = (sampling_probs(&a, upsilon), sampling_probs(&b, upsilon));
            for j in pa.keys() {
                prop_assert!((pa[j] - pb[j]).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_independent_of_temperature(
            sims in prop::collection::vec(-1.0f64..1.0, 2..8),
            u1 in 0.05f64..2.0,
            u2 in 0.05f64..2.0,
        ) {
            let r = row(&sims.iter().copied().enumerate().collect::<Vec<_>>());
            let arg = |p: &BTreeMap<ClientId, f64>| {
                p.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(&j, _)| j).unwrap()
            };
            let (a, b) = (sampling_probs(&r, u1), sampling_probs(&r, u2));
            prop_assert_eq!(r.sims[&arg(&a)], r.sims[&arg(&b)]);
        }

        #[test]
        fn raising_threshold_never_adds(
            probs in prop::collection::vec(0.0f64..1.0, 1..10),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let p: BTreeMap<ClientId, f64> = probs.iter().copied().enumerate().map(|(j, v)| (j + 1, v)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(select_coreset(&p, hi, 0).is_subset(&select_coreset(&p, lo, 0)));
        }

        #[test]
        fn entropy_nonnegative_and_threshold_below_tau(
            sims in prop::collection::vec(-1.0f64..=1.0, 0..30),
            tau in 1e-3f64..5.0,
        ) {
            let h = entropy_h(sims.iter().map(|&s| refine(s)));
            prop_assert!(h >= 0.0);
            let theta = threshold(tau, confidence(h));
            prop_assert!(theta > 0.0 && theta < tau);
        }
    }
}
