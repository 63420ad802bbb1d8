//! Dense vector kernels over `f64` slices.

/// Norms below this are treated as zero when computing cosine similarity.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Cosine similarity together with a flag for zero-norm inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input had (numerically) zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Cosine {
    assert_eq!(a.len(), b.len(), "cosine_sim on vectors of different length");
    let (na, nb) = (norm(a), norm(b));
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    Cosine {
        value: (dot(a, b) / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let z: f64 = out.iter().sum();
    scale(1.0 / z, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).value, 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).value, 0.0);
        assert_eq!(cosine_sim(&[1.0, 1.0], &[1.0, -1.0]).value, 0.0);
    }

    #[test]
    fn cosine_zero_vector_is_flagged() {
        let c = cosine_sim(&[0.0, 0.0], &[1.0, 2.0]);
        assert_eq!(c.value, 0.0);
        assert!(c.degenerate);
        assert!(!cosine_sim(&[1.0, 0.0], &[1.0, 2.0]).degenerate);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0], 0.5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn sigmoid_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }

    fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_self_is_one(a in nonzero_vec(6)) {
            prop_assert!((cosine_sim(&a, &a).value - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cosine_positive_scale_invariant(
            a in nonzero_vec(5),
            b in nonzero_vec(5),
            c in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let lhs = cosine_sim(&scaled, &b).value;
            let rhs = cosine_sim(&a, &b).value;
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&lhs));
        }
    }
}
