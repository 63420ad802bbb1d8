//! Clip-and-noise privacy perturbation for transmitted quantities.

use rand_distr::{Distribution, Normal};

use crate::config::NoiseSpec;
use crate::linalg::norm;
use crate::rng::Rng;

/// Clip `v` to norm at most `clip`, then add `N(0, (sigma2 * clip / batch_l)^2)`
/// to every coordinate.
pub fn inject_noise(v: &[f64], sigma2: f64, clip: f64, batch_l: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(sigma2 >= 0.0 && clip > 0.0 && batch_l >= 1, "invalid noise parameters");
    let n = norm(v);
    let factor = if n > clip { clip / n } else { 1.0 };
    let mut out: Vec<f64> = v.iter().map(|x| x * factor).collect();
    if sigma2 > 0.0 {
        let normal = Normal::new(0.0, sigma2 * clip / batch_l as f64).expect("finite std");
        for x in &mut out {
            *x += normal.sample(rng);
        }
    }
    out
}

pub(crate) fn perturb(spec: Option<&NoiseSpec>, v: &[f64], rng: &mut Rng) -> Vec<f64> {
    match spec {
        Some(s) => inject_noise(v, s.sigma2, s.clip, s.batch_l, rng),
        None => v.to_vec(),
    }
}

pub(crate) fn perturb_scalar(spec: Option<&NoiseSpec>, v: f64, rng: &mut Rng) -> f64 {
    perturb(spec, &[v], rng)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn zero_noise_inside_ball_is_identity() {
        let v = vec![0.3, -0.4];
        assert_eq!(inject_noise(&v, 0.0, 1.0, 8, &mut seeded_rng(0)), v);
    }

    #[test]
    fn clipping_caps_norm() {
        let v = vec![3.0, 4.0]; // norm 5 = 2 * 2.5
        let out = inject_noise(&v, 0.0, 2.5, 1, &mut seeded_rng(0));
        assert!((norm(&out) - 2.5).abs() < 1e-12);
        assert!((out[0] / out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn noise_std_matches_spec() {
        // std = sigma2 * clip / L = 3 * 2 / 4
        let v = vec![0.0; 100_000];
        let out = inject_noise(&v, 3.0, 2.0, 4, &mut seeded_rng(1));
        let n = out.len() as f64;
        let mean = out.iter().sum::<f64>() / n;
        let sd = (out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / 1.5 - 1.0).abs() < 0.05, "sd {sd}");
    }
}
