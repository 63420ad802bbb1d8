//! The two-block classifier: a shared featurizer `w` (affine + tanh) followed
//! by a personal linear head `beta`.
//!
//! Parameter layout, row-major:
//!
//! ```text
//! w    = [ W1 (hidden x d_in) | b1 (hidden) ]
//! beta = [ W2 (classes x hidden) | b2 (classes) ]
//! ```

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy};
use crate::rng::Rng;
use crate::types::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_in: usize,
    pub d_hidden: usize,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn new(d_in: usize, d_hidden: usize, num_classes: usize) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || num_classes == 0 {
            return Err(Error::config("model", "all model dimensions must be >= 1"));
        }
        Ok(ModelShape {
            d_in,
            d_hidden,
            num_classes,
        })
    }

    pub fn w_len(&self) -> usize {
        self.d_hidden * (self.d_in + 1)
    }

    pub fn beta_len(&self) -> usize {
        self.num_classes * (self.d_hidden + 1)
    }

    /// Length of the feature proxy: the gradient of the featurizer's final
    /// affine block, which for a single-layer featurizer is all of `w`.
    pub fn proxy_len(&self) -> usize {
        self.w_len()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> ModelParams {
        let mut w = vec![0.0; self.w_len()];
        let mut beta = vec![0.0; self.beta_len()];
        let a1 = (6.0 / (self.d_in + self.d_hidden) as f64).sqrt();
        let a2 = (6.0 / (self.d_hidden + self.num_classes) as f64).sqrt();
        for v in &mut w[..self.d_hidden * self.d_in] {
            *v = rng.random_range(-a1..a1);
        }
        for v in &mut beta[..self.num_classes * self.d_hidden] {
            *v = rng.random_range(-a2..a2);
        }
        ModelParams { w, beta }
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.w.len() != self.w_len() {
            return Err(Error::ShapeMismatch {
                expected: self.w_len(),
                actual: params.w.len(),
            });
        }
        if params.beta.len() != self.beta_len() {
            return Err(Error::ShapeMismatch {
                expected: self.beta_len(),
                actual: params.beta.len(),
            });
        }
        Ok(())
    }

    fn hidden(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let (d, h) = (self.d_in, self.d_hidden);
        let (weights, bias) = w.split_at(h * d);
        for (j, o) in out.iter_mut().enumerate() {
            let row = &weights[j * d..(j + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[j];
            *o = z.tanh();
        }
    }

    fn head(&self, beta: &[f64], act: &[f64], out: &mut [f64]) {
        let h = self.d_hidden;
        let (weights, bias) = beta.split_at(self.num_classes * h);
        for (c, o) in out.iter_mut().enumerate() {
            let row = &weights[c * h..(c + 1) * h];
            *o = row.iter().zip(act).map(|(a, b)| a * b).sum::<f64>() + bias[c];
        }
    }

    pub fn forward(&self, params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
        self.check(params)?;
        if x.len() != self.d_in {
            return Err(Error::ShapeMismatch {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        let mut act = vec![0.0; self.d_hidden];
        let mut logits = vec![0.0; self.num_classes];
        self.hidden(&params.w, x, &mut act);
        self.head(&params.beta, &act, &mut logits);
        Ok(logits)
    }

    pub fn predict(&self, params: &ModelParams, x: &[f64]) -> usize {
        let logits = self.forward(params, x).expect("shape-checked params");
        argmax(&logits)
    }

    /// Mean cross-entropy over `rows` of `data`.
    pub fn loss(&self, params: &ModelParams, data: &Dataset, rows: &[usize]) -> f64 {
        assert!(!rows.is_empty(), "loss on an empty batch");
        let mut act = vec![0.0; self.d_hidden];
        let mut logits = vec![0.0; self.num_classes];
        let mut total = 0.0;
        for &r in rows {
            self.hidden(&params.w, data.row(r), &mut act);
            self.head(&params.beta, &act, &mut logits);
            total += cross_entropy(&logits, data.label(r));
        }
        total / rows.len() as f64
    }

    pub fn full_loss(&self, params: &ModelParams, data: &Dataset) -> f64 {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.loss(params, data, &rows)
    }

    /// Mean loss and its exact gradient with respect to both blocks.
    pub fn loss_and_grads(&self, params: &ModelParams, data: &Dataset, rows: &[usize]) -> (f64, GradPair) {
        assert!(!rows.is_empty(), "gradient on an empty batch");
        let (d, h, k) = (self.d_in, self.d_hidden, self.num_classes);
        let mut g_w = vec![0.0; self.w_len()];
        let mut g_beta = vec![0.0; self.beta_len()];
        let mut act = vec![0.0; h];
        let mut logits = vec![0.0; k];
        let mut delta_h = vec![0.0; h];
        let scale = 1.0 / rows.len() as f64;
        let w2 = &params.beta[..k * h];
        let mut total = 0.0;

        for &r in rows {
            let x = data.row(r);
            let y = data.label(r);
            self.hidden(&params.w, x, &mut act);
            self.head(&params.beta, &act, &mut logits);
            total += cross_entropy(&logits, y);

            // dL/dlogits = softmax - onehot
            let probs = softmax_in_place(&mut logits);
            probs[y] -= 1.0;
            delta_h.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..k {
                let g = probs[c] * scale;
                axpy(g, &act, &mut g_beta[c * h..(c + 1) * h]);
                g_beta[k * h + c] += g;
                axpy(probs[c], &w2[c * h..(c + 1) * h], &mut delta_h);
            }
            for j in 0..h {
                let g = delta_h[j] * (1.0 - act[j] * act[j]) * scale;
                axpy(g, x, &mut g_w[j * d..(j + 1) * d]);
                g_w[h * d + j] += g;
            }
        }
        (total * scale, GradPair { g_w, g_beta })
    }

    pub fn grads(&self, params: &ModelParams, data: &Dataset, rows: &[usize]) -> GradPair {
        self.loss_and_grads(params, data, rows).1
    }

    /// Feature proxy: the featurizer-block gradient at `(shared_w, beta)` on
    /// `rows`.
    pub fn proxy(&self, shared_w: &[f64], beta: &[f64], data: &Dataset, rows: &[usize]) -> Vec<f64> {
        let params = ModelParams {
            w: shared_w.to_vec(),
            beta: beta.to_vec(),
        };
        self.grads(&params, data, rows).g_w
    }

    /// Fraction of correctly classified rows.
    pub fn accuracy(&self, params: &ModelParams, data: &Dataset) -> f64 {
        let mut act = vec![0.0; self.d_hidden];
        let mut logits = vec![0.0; self.num_classes];
        let correct = (0..data.len())
            .filter(|&r| {
                self.hidden(&params.w, data.row(r), &mut act);
                self.head(&params.beta, &act, &mut logits);
                argmax(&logits) == data.label(r)
            })
            .count();
        correct as f64 / data.len() as f64
    }

    /// The local update schedule: `k_beta` head steps with `w` frozen, then
    /// `k_w` featurizer steps against the finished head. Each step draws one
    /// minibatch.
    pub fn local_update(
        &self,
        params: &ModelParams,
        data: &Dataset,
        schedule: &LocalSchedule,
        rng: &mut Rng,
    ) -> Result<LocalOutcome, NonFinite> {
        let mut p = params.clone();
        let batcher = Batcher::new(schedule.batch_size);
        let mut last_loss = None;

        let mut velocity = vec![0.0; p.beta.len()];
        for _ in 0..schedule.k_beta {
            let rows = batcher.draw(data.len(), rng);
            let (loss, g) = self.loss_and_grads(&p, data, &rows);
            sgd_step(
                &mut p.beta,
                &g.g_beta,
                &mut velocity,
                schedule.eta_beta,
                schedule.momentum,
            );
            last_loss = Some(loss);
        }
        if !all_finite(&p.beta) {
            return Err(NonFinite);
        }

        let mut velocity = vec![0.0; p.w.len()];
        for _ in 0..schedule.k_w {
            let rows = batcher.draw(data.len(), rng);
            let (loss, g) = self.loss_and_grads(&p, data, &rows);
            sgd_step(&mut p.w, &g.g_w, &mut velocity, schedule.eta_w, schedule.momentum);
            last_loss = Some(loss);
        }
        if !all_finite(&p.w) {
            return Err(NonFinite);
        }
        Ok(LocalOutcome {
            params: p,
            last_batch_loss: last_loss,
        })
    }
}

fn sgd_step(x: &mut [f64], g: &[f64], velocity: &mut [f64], eta: f64, momentum: f64) {
    if momentum == 0.0 {
        axpy(-eta, g, x);
        return;
    }
    for ((xi, gi), vi) in x.iter_mut().zip(g).zip(velocity.iter_mut()) {
        *vi = momentum * *vi + gi;
        *xi -= eta * *vi;
    }
}

/// Gradients of the loss with respect to the two parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub g_w: Vec<f64>,
    pub g_beta: Vec<f64>,
}

impl GradPair {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.g_w.clone();
        v.extend_from_slice(&self.g_beta);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSchedule {
    pub k_beta: usize,
    pub k_w: usize,
    pub eta_beta: f64,
    pub eta_w: f64,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ModelParams,
    /// Loss of the final minibatch, if any step ran.
    pub last_batch_loss: Option<f64>,
}

/// A local update produced NaN or infinite parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite;

/// Draws minibatch row indices without replacement.
#[derive(Debug, Clone, Copy)]
pub struct Batcher {
    batch_size: usize,
}

impl Batcher {
    pub fn new(batch_size: usize) -> Self {
        Batcher { batch_size }
    }

    /// The whole shard when it is no larger than the batch size.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        if self.batch_size == 0 || self.batch_size >= n {
            return (0..n).collect();
        }
        let mut rows = index::sample(rng, n, self.batch_size).into_vec();
        rows.sort_unstable();
        rows
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    (lse - logits[label]).max(0.0)
}

fn softmax_in_place(logits: &mut [f64]) -> &mut [f64] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        z += *l;
    }
    logits.iter_mut().for_each(|l| *l /= z);
    logits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_setup(seed: u64) -> (ModelShape, ModelParams, Dataset) {
        let mut rng = seeded_rng(seed);
        let shape = ModelShape::new(4, 3, 3).unwrap();
        let mut p = shape.init(&mut rng);
        for v in p.w.iter_mut().chain(p.beta.iter_mut()) {
            *v = StandardNormal.sample(&mut rng);
        }
        let n = 6;
        let features = (0..n * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        (shape, p, Dataset::new(features, 4, labels, 3).unwrap())
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let shape = ModelShape::new(3, 2, 4).unwrap();
        let p = ModelParams::zeros(&shape);
        assert_eq!(shape.forward(&p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn zero_head_weights_give_bias() {
        let shape = ModelShape::new(2, 3, 2).unwrap();
        let mut p = shape.init(&mut seeded_rng(1));
        let bias = [0.7, -1.2];
        p.beta.iter_mut().for_each(|v| *v = 0.0);
        p.beta[6..].copy_from_slice(&bias);
        assert_eq!(shape.forward(&p, &[5.0, 9.0]).unwrap(), bias.to_vec());
        assert_eq!(shape.forward(&p, &[-1.0, 0.0]).unwrap(), bias.to_vec());
    }

    #[test]
    fn forward_rejects_bad_input() {
        let shape = ModelShape::new(2, 3, 2).unwrap();
        let p = shape.init(&mut seeded_rng(1));
        assert!(shape.forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let shape = ModelShape::new(2, 2, 5).unwrap();
        let p = ModelParams::zeros(&shape);
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 4], 5).unwrap();
        assert!((shape.loss(&p, &ds, &[0, 1]) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_loss_vanishes() {
        let shape = ModelShape::new(1, 1, 2).unwrap();
        let mut p = ModelParams::zeros(&shape);
        p.beta[2] = 50.0; // bias of class 0
        let ds = Dataset::new(vec![0.3], 1, vec![0], 2).unwrap();
        assert!(shape.loss(&p, &ds, &[0]) < 1e-20);
    }

    #[test]
    fn duplicated_rows_leave_loss_and_grad_unchanged() {
        let (shape, p, ds) = random_setup(3);
        let single = [2usize];
        let double = [2usize, 2];
        assert!((shape.loss(&p, &ds, &single) - shape.loss(&p, &ds, &double)).abs() < 1e-14);
        let (g1, g2) = (shape.grads(&p, &ds, &single), shape.grads(&p, &ds, &double));
        for (a, b) in g1.concat().iter().zip(g2.concat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn local_update_no_steps_is_identity() {
        let (shape, p, ds) = random_setup(4);
        let sched = LocalSchedule {
            k_beta: 0,
            k_w: 0,
            eta_beta: 0.1,
            eta_w: 0.1,
            batch_size: 2,
            momentum: 0.0,
        };
        let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.params, p);
        assert!(out.last_batch_loss.is_none());
    }

    #[test]
    fn local_update_zero_rate_is_identity() {
        let (shape, p, ds) = random_setup(5);
        let sched = LocalSchedule {
            k_beta: 3,
            k_w: 3,
            eta_beta: 0.0,
            eta_w: 0.0,
            batch_size: 2,
            momentum: 0.0,
        };
        let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.params, p);
    }

    #[test]
    fn local_update_block_isolation() {
        let (shape, p, ds) = random_setup(6);
        let mut sched = LocalSchedule {
            k_beta: 3,
            k_w: 0,
            eta_beta: 0.1,
            eta_w: 0.1,
            batch_size: 3,
            momentum: 0.5,
        };
        let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.params.w, p.w);
        assert_ne!(out.params.beta, p.beta);
        sched.k_beta = 0;
        sched.k_w = 3;
        let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.params.beta, p.beta);
        assert_ne!(out.params.w, p.w);
    }

    #[test]
    fn local_update_head_is_finished_before_featurizer() {
        // One head step then one featurizer step must equal doing them by hand
        // in that order on the full batch.
        let (shape, p, ds) = random_setup(7);
        let sched = LocalSchedule {
            k_beta: 1,
            k_w: 1,
            eta_beta: 0.05,
            eta_w: 0.05,
            batch_size: 0,
            momentum: 0.0,
        };
        let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
        let rows: Vec<usize> = (0..ds.len()).collect();
        let mut manual = p.clone();
        let g = shape.grads(&manual, &ds, &rows);
        axpy(-0.05, &g.g_beta, &mut manual.beta);
        let g = shape.grads(&manual, &ds, &rows);
        axpy(-0.05, &g.g_w, &mut manual.w);
        assert_eq!(out.params, manual);
    }

    #[test]
    fn tiny_full_batch_step_does_not_increase_loss() {
        for seed in 0..10 {
            let (shape, p, ds) = random_setup(100 + seed);
            let sched = LocalSchedule {
                k_beta: 1,
                k_w: 1,
                eta_beta: 1e-3,
                eta_w: 1e-3,
                batch_size: 0,
                momentum: 0.0,
            };
            let before = shape.full_loss(&p, &ds);
            let out = shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap();
            assert!(shape.full_loss(&out.params, &ds) <= before);
        }
    }

    #[test]
    fn diverging_update_is_reported() {
        let (shape, mut p, ds) = random_setup(8);
        p.w[0] = f64::NAN;
        let sched = LocalSchedule {
            k_beta: 0,
            k_w: 1,
            eta_beta: 0.1,
            eta_w: 0.1,
            batch_size: 0,
            momentum: 0.0,
        };
        assert_eq!(
            shape.local_update(&p, &ds, &sched, &mut seeded_rng(0)).unwrap_err(),
            NonFinite
        );
    }

    #[test]
    fn proxy_shape_and_identity() {
        let (shape, p, ds) = random_setup(9);
        let rows = [0, 1, 2];
        let a = shape.proxy(&p.w, &p.beta, &ds, &rows);
        let b = shape.proxy(&p.w, &p.beta, &ds, &rows);
        assert_eq!(a.len(), shape.d_hidden * (shape.d_in + 1));
        assert_eq!(crate::linalg::cosine_sim(&a, &b).value, 1.0);
    }

    #[test]
    fn batcher_draws_distinct_rows() {
        let b = Batcher::new(5);
        let rows = b.draw(20, &mut seeded_rng(1));
        assert_eq!(rows.len(), 5);
        let mut d = rows.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
        assert_eq!(b.draw(3, &mut seeded_rng(1)), vec![0, 1, 2]);
    }

    #[test]
    fn accuracy_bounds() {
        let (shape, p, ds) = random_setup(10);
        let acc = shape.accuracy(&p, &ds);
        assert!((0.0..=1.0).contains(&acc));
    }
}
