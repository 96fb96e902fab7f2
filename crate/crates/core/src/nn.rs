//! Small fully connected networks with hand-written reverse-mode gradients,
//! a tanh-squashed Gaussian policy head, Adam, and finite-difference checks.
//!
//! Batches are column-major: each column of an input matrix is one sample.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Multilayer perceptron: tanh hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// `weights[l]` has shape `sizes[l + 1] × sizes[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    sizes: Vec<usize>,
    /// Input of each layer; entry 0 is the network input.
    inputs: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend_from_slice(w.as_slice());
            v.extend_from_slice(b.as_slice());
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::contract(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights: sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: sizes[1..].iter().map(|&n| DVector::zeros(n)).collect(),
        })
    }

    /// Scaled Gaussian initialisation (variance `1 / fan_in`); the output
    /// layer is additionally scaled by `out_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Result<Self> {
        let mut m = Mlp::zeros(sizes)?;
        let last = m.weights.len() - 1;
        for (l, w) in m.weights.iter_mut().enumerate() {
            let gain = if l == last { out_gain } else { 1.0 };
            let s = gain / (w.ncols() as f64).sqrt();
            w.iter_mut().for_each(|v| *v = s * { let z: f64 = StandardNormal.sample(rng); z });
        }
        Ok(m)
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend_from_slice(w.as_slice());
            v.extend_from_slice(b.as_slice());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::contract("flat parameter length mismatch"));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order, for optimizers.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            v.push(w.as_mut_slice());
            v.push(b.as_mut_slice());
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Forward pass over a batch (`n_inputs × n`).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, MlpCache)> {
        if x.nrows() != self.n_inputs() {
            return Err(Error::contract(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.n_inputs()
            )));
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            inputs.push(a);
            a = z;
        }
        Ok((
            a,
            MlpCache {
                sizes: self.sizes.clone(),
                inputs,
            },
        ))
    }

    /// Forward pass for a single input, without a cache.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::contract("input dimension mismatch"));
        }
        let last = self.weights.len() - 1;
        let mut a = DVector::from_column_slice(x);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a + b;
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a.as_slice().to_vec())
    }

    /// Reverse pass: gradients of a scalar loss given `dL/d output`.
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, upstream: &DMatrix<f64>) -> Result<(MlpGrads, DMatrix<f64>)> {
        if cache.sizes != self.sizes || cache.inputs.len() != self.weights.len() {
            return Err(Error::contract("cache does not belong to this network"));
        }
        let n = cache.inputs[0].ncols();
        if upstream.shape() != (self.n_outputs(), n) {
            return Err(Error::contract("upstream gradient shape does not match the cached batch"));
        }
        let mut gw = Vec::with_capacity(self.weights.len());
        let mut gb = Vec::with_capacity(self.weights.len());
        let mut g = upstream.clone();
        for l in (0..self.weights.len()).rev() {
            let a_in = &cache.inputs[l];
            gw.push(&g * a_in.transpose());
            gb.push(g.column_sum());
            let mut g_in = self.weights[l].transpose() * &g;
            if l > 0 {
                // Input of layer l is tanh output of layer l-1.
                g_in.zip_apply(a_in, |gv, av| *gv *= 1.0 - av * av);
            }
            g = g_in;
        }
        gw.reverse();
        gb.reverse();
        Ok((MlpGrads { weights: gw, biases: gb }, g))
    }
}

/// Numerically stable `log(1 - tanh(u)^2)`.
pub fn log1m_tanh_sq(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Gaussian policy over a pre-squash variable `u`, mapped into
/// `(a_min, a_max)` by `a = a_min + (a_max - a_min)(tanh u + 1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Outputs `[mean, raw log-std]`.
    pub net: Mlp,
    pub a_min: f64,
    pub a_max: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

/// Distribution parameters at one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDist {
    pub mean: f64,
    pub log_std: f64,
    /// Raw log-std lies inside the clamp range, so gradients pass through.
    pub log_std_free: bool,
}

impl Policy {
    pub fn new(net: Mlp, a_min: f64, a_max: f64, log_std_min: f64, log_std_max: f64) -> Result<Self> {
        if net.n_outputs() != 2 {
            return Err(Error::contract("policy network must output [mean, log-std]"));
        }
        if !(a_max > a_min) || !(log_std_max > log_std_min) {
            return Err(Error::contract("policy bounds must be increasing"));
        }
        Ok(Policy {
            net,
            a_min,
            a_max,
            log_std_min,
            log_std_max,
        })
    }

    /// Two tanh hidden layers, small mean head, log-std head biased to
    /// `init_log_std`.
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        bounds: (f64, f64),
        log_std_range: (f64, f64),
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let mut net = Mlp::init(&sizes, 0.01, rng)?;
        let last = net.biases.len() - 1;
        net.biases[last][1] = init_log_std;
        Policy::new(net, bounds.0, bounds.1, log_std_range.0, log_std_range.1)
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.a_max - self.a_min)
    }

    fn dist_from(&self, out: &[f64]) -> PolicyDist {
        let raw = out[1];
        PolicyDist {
            mean: out[0],
            log_std: raw.clamp(self.log_std_min, self.log_std_max),
            log_std_free: raw > self.log_std_min && raw < self.log_std_max,
        }
    }

    pub fn dist(&self, obs: &[f64]) -> Result<PolicyDist> {
        check_finite(obs)?;
        Ok(self.dist_from(&self.net.forward_one(obs)?))
    }

    pub fn squash(&self, u: f64) -> f64 {
        self.a_min + self.half_width() * (u.tanh() + 1.0)
    }

    /// Inverse of [`squash`](Self::squash); the action must lie strictly
    /// inside the bounds.
    pub fn unsquash(&self, action: f64) -> Result<f64> {
        if !(action > self.a_min && action < self.a_max) {
            return Err(Error::Domain(format!(
                "action {action} not strictly inside ({}, {})",
                self.a_min, self.a_max
            )));
        }
        let y = (action - self.a_min) / self.half_width() - 1.0;
        Ok(y.atanh())
    }

    /// Log density of the squashed action corresponding to `u`.
    pub fn log_prob_u(&self, d: &PolicyDist, u: f64) -> f64 {
        let z = (u - d.mean) * (-d.log_std).exp();
        -0.5 * z * z - d.log_std - HALF_LN_2PI - log1m_tanh_sq(u) - self.half_width().ln()
    }

    /// Draw `(action, log_prob, u)`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(f64, f64, f64)> {
        let d = self.dist(obs)?;
        let eps: f64 = StandardNormal.sample(rng);
        let u = d.mean + d.log_std.exp() * eps;
        let mut a = self.squash(u);
        // Keep the action strictly interior when tanh saturates in floating point.
        if a <= self.a_min {
            a = self.a_min.next_up();
        } else if a >= self.a_max {
            a = self.a_max.next_down();
        }
        Ok((a, self.log_prob_u(&d, u), u))
    }

    pub fn log_prob(&self, obs: &[f64], action: f64) -> Result<f64> {
        let u = self.unsquash(action)?;
        let d = self.dist(obs)?;
        Ok(self.log_prob_u(&d, u))
    }

    /// Entropy of the base Gaussian, `0.5 ln(2πe σ²)`.
    pub fn entropy(&self, obs: &[f64]) -> Result<f64> {
        Ok(gaussian_entropy(self.dist(obs)?.log_std))
    }

    /// Deterministic action: the squashed mean.
    pub fn mean_action(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.squash(self.dist(obs)?.mean))
    }

    /// Largest attainable log density, reached at `u = 0`, `σ` minimal.
    pub fn log_prob_upper_bound(&self) -> f64 {
        -self.log_std_min - HALF_LN_2PI - self.half_width().ln()
    }

    /// Batched log-probabilities of pre-squash values `u` and the pieces
    /// needed to differentiate them.
    pub fn log_prob_batch(&self, obs: &DMatrix<f64>, u: &[f64]) -> Result<BatchLogProb> {
        if obs.ncols() != u.len() {
            return Err(Error::contract("observation and action counts differ"));
        }
        let (out, cache) = self.net.forward(obs)?;
        let n = u.len();
        let mut logp = Vec::with_capacity(n);
        let mut dmu = Vec::with_capacity(n);
        let mut dls = Vec::with_capacity(n);
        let mut log_std = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.dist_from(&[out[(0, i)], out[(1, i)]]);
            let inv_var = (-2.0 * d.log_std).exp();
            let diff = u[i] - d.mean;
            logp.push(self.log_prob_u(&d, u[i]));
            dmu.push(diff * inv_var);
            dls.push(if d.log_std_free { diff * diff * inv_var - 1.0 } else { 0.0 });
            log_std.push(d.log_std);
        }
        Ok(BatchLogProb {
            logp,
            dlogp_dmean: dmu,
            dlogp_dlogstd: dls,
            log_std,
            cache,
        })
    }

    /// Parameter gradient of `Σ_i w_i · log π(a_i | s_i)`.
    pub fn logp_weighted_grad(&self, b: &BatchLogProb, w: &[f64]) -> Result<MlpGrads> {
        let n = w.len();
        let mut g = DMatrix::zeros(2, n);
        for i in 0..n {
            g[(0, i)] = w[i] * b.dlogp_dmean[i];
            g[(1, i)] = w[i] * b.dlogp_dlogstd[i];
        }
        Ok(self.net.backward(&b.cache, &g)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct BatchLogProb {
    pub logp: Vec<f64>,
    pub dlogp_dmean: Vec<f64>,
    pub dlogp_dlogstd: Vec<f64>,
    pub log_std: Vec<f64>,
    cache: MlpCache,
}

pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E).ln() + log_std
}

fn check_finite(obs: &[f64]) -> Result<()> {
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite observation".into()));
    }
    Ok(())
}

/// Adam optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(net: &Mlp) -> Self {
        let shapes: Vec<usize> = net
            .weights
            .iter()
            .zip(&net.biases)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .collect();
        Adam::new(&shapes)
    }

    /// One descent step `θ ← θ - lr · m̂ / (√v̂ + ε)`. Returns `false`, leaving
    /// everything untouched, when a gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<bool> {
        if !(lr > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(Error::contract("optimizer shapes do not match parameters"));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Ok(false);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(true)
    }

    /// Descent step on an MLP.
    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &MlpGrads, lr: f64) -> Result<bool> {
        let gs: Vec<&[f64]> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect();
        self.step(&mut net.tensors_mut(), &gs, lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub probes: usize,
}

/// Relative error `|a - b| / max(1e-12, |a| + |b|)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}

/// Compare an analytic gradient with central differences at `probes`
/// randomly chosen coordinates.
pub fn grad_check<F, R>(loss: F, params: &[f64], grad: &[f64], probes: usize, h: f64, rng: &mut R) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if probes == 0 || !(h > 0.0) {
        return Err(Error::contract("grad check needs probes >= 1 and h > 0"));
    }
    if params.len() != grad.len() || params.is_empty() {
        return Err(Error::contract("gradient and parameter lengths differ"));
    }
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        probes,
    };
    for _ in 0..probes {
        let i = rng.random_range(0..p.len());
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let e = rel_error(grad[i], fd);
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 4, 2]).unwrap();
        let (y, _) = m.forward(&DMatrix::from_element(3, 2, 1.5)).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_forward_and_backward() {
        let mut m = Mlp::zeros(&[1, 1]).unwrap();
        m.weights[0][(0, 0)] = 2.0;
        m.biases[0][0] = 1.0;
        let x = DMatrix::from_element(1, 1, 3.0);
        let (y, cache) = m.forward(&x).unwrap();
        assert_eq!(y[(0, 0)], 7.0);
        let (g, gx) = m.backward(&cache, &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert_eq!(g.weights[0][(0, 0)], 1.5);
        assert_eq!(g.biases[0][0], 0.5);
        assert_eq!(gx[(0, 0)], 1.0);
        let (g0, _) = m.backward(&cache, &DMatrix::zeros(1, 1)).unwrap();
        assert!(g0.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::zeros(&[3, 2]).unwrap();
        assert!(m.forward(&DMatrix::zeros(2, 1)).is_err());
        let other = Mlp::zeros(&[3, 4, 2]).unwrap();
        let (_, cache) = other.forward(&DMatrix::zeros(3, 1)).unwrap();
        assert!(m.backward(&cache, &DMatrix::zeros(2, 1)).is_err());
        let (_, cache) = m.forward(&DMatrix::zeros(3, 2)).unwrap();
        assert!(m.backward(&cache, &DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn log1m_tanh_sq_is_stable() {
        for u in [-30.0, -3.0, -0.2, 0.0, 0.7, 5.0, 400.0] {
            let direct = (1.0 - (u as f64).tanh().powi(2)).ln();
            let stable = log1m_tanh_sq(u);
            if direct.is_finite() && u.abs() < 5.0 {
                assert!((direct - stable).abs() < 1e-10, "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    fn unit_policy(mean: f64, log_std: f64) -> Policy {
        let mut net = Mlp::zeros(&[1, 2]).unwrap();
        net.biases[0][0] = mean;
        net.biases[0][1] = log_std;
        Policy::new(net, -1.0, 1.0, -5.0, 1.0).unwrap()
    }

    #[test]
    fn standard_normal_log_prob_at_origin() {
        let p = unit_policy(0.0, 0.0);
        assert!((p.log_prob(&[0.0], 0.0).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn log_prob_rejects_bounds() {
        let p = unit_policy(0.0, 0.0);
        assert!(matches!(p.log_prob(&[0.0], 1.0), Err(Error::Domain(_))));
        assert!(matches!(p.log_prob(&[0.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_closed_form() {
        assert!((unit_policy(0.0, 0.0).entropy(&[0.0]).unwrap() - 1.418_938_533_204_672_7).abs() < 1e-12);
        let e1 = unit_policy(0.0, 0.0).entropy(&[0.0]).unwrap();
        let e2 = unit_policy(0.0, 2f64.ln()).entropy(&[0.0]).unwrap();
        assert!((e2 - e1 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sample_round_trips_log_prob() {
        let mut r = rng();
        let p = Policy::init(3, &[8, 8], (0.4, 1.05), (-5.0, 1.0), -1.0, &mut r).unwrap();
        for _ in 0..200 {
            let obs = [r.random::<f64>(), r.random::<f64>(), -r.random::<f64>()];
            let (a, lp, _) = p.sample(&obs, &mut r).unwrap();
            assert!(a > 0.4 && a < 1.05);
            assert!((p.log_prob(&obs, a).unwrap() - lp).abs() < 1e-10);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(&[1, 2]);
        let mut a = [0.0];
        let mut b = [1.0, 2.0];
        adam.step(&mut [&mut a, &mut b], &[&[1.0], &[0.0, 0.0]], 0.1).unwrap();
        assert!((a[0] + 0.1).abs() < 1e-8);
        assert_eq!(b, [1.0, 2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_skips_non_finite() {
        let mut adam = Adam::new(&[1]);
        let mut a = [0.0];
        assert!(!adam.step(&mut [&mut a], &[&[f64::NAN]], 0.1).unwrap());
        assert_eq!((a[0], adam.step), (0.0, 0));
    }

    #[test]
    fn grad_check_quadratic() {
        let theta = [0.3, -1.2, 2.5, 0.01];
        let rep = grad_check(|p| 0.5 * p.iter().map(|v| v * v).sum::<f64>(), &theta, &theta, 20, 1e-5, &mut rng()).unwrap();
        assert!(rep.max_rel_error < 1e-9);
        assert!(grad_check(|_| 0.0, &theta, &theta, 1, 0.0, &mut rng()).is_err());
    }
}
