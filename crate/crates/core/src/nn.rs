//! Small dense networks with analytic gradients.
//!
//! Everything the agent learns lives in two networks: a Gaussian policy
//! (mean MLP plus state-independent log standard deviations) and a scalar
//! value MLP. Both use tanh hidden layers and a linear output. Gradients are
//! computed by hand-rolled reverse passes; parameters flatten to a single
//! `Vec<f64>` in a fixed order (per layer: weights row-major, then biases;
//! the policy appends its log-stds) so optimizers and consolidation can
//! treat a network as one vector.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Gain applied to hidden-layer weights at initialization.
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
/// Gain for the policy's output layer: near-zero initial mean keeps early
/// actions small.
pub const POLICY_OUT_GAIN: f64 = 0.01;
/// Gain for the value network's output layer.
pub const VALUE_OUT_GAIN: f64 = 1.0;

fn mat_to_flat(out: &mut Vec<f64>, w: &Array2<f64>, b: &Array1<f64>) {
    out.extend(w.iter());
    out.extend(b.iter());
}

#[derive(Clone, Debug)]
struct Layer {
    /// Shape (fan_out, fan_in).
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Returns a (rows, cols) matrix with orthonormal rows if rows <= cols,
/// orthonormal columns otherwise, scaled by `gain`. Twice-iterated
/// Gram-Schmidt on standard-normal draws.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = rows.max(cols);
    let m = rows.min(cols);
    // n x m Gaussian, orthonormalize the m columns.
    let mut q = Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal));
    for _pass in 0..2 {
        for j in 0..m {
            for k in 0..j {
                let dot = q.column(j).dot(&q.column(k));
                let col_k = q.column(k).to_owned();
                q.column_mut(j).zip_mut_with(&col_k, |x, &y| *x -= dot * y);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            q.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    let w = if rows <= cols { q.t().to_owned() } else { q };
    w * gain
}

/// Cached activations from a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[0]` is the input batch; `acts[l]` for `1 <= l < L` is the
    /// post-tanh output of layer `l`; `acts[L]` is the linear output.
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache always holds the input")
    }

    pub fn batch_len(&self) -> usize {
        self.acts[0].nrows()
    }
}

/// Gradient of some scalar loss with respect to a network's flat parameter
/// vector, in the same order as [`Mlp::params`].
pub type FlatGrad = Vec<f64>;

/// Multi-layer perceptron: tanh hidden layers, linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl Mlp {
    /// `sizes` lists layer widths input-first, e.g. `[5, 64, 64, 1]`.
    /// Weights are orthogonally initialized (hidden gain sqrt(2), output
    /// layer `out_gain`); biases start at zero.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output sizes"));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!("zero-width layer in {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let gain = if i == last { out_gain } else { HIDDEN_GAIN };
                Layer {
                    w: orthogonal(pair[1], pair[0], gain, rng),
                    b: Array1::zeros(pair[1]),
                }
            })
            .collect();
        Ok(Mlp { sizes: sizes.to_vec(), layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).acts.pop().unwrap()
    }

    /// Forward pass that keeps the per-layer activations for [`Self::backward`].
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        assert_eq!(x.ncols(), self.input_dim(), "input width mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.w.t());
            z += &layer.b;
            if i != last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        ForwardCache { acts }
    }

    /// Single-sample forward pass without array overhead.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut a: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.b.to_vec();
            for (r, nv) in next.iter_mut().enumerate() {
                let row = layer.w.row(r);
                let mut acc = 0.0;
                for (w, &av) in row.iter().zip(a.iter()) {
                    acc += w * av;
                }
                *nv += acc;
                if i != last {
                    *nv = nv.tanh();
                }
            }
            a = next;
        }
        a
    }

    /// Reverse pass: given d(loss)/d(output) for the batch in `cache`,
    /// returns d(loss)/d(params) flattened in parameter order.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> FlatGrad {
        let l = self.layers.len();
        assert_eq!(d_out.nrows(), cache.batch_len(), "batch size mismatch");
        assert_eq!(d_out.ncols(), self.output_dim(), "output width mismatch");
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(l);
        let mut dz = d_out.to_owned();
        for i in (0..l).rev() {
            let dw = dz.t().dot(&cache.acts[i]);
            let db = dz.sum_axis(Axis(0));
            if i > 0 {
                let da = dz.dot(&self.layers[i].w);
                // tanh'(z) expressed through the cached activation.
                dz = da * cache.acts[i].mapv(|a| 1.0 - a * a);
            }
            grads.push((dw, db));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (dw, db) in &grads {
            mat_to_flat(&mut flat, dw, db);
        }
        flat
    }

    /// Parameters flattened per layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            mat_to_flat(&mut flat, &layer.w, &layer.b);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::input(format!(
                "parameter vector has length {}, network needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            for w in layer.w.iter_mut() {
                *w = flat[off];
                off += 1;
            }
            for b in layer.b.iter_mut() {
                *b = flat[off];
                off += 1;
            }
        }
        Ok(())
    }
}

/// Diagonal Gaussian policy: an MLP produces the action mean; log standard
/// deviations are free parameters shared across states.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    mean_net: Mlp,
    log_std: Vec<f64>,
}

/// `0.5 * ln(2*pi*e)`, the per-dimension entropy of a unit Gaussian.
const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;
/// `ln(2*pi)`.
const LN_2PI: f64 = 1.837_877_066_409_345_4;

impl GaussianPolicy {
    pub fn new(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Ok(GaussianPolicy {
            mean_net: Mlp::new(&sizes, POLICY_OUT_GAIN, rng)?,
            log_std: vec![0.0; act_dim],
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Action mean for one observation (the deterministic/greedy action).
    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.mean_net.forward_one(obs)
    }

    pub fn mean_batch_cached(&self, obs: ArrayView2<f64>) -> ForwardCache {
        self.mean_net.forward_cached(obs)
    }

    /// Samples an action and returns it with its log-density.
    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let mu = self.mean(obs);
        let mut action = Vec::with_capacity(mu.len());
        for (m, ls) in mu.iter().zip(self.log_std.iter()) {
            let z: f64 = rng.sample(StandardNormal);
            action.push(m + ls.exp() * z);
        }
        let logp = log_prob_parts(&mu, &self.log_std, &action);
        (action, logp)
    }

    /// Log-density of `action` at `obs` under the current parameters.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        log_prob_parts(&self.mean(obs), &self.log_std, action)
    }

    /// Batched log-densities given a cached mean forward pass.
    pub fn log_prob_batch(&self, cache: &ForwardCache, actions: ArrayView2<f64>) -> Array1<f64> {
        let mu = cache.output();
        assert_eq!(mu.dim(), actions.dim(), "action batch shape mismatch");
        let n = mu.nrows();
        let mut out = Array1::zeros(n);
        for k in 0..n {
            let mut acc = 0.0;
            for (i, &ls) in self.log_std.iter().enumerate() {
                let inv_var = (-2.0 * ls).exp();
                let diff = actions[(k, i)] - mu[(k, i)];
                acc += -0.5 * LN_2PI - ls - 0.5 * diff * diff * inv_var;
            }
            out[k] = acc;
        }
        out
    }

    /// Entropy of the action distribution (state-independent for a diagonal
    /// Gaussian with fixed log-std).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| HALF_LN_2PI_E + ls).sum()
    }

    /// Reverse pass through mean net and log-std head. `d_mu` is
    /// d(loss)/d(mean) per sample; `d_log_std` is d(loss)/d(log_std) already
    /// summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, d_mu: ArrayView2<f64>, d_log_std: &[f64]) -> FlatGrad {
        assert_eq!(d_log_std.len(), self.act_dim());
        let mut flat = self.mean_net.backward(cache, d_mu);
        flat.extend_from_slice(d_log_std);
        flat
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    /// Mean-network parameters followed by log-stds.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = self.mean_net.params();
        flat.extend_from_slice(&self.log_std);
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::input(format!(
                "parameter vector has length {}, policy needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let split = self.mean_net.param_count();
        self.mean_net.set_params(&flat[..split])?;
        self.log_std.copy_from_slice(&flat[split..]);
        Ok(())
    }
}

/// Log-density of a diagonal Gaussian.
pub fn log_prob_parts(mu: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    debug_assert_eq!(mu.len(), action.len());
    let mut acc = 0.0;
    for i in 0..mu.len() {
        let ls = log_std[i];
        let diff = action[i] - mu[i];
        let inv_var = (-2.0 * ls).exp();
        acc += -0.5 * LN_2PI - ls - 0.5 * diff * diff * inv_var;
    }
    acc
}

/// Per-sample gradient of the log-density with respect to the mean and the
/// log-stds: `((a - mu) / sigma^2, (a - mu)^2 / sigma^2 - 1)`.
pub fn log_prob_grads(mu: &[f64], log_std: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d_mu = Vec::with_capacity(mu.len());
    let mut d_ls = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        let inv_var = (-2.0 * log_std[i]).exp();
        let diff = action[i] - mu[i];
        d_mu.push(diff * inv_var);
        d_ls.push(diff * diff * inv_var - 1.0);
    }
    (d_mu, d_ls)
}

/// Adam optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one descent step in place: `params -= lr * mhat / (sqrt(vhat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/param size mismatch");
        assert_eq!(grad.len(), self.m.len(), "optimizer/grad size mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    /// Steps taken so far.
    pub fn timestep(&self) -> u64 {
        self.t
    }
}
