//! Small dense network for Q-value regression: ReLU hidden layers, identity
//! output, hand-written reverse mode, Adam, and global-norm clipping.
//!
//! Parameters live in one flat `Vec<f64>`; per layer the weight matrix is
//! stored row-major (`out x in`) followed by the bias vector. Gradients and
//! Adam moments use the same layout.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input, three hidden layers of 64, one output per action.
pub const DQN_LAYER_SIZES: [usize; 5] = [6, 64, 64, 64, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Argument(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_sizes(sizes)?;
        if params.len() != param_count(sizes) {
            return Err(Error::Argument(format!(
                "expected {} parameters for {sizes:?}, got {}",
                param_count(sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("parameters must be finite".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Argument(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_size()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Activations of every layer, input first, output last.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let last = self.sizes.len() - 2;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &acts[layer];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    let z = biases[j] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if layer < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).pop().expect("at least one layer"))
    }

    pub fn forward_batch<I: AsRef<[f64]>>(&self, inputs: &[I]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.forward(x.as_ref())).collect()
    }

    /// Gradient of a loss that depends only on output `action`, given
    /// `dloss_dq = dL/dQ[action]`.
    pub fn backward(&self, input: &[f64], action: usize, dloss_dq: f64) -> Result<Gradient> {
        let mut grad = Gradient::zeros(self.num_params());
        self.accumulate_gradient(input, action, dloss_dq, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient for one sample into `grad`.
    pub fn accumulate_gradient(&self, input: &[f64], action: usize, dloss_dq: f64, grad: &mut Gradient) -> Result<()> {
        self.accumulate_gradient_with(input, action, grad, |_| dloss_dq).map(|_| ())
    }

    /// Single forward/backward pass: `upstream` maps the selected Q-value to
    /// `dL/dQ`. Returns the Q-value.
    pub fn accumulate_gradient_with<F: FnOnce(f64) -> f64>(
        &self,
        input: &[f64],
        action: usize,
        grad: &mut Gradient,
        upstream: F,
    ) -> Result<f64> {
        self.check_input(input)?;
        if action >= self.output_size() {
            return Err(Error::Argument(format!("action index {action} out of range")));
        }
        if grad.0.len() != self.num_params() {
            return Err(Error::Argument("gradient shape does not match network".into()));
        }
        let acts = self.activations(input);
        let q = acts[acts.len() - 1][action];
        let mut delta = vec![0.0; self.output_size()];
        delta[action] = upstream(q);

        let mut end = self.params.len();
        for layer in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let w_start = end - n_out - n_in * n_out;
            let b_start = end - n_out;
            let prev = &acts[layer];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                grad.0[b_start + j] += d;
                let row = &mut grad.0[w_start + j * n_in..w_start + (j + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += d * a;
                }
            }
            if layer > 0 {
                let weights = &self.params[w_start..b_start];
                let mut next = vec![0.0; n_in];
                for (j, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (n, w) in next.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                        *n += w * d;
                    }
                }
                // ReLU derivative, taken as 0 at the kink.
                for (n, a) in next.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
            end = w_start;
        }
        Ok(q)
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes
    }

    /// Overwrites this network's parameters with `source`'s.
    pub fn copy_from(&mut self, source: &Mlp) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::Config(format!(
                "architecture mismatch: {:?} vs {:?}",
                self.sizes, source.sizes
            )));
        }
        self.params.copy_from_slice(&source.params);
        Ok(())
    }
}

/// Gradient with the network's flat parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn zeros(n: usize) -> Self {
        Gradient(vec![0.0; n])
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Huber loss of `pred` against `target` and its derivative in `pred`.
pub fn huber(pred: f64, target: f64, delta: f64) -> (f64, f64) {
    let e = pred - target;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), e.clamp(-delta, delta))
    }
}

/// Scales `grads` down to `threshold` global L2 norm when it exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [f64], threshold: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > threshold {
        let scale = threshold / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub huber_delta: f64,
    pub clip_norm: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 1.0,
            clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::Argument(format!(
            "shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "sentrade-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of one named random stream, so training can be resumed exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub stream: String,
    /// ChaCha word position, decimal (it is a 128-bit counter).
    pub word_pos: String,
}

/// Everything needed to restore a trained Q-network bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub seed: u64,
    pub rng: Vec<RngPosition>,
    /// Whether the network was trained with the sentiment feature live.
    pub uses_sentiment: bool,
    pub env_steps: u64,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Mlp> {
        Mlp::from_params(&self.layer_sizes, self.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Integrity(format!("checkpoint encode failed: {e}")))
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::parse(source_name, e.line() as u64, format!("invalid checkpoint: {e}")))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("{source_name}: not a checkpoint (format `{}`)", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{source_name}: unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let net = ckpt.network()?;
        if ckpt.adam.m.len() != net.num_params() || ckpt.adam.v.len() != net.num_params() {
            return Err(Error::Config(format!("{source_name}: optimizer state does not match network")));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
