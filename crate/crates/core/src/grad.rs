//! Minimal MLP gradient engine.
//!
//! Plain-`Vec<f64>` networks with tanh hidden layers and an identity output
//! layer, reverse-mode backprop, and bias-corrected Adam. No graph, no
//! broadcasting: layer shapes are fixed at construction and every operation
//! validates them. Forward and backward never mutate parameters; all
//! mutation happens in [`adam_step`] / [`vec_adam_step`].
//!
//! Checkpoints are single JSON documents `{layer_sizes, weights, biases,
//! adam_state, step}` with weights as row-major nested arrays. Serialization
//! uses shortest-round-trip float formatting, so save/load round-trips are
//! bit-exact for finite values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Fully-connected network parameters. `weights[l]` is the row-major
/// `layer_sizes[l+1] x layer_sizes[l]` matrix of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Post-activation values of every layer for one input; `activations[0]`
/// is the input itself, the last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    d_weights: Vec<Vec<f64>>,
    d_biases: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradBuffer {
            d_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            d_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.d_weights {
            w.fill(0.0);
        }
        for b in &mut self.d_biases {
            b.fill(0.0);
        }
    }

    /// Multiply every entry by `k` (used for mini-batch averaging).
    pub fn scale(&mut self, k: f64) {
        for w in &mut self.d_weights {
            for g in w.iter_mut() {
                *g *= k;
            }
        }
        for b in &mut self.d_biases {
            for g in b.iter_mut() {
                *g *= k;
            }
        }
    }

    /// Sum of squared entries, for global-norm clipping.
    pub fn squared_norm(&self) -> f64 {
        let w: f64 = self.d_weights.iter().flatten().map(|g| g * g).sum();
        let b: f64 = self.d_biases.iter().flatten().map(|g| g * g).sum();
        w + b
    }

    pub fn weight_grads(&self, layer: usize) -> &[f64] {
        &self.d_weights[layer]
    }

    pub fn bias_grads(&self, layer: usize) -> &[f64] {
        &self.d_biases[layer]
    }
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must list at least input and output, all positive: {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|&o| vec![0.0; o]).collect();
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    /// Orthogonal-style initialization: hidden layers use gain sqrt(2),
    /// the output layer uses `output_gain` (0.01 for policy heads, 1.0 for
    /// value heads). Biases start at zero.
    pub fn init(layer_sizes: &[usize], output_gain: f64, rng: &mut Rng) -> Result<Self> {
        let mut net = Mlp::zeros(layer_sizes)?;
        let last = net.num_layers() - 1;
        for l in 0..net.num_layers() {
            let gain = if l == last { output_gain } else { std::f64::consts::SQRT_2 };
            let (out_dim, in_dim) = (layer_sizes[l + 1], layer_sizes[l]);
            net.weights[l] = orthogonal_matrix(out_dim, in_dim, gain, rng);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// Test hook: set one weight directly.
    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        let in_dim = self.layer_sizes[layer];
        self.weights[layer][row * in_dim + col] = value;
    }

    /// Test hook: set one bias directly.
    pub fn set_bias(&mut self, layer: usize, row: usize, value: f64) {
        self.biases[layer][row] = value;
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input dim {} vs network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass retaining every post-activation for backprop.
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (out_dim, in_dim) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            let prev = &activations[l];
            let w = &self.weights[l];
            let mut next = vec![0.0; out_dim];
            for o in 0..out_dim {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                let mut z = self.biases[l][o];
                for (wi, xi) in row.iter().zip(prev) {
                    z += wi * xi;
                }
                next[o] = if l == last { z } else { z.tanh() };
            }
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    /// Forward pass returning only the output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.activations.pop().expect("non-empty activations"))
    }

    /// Accumulate parameter gradients for one sample into `buf`, given the
    /// loss gradient with respect to the network output. The trace must come
    /// from `forward_trace` on this network.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        buf: &mut GradBuffer,
    ) -> Result<()> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output grad dim {} vs network output dim {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if trace.activations.len() != self.num_layers() + 1
            || trace.activations[0].len() != self.input_dim()
        {
            return Err(Error::ShapeMismatch("trace does not match network".into()));
        }
        let last = self.num_layers() - 1;
        // delta holds dLoss/d(post-activation) of the current layer output.
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (out_dim, in_dim) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            let post = &trace.activations[l + 1];
            // Identity output layer: dPre = dPost. Hidden: dtanh/dz = 1 - tanh^2.
            if l != last {
                for (d, a) in delta.iter_mut().zip(post) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &trace.activations[l];
            let dw = &mut buf.d_weights[l];
            for o in 0..out_dim {
                let d = delta[o];
                let row = &mut dw[o * in_dim..(o + 1) * in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                buf.d_biases[l][o] += d;
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![0.0; in_dim];
                for o in 0..out_dim {
                    let d = delta[o];
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += d * wi;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// One-shot gradient for a single sample: runs the forward pass
    /// internally and returns a fresh buffer.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<GradBuffer> {
        let trace = self.forward_trace(input)?;
        let mut buf = GradBuffer::zeros_like(self);
        self.backward_into(&trace, output_grad, &mut buf)?;
        Ok(buf)
    }
}

/// Row-major `out x in` matrix with orthonormal rows (out <= in) or columns
/// (out > in), scaled by `gain`, from a seeded Gaussian draw.
fn orthogonal_matrix(out_dim: usize, in_dim: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..out_dim)
        .map(|_| (0..in_dim).map(|_| rng.normal()).collect())
        .collect();
    if out_dim <= in_dim {
        gram_schmidt_rows(&mut m);
    } else {
        // Orthonormalize columns by running the same sweep on the transpose.
        let mut t: Vec<Vec<f64>> = (0..in_dim)
            .map(|c| (0..out_dim).map(|r| m[r][c]).collect())
            .collect();
        gram_schmidt_rows(&mut t);
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = t[c][r];
            }
        }
    }
    m.into_iter().flatten().map(|v| v * gain).collect()
}

fn gram_schmidt_rows(rows: &mut [Vec<f64>]) {
    for r in 0..rows.len() {
        for k in 0..r {
            let dot: f64 = rows[r].iter().zip(&rows[k]).map(|(a, b)| a * b).sum();
            let prev = rows[k].clone();
            for (v, p) in rows[r].iter_mut().zip(&prev) {
                *v -= dot * p;
            }
        }
        let norm: f64 = rows[r].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "degenerate draw in orthogonal init");
        for v in rows[r].iter_mut() {
            *v /= norm;
        }
    }
}

/// Adam moments shaped like an [`Mlp`], plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
        }
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.m_weights.len() == net.weights.len()
            && self
                .m_weights
                .iter()
                .zip(&net.weights)
                .all(|(m, w)| m.len() == w.len())
    }
}

#[inline]
fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, bc1: f64, bc2: f64, beta1: f64, beta2: f64, eps: f64) {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// One bias-corrected Adam step over all parameters. Rejects non-finite
/// gradient entries before touching any parameter, naming the bad layer.
pub fn adam_step(net: &mut Mlp, grads: &GradBuffer, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
    }
    if !state.matches(net) || grads.d_weights.len() != net.weights.len() {
        return Err(Error::ShapeMismatch("adam state or grad buffer does not match network".into()));
    }
    for (l, (dw, db)) in grads.d_weights.iter().zip(&grads.d_biases).enumerate() {
        if dw.len() != net.weights[l].len() || db.len() != net.biases[l].len() {
            return Err(Error::ShapeMismatch(format!("grad buffer layer {l} shape mismatch")));
        }
        if dw.iter().chain(db).any(|g| !g.is_finite()) {
            return Err(Error::PoisonedGradient { layer: l, context: "adam_step".into() });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (beta1, beta2, eps) = (state.beta1, state.beta2, state.epsilon);
    for l in 0..net.weights.len() {
        for i in 0..net.weights[l].len() {
            adam_update(
                &mut net.weights[l][i],
                grads.d_weights[l][i],
                &mut state.m_weights[l][i],
                &mut state.v_weights[l][i],
                lr,
                bc1,
                bc2,
                beta1,
                beta2,
                eps,
            );
        }
        for i in 0..net.biases[l].len() {
            adam_update(
                &mut net.biases[l][i],
                grads.d_biases[l][i],
                &mut state.m_biases[l][i],
                &mut state.v_biases[l][i],
                lr,
                bc1,
                bc2,
                beta1,
                beta2,
                eps,
            );
        }
    }
    Ok(())
}

/// Adam moments for a bare parameter vector (the Gaussian head's log-std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecAdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
}

impl VecAdamState {
    pub fn new(len: usize) -> Self {
        VecAdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
        }
    }
}

/// Adam step for a bare vector, same rule and error contract as [`adam_step`].
pub fn vec_adam_step(params: &mut [f64], grads: &[f64], state: &mut VecAdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch("vector adam shapes disagree".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::PoisonedGradient { layer: 0, context: "vec_adam_step".into() });
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        adam_update(
            &mut params[i],
            grads[i],
            &mut state.m[i],
            &mut state.v[i],
            lr,
            bc1,
            bc2,
            state.beta1,
            state.beta2,
            state.epsilon,
        );
    }
    Ok(())
}

// ── checkpoint document ──────────────────────────────────────────────────

/// Serialized form of one network plus optimizer state:
/// `{layer_sizes, weights, biases, adam_state, step}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub layer_sizes: Vec<usize>,
    /// Row-major nested arrays, one `out x in` matrix per layer.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub adam_state: AdamMoments,
    pub step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamMoments {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m_weights: Vec<Vec<Vec<f64>>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<Vec<f64>>>,
    pub v_biases: Vec<Vec<f64>>,
}

fn nest(flat: &[Vec<f64>], layer_sizes: &[usize]) -> Vec<Vec<Vec<f64>>> {
    flat.iter()
        .enumerate()
        .map(|(l, w)| {
            let in_dim = layer_sizes[l];
            w.chunks(in_dim).map(|row| row.to_vec()).collect()
        })
        .collect()
}

fn flatten(nested: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    nested.iter().map(|m| m.iter().flatten().copied().collect()).collect()
}

impl NetCheckpoint {
    pub fn capture(net: &Mlp, adam: &AdamState) -> Self {
        NetCheckpoint {
            layer_sizes: net.layer_sizes.clone(),
            weights: nest(&net.weights, &net.layer_sizes),
            biases: net.biases.clone(),
            adam_state: AdamMoments {
                beta1: adam.beta1,
                beta2: adam.beta2,
                epsilon: adam.epsilon,
                m_weights: nest(&adam.m_weights, &net.layer_sizes),
                m_biases: adam.m_biases.clone(),
                v_weights: nest(&adam.v_weights, &net.layer_sizes),
                v_biases: adam.v_biases.clone(),
            },
            step: adam.step,
        }
    }

    pub fn restore(&self) -> Result<(Mlp, AdamState)> {
        let mut net = Mlp::zeros(&self.layer_sizes)?;
        let weights = flatten(&self.weights);
        for (l, w) in weights.iter().enumerate() {
            if w.len() != net.weights[l].len() || self.biases[l].len() != net.biases[l].len() {
                return Err(Error::Checkpoint(format!(
                    "layer {l} parameter shapes disagree with layer_sizes"
                )));
            }
        }
        net.weights = weights;
        net.biases = self.biases.clone();
        let mut adam = AdamState::new(&net);
        adam.beta1 = self.adam_state.beta1;
        adam.beta2 = self.adam_state.beta2;
        adam.epsilon = self.adam_state.epsilon;
        adam.m_weights = flatten(&self.adam_state.m_weights);
        adam.m_biases = self.adam_state.m_biases.clone();
        adam.v_weights = flatten(&self.adam_state.v_weights);
        adam.v_biases = self.adam_state.v_biases.clone();
        adam.step = self.step;
        if !adam.matches(&net) {
            return Err(Error::Checkpoint("adam_state shapes disagree with layer_sizes".into()));
        }
        Ok((net, adam))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
