//! One-hidden-layer networks with exact reverse-mode gradients and Adam.
//!
//! Everything is plain `f64` on the heap: a network is two dense layers, a
//! gradient is a shape-matched copy, and the optimizer state is two more.
//! No operation mutates shared state; callers own all mutation, so values
//! move freely between threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{Action, ACTION_COUNT};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite input component at index {index}")]
    NonFiniteInput { index: usize },
    #[error("non-finite gradient component")]
    NonFiniteGradient,
    #[error("{what} length {got}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Fully-connected layer, weights stored row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, NetError> {
        if w.len() != in_dim * out_dim {
            return Err(NetError::ShapeMismatch {
                what: "weights",
                expected: in_dim * out_dim,
                got: w.len(),
            });
        }
        if b.len() != out_dim {
            return Err(NetError::ShapeMismatch {
                what: "biases",
                expected: out_dim,
                got: b.len(),
            });
        }
        if let Some(index) = w.iter().chain(&b).position(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput { index });
        }
        Ok(DenseLayer { in_dim, out_dim, w, b })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.in_dim..(k + 1) * self.in_dim]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for k in 0..self.out_dim {
            let row = self.row(k);
            let mut acc = self.b[k];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// One hidden ReLU layer feeding a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

/// Policy head: `obs_dim -> hidden -> 5` logits, softmaxed by the caller.
pub type ActorNet = Mlp;

/// Value head: `global_dim -> hidden -> 1`.
pub type CriticNet = Mlp;

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden_pre: Vec<f64>,
    pub hidden_post: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.hidden.w.len() + self.hidden.b.len() + self.output.w.len() + self.output.b.len()
    }

    /// Run the net, rejecting non-finite or wrongly sized input.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache, NetError> {
        if x.len() != self.hidden.in_dim {
            return Err(NetError::ShapeMismatch {
                what: "input",
                expected: self.hidden.in_dim,
                got: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput { index });
        }
        let mut hidden_pre = Vec::new();
        self.hidden.forward_into(x, &mut hidden_pre);
        let hidden_post: Vec<f64> = hidden_pre.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();
        let mut output = Vec::new();
        self.output.forward_into(&hidden_post, &mut output);
        Ok(ForwardCache {
            hidden_pre,
            hidden_post,
            output,
        })
    }
}

/// Fresh network with uniform `±sqrt(6/(in+out))` hidden weights, the same
/// scheme scaled by `output_scale` on the output layer, and zero biases.
/// Weights draw row-major, hidden layer first.
pub fn init_net_with_output_scale(
    in_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
    output_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Mlp {
    let layer = |i: usize, o: usize, scale: f64, rng: &mut ChaCha8Rng| {
        let bound = scale * (6.0 / (i + o) as f64).sqrt();
        let w: Vec<f64> = (0..i * o)
            .map(|_| {
                if bound == 0.0 {
                    0.0
                } else {
                    rng.random_range(-bound..=bound)
                }
            })
            .collect();
        DenseLayer::from_parts(i, o, w, vec![0.0; o]).expect("constructed lengths match")
    };
    Mlp {
        hidden: layer(in_dim, hidden_dim, 1.0, rng),
        output: layer(hidden_dim, out_dim, output_scale, rng),
    }
}

/// Default initialization: output weights scaled by 0.01 so the starting
/// policy is near-uniform and the starting value estimate is near zero.
pub fn init_net(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Mlp {
    init_net_with_output_scale(in_dim, hidden_dim, out_dim, 0.01, rng)
}

pub fn init_actor(obs_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> ActorNet {
    init_net(obs_dim, hidden_dim, ACTION_COUNT, rng)
}

pub fn init_critic(global_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> CriticNet {
    init_net(global_dim, hidden_dim, 1, rng)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Action probabilities for one observation.
pub fn actor_forward(net: &ActorNet, obs: &[f64]) -> Result<Vec<f64>, NetError> {
    Ok(softmax(&net.forward(obs)?.output))
}

/// Probabilities plus the activation cache needed to backpropagate later.
pub fn actor_forward_cached(net: &ActorNet, obs: &[f64]) -> Result<(ForwardCache, Vec<f64>), NetError> {
    let cache = net.forward(obs)?;
    let probs = softmax(&cache.output);
    Ok((cache, probs))
}

/// Scalar state-value estimate.
pub fn critic_forward(net: &CriticNet, gs: &[f64]) -> Result<f64, NetError> {
    Ok(net.forward(gs)?.output[0])
}

/// Shannon entropy in nats, with `0 ln 0 := 0`.
pub fn policy_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Inverse-CDF draw over `p` in index order; ties broken toward the lower
/// index. Returns the index and `ln p` of the pick.
pub fn sample_index(p: &[f64], rng: &mut ChaCha8Rng) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        cum += pi;
        if u < cum {
            return (i, pi.ln());
        }
    }
    // Rounding left cum slightly below 1; fall back to the last entry.
    let last = p.len() - 1;
    (last, p[last].ln())
}

/// Categorical draw over the five moves.
pub fn sample_action(p: &[f64], rng: &mut ChaCha8Rng) -> (Action, f64) {
    assert_eq!(p.len(), ACTION_COUNT, "action distribution must have {ACTION_COUNT} entries");
    let (i, log_prob) = sample_index(p, rng);
    (Action::from_index(i).expect("index in range"), log_prob)
}

/// Per-parameter gradient slab for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Shape-matched gradient of a scalar loss w.r.t. every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: LayerGradients,
    pub output: LayerGradients,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            hidden: LayerGradients {
                w: vec![0.0; net.hidden.w.len()],
                b: vec![0.0; net.hidden.b.len()],
            },
            output: LayerGradients {
                w: vec![0.0; net.output.w.len()],
                b: vec![0.0; net.output.b.len()],
            },
        }
    }

    pub fn reset(&mut self) {
        for slab in [
            &mut self.hidden.w,
            &mut self.hidden.b,
            &mut self.output.w,
            &mut self.output.b,
        ] {
            slab.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for slab in [
            &mut self.hidden.w,
            &mut self.hidden.b,
            &mut self.output.w,
            &mut self.output.b,
        ] {
            for g in slab.iter_mut() {
                *g *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.hidden.w, &self.hidden.b, &self.output.w, &self.output.b]
            .iter()
            .all(|slab| slab.iter().all(|g| g.is_finite()))
    }
}

/// Accumulate parameter gradients given activations already computed by
/// [`Mlp::forward`] on the same `input`. ReLU subgradient at 0 is 0.
pub fn backward_from_cache(
    net: &Mlp,
    input: &[f64],
    cache: &ForwardCache,
    upstream: &[f64],
    grads: &mut Gradients,
) {
    let hidden_dim = net.hidden.out_dim;
    debug_assert_eq!(upstream.len(), net.output.out_dim);
    debug_assert_eq!(input.len(), net.hidden.in_dim);

    let mut d_hidden = vec![0.0; hidden_dim];
    for k in 0..net.output.out_dim {
        let u = upstream[k];
        grads.output.b[k] += u;
        let row = net.output.row(k);
        let grow = &mut grads.output.w[k * hidden_dim..(k + 1) * hidden_dim];
        for j in 0..hidden_dim {
            grow[j] += u * cache.hidden_post[j];
            d_hidden[j] += u * row[j];
        }
    }
    let in_dim = net.hidden.in_dim;
    for j in 0..hidden_dim {
        if cache.hidden_pre[j] > 0.0 {
            let dz = d_hidden[j];
            grads.hidden.b[j] += dz;
            let grow = &mut grads.hidden.w[j * in_dim..(j + 1) * in_dim];
            for (gw, xi) in grow.iter_mut().zip(input) {
                *gw += dz * xi;
            }
        }
    }
}

/// Exact parameter gradients of the scalar loss whose output-gradient is
/// `upstream`.
pub fn backward(net: &Mlp, input: &[f64], upstream: &[f64]) -> Result<Gradients, NetError> {
    if upstream.len() != net.output.out_dim {
        return Err(NetError::ShapeMismatch {
            what: "upstream",
            expected: net.output.out_dim,
            got: upstream.len(),
        });
    }
    let cache = net.forward(input)?;
    let mut grads = Gradients::zeros_like(net);
    backward_from_cache(net, input, &cache, upstream, &mut grads);
    Ok(grads)
}

/// First/second-moment accumulators plus the step counter and constants.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Standard bias-corrected Adam update; increments `state.t`.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<(), NetError> {
    if !grads.is_finite() {
        return Err(NetError::NonFiniteGradient);
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    adam_slice(
        &mut net.hidden.w,
        &grads.hidden.w,
        &mut state.m.hidden.w,
        &mut state.v.hidden.w,
        lr,
        state.beta1,
        state.beta2,
        state.eps,
        bc1,
        bc2,
    );
    adam_slice(
        &mut net.hidden.b,
        &grads.hidden.b,
        &mut state.m.hidden.b,
        &mut state.v.hidden.b,
        lr,
        state.beta1,
        state.beta2,
        state.eps,
        bc1,
        bc2,
    );
    adam_slice(
        &mut net.output.w,
        &grads.output.w,
        &mut state.m.output.w,
        &mut state.v.output.w,
        lr,
        state.beta1,
        state.beta2,
        state.eps,
        bc1,
        bc2,
    );
    adam_slice(
        &mut net.output.b,
        &grads.output.b,
        &mut state.m.output.b,
        &mut state.v.output.b,
        lr,
        state.beta1,
        state.beta2,
        state.eps,
        bc1,
        bc2,
    );
    Ok(())
}
