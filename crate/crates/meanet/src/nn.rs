//! Minimal deterministic neural-network engine.
//!
//! Dense layers with relu/identity activations, numerically stabilized
//! softmax / entropy / cross-entropy, explicit forward traces for
//! backpropagation, and SGD with a milestone learning-rate schedule.
//!
//! Everything is `f64` and single-threaded. Given the same seed, config,
//! and data, training is bit-identical across runs. Frozen layers never
//! receive gradients and are never touched by the optimizer.
//!
//! Stack-level functions accept any iterator of layer references so a
//! feature body and its exit head can be trained as one chain:
//! `net.main.iter().chain(iter::once(&net.exit1))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Element-wise nonlinearity applied after the affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer: `y = activation(W x + b)`.
///
/// Weights are row-major with shape `(out_dim, in_dim)`. A frozen layer
/// accumulates no gradient and is bit-identical across optimizer steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub frozen: bool,
}

impl DenseLayer {
    /// He-style fan-in scaled uniform initialization, biases zero.
    pub fn new_seeded<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weights = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
            frozen: false,
        }
    }

    /// Builds a layer from explicit parameters, validating dimensions.
    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer {out_dim}x{in_dim} expects {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
            frozen: false,
        })
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    /// Multiply-adds for one forward pass.
    pub fn mac_count(&self) -> usize {
        self.out_dim * self.in_dim
    }

    fn eval_into(&self, x: &[f64], pre: &mut Vec<f64>, post: &mut Vec<f64>) {
        pre.clear();
        post.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.bias[o];
            for (w, v) in row.iter().zip(x.iter()) {
                z += w * v;
            }
            pre.push(z);
            post.push(self.activation.apply(z));
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise operations
// ---------------------------------------------------------------------------

/// Softmax over a 1-D slice of finite logits, stabilized by max-subtraction.
pub fn softmax_slice(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of empty vector".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "softmax input contains non-finite value {bad}"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Softmax of a 1-D tensor of logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    require_1d(logits, "softmax")?;
    Ok(Tensor::vector(softmax_slice(logits.values())?))
}

/// Shannon entropy in nats of a probability vector, with `0 ln 0 := 0`.
///
/// Entries must be nonnegative and sum to 1 within 1e-9.
pub fn entropy_slice(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("entropy of empty vector".into()));
    }
    let mut sum = 0.0;
    for &p in probs {
        if p.is_nan() || p < 0.0 {
            return Err(Error::InvalidInput(format!(
                "entropy input has negative or NaN entry {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "entropy input sums to {sum}, not 1"
        )));
    }
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Entropy in nats of a 1-D probability tensor.
pub fn entropy(probs: &Tensor) -> Result<f64> {
    require_1d(probs, "entropy")?;
    entropy_slice(probs.values())
}

/// Cross-entropy loss of logits against a class index, with the gradient
/// with respect to the logits (`softmax(logits) - one_hot(label)`).
///
/// The loss is computed in log-sum-exp form so it stays finite even when
/// the true class is far from the maximum logit.
pub fn cross_entropy_slice(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "cross-entropy input contains non-finite value {bad}"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Tensor form of [`cross_entropy_slice`]; the returned tensor holds the
/// gradient with respect to the logits.
pub fn cross_entropy_loss(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    require_1d(logits, "cross_entropy_loss")?;
    let (loss, grad) = cross_entropy_slice(logits.values(), label)?;
    Ok((loss, Tensor::vector(grad)))
}

/// Index of the maximum element; ties break to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn require_1d(t: &Tensor, op: &str) -> Result<()> {
    if t.shape().len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "{op} expects a 1-D tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Forward / backward over layer stacks
// ---------------------------------------------------------------------------

/// Cached intermediates from one forward pass, sufficient for backward.
#[derive(Debug, Clone)]
pub struct StackTrace {
    input: Vec<f64>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations per layer.
    post: Vec<Vec<f64>>,
    /// `(in_dim, out_dim)` per layer, used to reject stale traces.
    dims: Vec<(usize, usize)>,
}

impl StackTrace {
    /// Output of the traced stack (the input itself for an empty stack).
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// Per-layer pre-activations. Useful for probing activation
    /// saturation, e.g. when validating gradients near relu kinks.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    /// Row-major `(out_dim, in_dim)`, like the weights it matches.
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

/// Gradient set for a layer stack. `None` entries are frozen layers:
/// no gradient is ever computed or stored for them, so the memory
/// footprint scales with the trained parameter count only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrad>>,
}

impl Gradients {
    /// Number of populated parameter tensors (weights and bias count
    /// separately).
    pub fn tensor_count(&self) -> usize {
        self.layers.iter().filter(|g| g.is_some()).count() * 2
    }

    /// Accumulates `other` into `self`. Shapes and frozen structure must
    /// match.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ContractViolation(
                "gradient sets cover different layer counts".into(),
            ));
        }
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            match (mine, theirs) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    if a.d_weights.len() != b.d_weights.len() || a.d_bias.len() != b.d_bias.len() {
                        return Err(Error::ContractViolation(
                            "gradient shapes differ between sets".into(),
                        ));
                    }
                    for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                        *x += y;
                    }
                    for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                        *x += y;
                    }
                }
                _ => {
                    return Err(Error::ContractViolation(
                        "gradient sets disagree on frozen layers".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten() {
            for v in &mut g.d_weights {
                *v *= factor;
            }
            for v in &mut g.d_bias {
                *v *= factor;
            }
        }
    }
}

fn collect_layers<'a, I>(layers: I) -> Vec<&'a DenseLayer>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    layers.into_iter().collect()
}

/// Runs the stack without caching intermediates. Used on frozen paths
/// where no backward pass will follow; arithmetic is identical to
/// [`stack_forward`].
pub fn stack_eval<'a, I>(layers: I, x: &[f64]) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    let mut current = x.to_vec();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for (idx, layer) in layers.into_iter().enumerate() {
        if layer.in_dim != current.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer {idx} expects input of {} values, got {}",
                layer.in_dim,
                current.len()
            )));
        }
        layer.eval_into(&current, &mut pre, &mut post);
        current.clone_from(&post);
    }
    Ok(current)
}

/// Forward pass caching every intermediate needed for backpropagation.
pub fn stack_forward<'a, I>(layers: I, x: &[f64]) -> Result<StackTrace>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    let layers = collect_layers(layers);
    let mut trace = StackTrace {
        input: x.to_vec(),
        pre: Vec::with_capacity(layers.len()),
        post: Vec::with_capacity(layers.len()),
        dims: Vec::with_capacity(layers.len()),
    };
    for (idx, layer) in layers.iter().enumerate() {
        let current = trace.output();
        if layer.in_dim != current.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer {idx} expects input of {} values, got {}",
                layer.in_dim,
                current.len()
            )));
        }
        let mut pre = Vec::new();
        let mut post = Vec::new();
        layer.eval_into(current, &mut pre, &mut post);
        trace.pre.push(pre);
        trace.post.push(post);
        trace.dims.push((layer.in_dim, layer.out_dim));
    }
    Ok(trace)
}

/// Backpropagates `output_grad` through the stack that produced `trace`.
///
/// Returns the per-layer parameter gradients (`None` for frozen layers)
/// and the gradient with respect to the stack input. The trace must come
/// from a forward pass over a stack with identical layer dimensions;
/// anything else is rejected as stale.
pub fn stack_backward<'a, I>(
    layers: I,
    trace: &StackTrace,
    output_grad: &[f64],
) -> Result<(Gradients, Vec<f64>)>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    let layers = collect_layers(layers);
    if trace.dims.len() != layers.len()
        || layers
            .iter()
            .zip(&trace.dims)
            .any(|(l, &(i, o))| l.in_dim != i || l.out_dim != o)
    {
        return Err(Error::ContractViolation(
            "trace does not match this stack (stale or from another network)".into(),
        ));
    }
    let out_dim = layers
        .last()
        .map(|l| l.out_dim)
        .unwrap_or(trace.input.len());
    if output_grad.len() != out_dim {
        return Err(Error::ShapeMismatch(format!(
            "output gradient has {} values, stack output has {out_dim}",
            output_grad.len()
        )));
    }

    let mut grads = vec![None; layers.len()];
    let mut g_post = output_grad.to_vec();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let pre = &trace.pre[idx];
        let layer_input = if idx == 0 {
            &trace.input
        } else {
            &trace.post[idx - 1]
        };
        // dL/dz = dL/dpost * act'(z)
        let g_pre: Vec<f64> = g_post
            .iter()
            .zip(pre.iter())
            .map(|(&g, &z)| g * layer.activation.derivative(z))
            .collect();
        if !layer.frozen {
            let mut d_weights = vec![0.0; layer.out_dim * layer.in_dim];
            for (row, &g) in d_weights.chunks_mut(layer.in_dim).zip(&g_pre) {
                for (slot, &v) in row.iter_mut().zip(layer_input.iter()) {
                    *slot = g * v;
                }
            }
            grads[idx] = Some(LayerGrad {
                d_weights,
                d_bias: g_pre.clone(),
            });
        }
        // dL/dinput = W^T dL/dz
        let mut g_in = vec![0.0; layer.in_dim];
        for (row, &g) in layer.weights.chunks(layer.in_dim).zip(&g_pre) {
            for (acc, &w) in g_in.iter_mut().zip(row) {
                *acc += w * g;
            }
        }
        g_post = g_in;
    }
    Ok((Gradients { layers: grads }, g_post))
}

/// Tensor wrapper around [`stack_forward`]: returns the trace and output.
pub fn forward<'a, I>(layers: I, x: &Tensor) -> Result<(StackTrace, Tensor)>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    require_1d(x, "forward")?;
    let trace = stack_forward(layers, x.values())?;
    let out = Tensor::vector(trace.output().to_vec());
    Ok((trace, out))
}

/// Tensor wrapper around [`stack_backward`]: returns parameter gradients
/// and the input gradient.
pub fn backward<'a, I>(
    layers: I,
    trace: &StackTrace,
    output_grad: &Tensor,
) -> Result<(Gradients, Tensor)>
where
    I: IntoIterator<Item = &'a DenseLayer>,
{
    require_1d(output_grad, "backward")?;
    let (grads, input_grad) = stack_backward(layers, trace, output_grad.values())?;
    Ok((grads, Tensor::vector(input_grad)))
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

/// SGD hyperparameters with a milestone learning-rate schedule.
///
/// The rate at epoch `e` is `initial_lr * decay_factor^k` where `k` is
/// the number of milestones `<= e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub initial_lr: f64,
    pub milestones: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            milestones: vec![50, 80],
            decay_factor: 0.1,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "initial_lr must be positive, got {}",
                self.initial_lr
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must lie in (0,1), got {}",
                self.decay_factor
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("milestones must be sorted".into()));
        }
        Ok(())
    }

    /// Learning rate in effect at `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.initial_lr * self.decay_factor.powi(hits as i32)
    }
}

/// SGD optimizer with momentum. Holds one velocity buffer per trained
/// layer; frozen layers have none and are never written.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Option<Vec<Option<LayerGrad>>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: None,
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// `p <- p - lr(epoch) * v` with `v <- momentum * v + g`.
    ///
    /// `grads` must align with `layers`: same count, gradient present
    /// exactly for non-frozen layers, matching shapes. Frozen layers are
    /// untouched.
    pub fn step(
        &mut self,
        layers: &mut [&mut DenseLayer],
        grads: &Gradients,
        epoch: usize,
    ) -> Result<()> {
        if grads.layers.len() != layers.len() {
            return Err(Error::ContractViolation(format!(
                "gradient set covers {} layers, stack has {}",
                grads.layers.len(),
                layers.len()
            )));
        }
        for (idx, (layer, grad)) in layers.iter().zip(&grads.layers).enumerate() {
            match (layer.frozen, grad) {
                (true, None) | (false, Some(_)) => {}
                (true, Some(_)) => {
                    return Err(Error::ContractViolation(format!(
                        "gradient supplied for frozen layer {idx}"
                    )));
                }
                (false, None) => {
                    return Err(Error::ContractViolation(format!(
                        "gradient missing for trainable layer {idx}"
                    )));
                }
            }
            if let Some(g) = grad {
                if g.d_weights.len() != layer.weights.len() || g.d_bias.len() != layer.bias.len() {
                    return Err(Error::ContractViolation(format!(
                        "gradient shape mismatch at layer {idx}"
                    )));
                }
            }
        }

        let velocity = self.velocity.get_or_insert_with(|| {
            layers
                .iter()
                .map(|l| {
                    if l.frozen {
                        None
                    } else {
                        Some(LayerGrad {
                            d_weights: vec![0.0; l.weights.len()],
                            d_bias: vec![0.0; l.bias.len()],
                        })
                    }
                })
                .collect()
        });
        if velocity.len() != layers.len() {
            return Err(Error::ContractViolation(
                "optimizer was previously stepped with a different stack".into(),
            ));
        }

        let lr = self.config.lr_at(epoch);
        let mu = self.config.momentum;
        for ((layer, grad), vel) in layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(velocity.iter_mut())
        {
            let (Some(g), Some(v)) = (grad, vel) else {
                continue;
            };
            if v.d_weights.len() != layer.weights.len() {
                return Err(Error::ContractViolation(
                    "optimizer velocity does not match this stack".into(),
                ));
            }
            for ((p, vw), gw) in layer
                .weights
                .iter_mut()
                .zip(&mut v.d_weights)
                .zip(&g.d_weights)
            {
                *vw = mu * *vw + gw;
                *p -= lr * *vw;
            }
            for ((p, vb), gb) in layer.bias.iter_mut().zip(&mut v.d_bias).zip(&g.d_bias) {
                *vb = mu * *vb + gb;
                *p -= lr * *vb;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let p = softmax_slice(&[0.0, 0.0]).unwrap();
        assert!(vecs_close(&p, &[0.5, 0.5], 1e-15));

        let a = softmax_slice(&[0.3, -1.2, 4.0]).unwrap();
        let b = softmax_slice(&[0.3 + 7.5, -1.2 + 7.5, 4.0 + 7.5]).unwrap();
        assert!(vecs_close(&a, &b, 1e-12));
    }

    #[test]
    fn softmax_hand_value() {
        // exp-normalize of [1,2,3] evaluated by hand.
        let p = softmax_slice(&[1.0, 2.0, 3.0]).unwrap();
        assert!(vecs_close(&p, &[0.09003, 0.24473, 0.66524], 1e-5));
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax_slice(&[1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            softmax_slice(&[f64::INFINITY, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn entropy_degenerate_uniform_and_hand_value() {
        assert_eq!(entropy_slice(&[0.0, 1.0, 0.0]).unwrap(), 0.0);

        let h = entropy_slice(&[0.25; 4]).unwrap();
        assert!((h - 4.0f64.ln()).abs() < 1e-12);

        // -sum p ln p for [0.7, 0.2, 0.1] by hand.
        let h = entropy_slice(&[0.7, 0.2, 0.1]).unwrap();
        assert!((h - 0.80182).abs() < 1e-5);
    }

    #[test]
    fn entropy_rejects_bad_distributions() {
        assert!(matches!(
            entropy_slice(&[-0.1, 1.1]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            entropy_slice(&[0.6, 0.6]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn entropy_of_softmax_stays_in_bounds() {
        let mut rng = crate::seeded_rng(42);
        for _ in 0..200 {
            let k = rng.gen_range(2..8);
            let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let h = entropy_slice(&softmax_slice(&logits).unwrap()).unwrap();
            assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn cross_entropy_limits_and_hand_value() {
        // Strong margin on the true label drives the loss to zero.
        let (loss, _) = cross_entropy_slice(&[60.0, 0.0], 0).unwrap();
        assert!(loss < 1e-12);

        // Uniform logits give ln K.
        let (loss, _) = cross_entropy_slice(&[1.0; 5], 2).unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);

        // -ln softmax([1,2,3])[0] by hand.
        let (loss, grad) = cross_entropy_slice(&[1.0, 2.0, 3.0], 0).unwrap();
        assert!((loss - 2.40761).abs() < 1e-5);
        let probs = softmax_slice(&[1.0, 2.0, 3.0]).unwrap();
        assert!((grad[0] - (probs[0] - 1.0)).abs() < 1e-15);
        assert!((grad[1] - probs[1]).abs() < 1e-15);

        assert!(matches!(
            cross_entropy_slice(&[0.0, 0.0], 2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn forward_identity_and_zero_nets() {
        let identity = DenseLayer::from_parts(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            Activation::Identity,
        )
        .unwrap();
        let out = stack_eval(std::slice::from_ref(&identity), &[0.4, -1.5, 2.0]).unwrap();
        assert_eq!(out, vec![0.4, -1.5, 2.0]);

        let zero =
            DenseLayer::from_parts(3, 2, vec![0.0; 6], vec![0.0; 2], Activation::Relu).unwrap();
        let out = stack_eval(std::slice::from_ref(&zero), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_two_layer_matches_hand_arithmetic() {
        // layer1: 2 -> 2 relu, layer2: 2 -> 1 identity; worked by hand:
        //   z1 = [1*1 + 2*(-1) + 0.5, 1*0.5 + 2*1 + 0] = [-0.5, 2.5]
        //   a1 = [0, 2.5]
        //   z2 = 0*2 + 2.5*(-0.5) + 1 = -0.25
        let l1 = DenseLayer::from_parts(
            2,
            2,
            vec![1.0, -1.0, 0.5, 1.0],
            vec![0.5, 0.0],
            Activation::Relu,
        )
        .unwrap();
        let l2 =
            DenseLayer::from_parts(2, 1, vec![2.0, -0.5], vec![1.0], Activation::Identity).unwrap();
        let stack = [l1, l2];
        let trace = stack_forward(&stack, &[1.0, 2.0]).unwrap();
        assert!(vecs_close(trace.output(), &[-0.25], 1e-15));

        // stack_eval must be arithmetically identical
        let eval = stack_eval(&stack, &[1.0, 2.0]).unwrap();
        assert_eq!(eval, trace.output());
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let l = DenseLayer::from_parts(3, 2, vec![0.0; 6], vec![0.0; 2], Activation::Relu).unwrap();
        assert!(matches!(
            stack_eval(std::slice::from_ref(&l), &[1.0, 2.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn backward_frozen_stack_yields_no_gradients() {
        let mut rng = crate::seeded_rng(7);
        let mut l1 = DenseLayer::new_seeded(4, 3, Activation::Relu, &mut rng);
        let mut l2 = DenseLayer::new_seeded(3, 2, Activation::Identity, &mut rng);
        l1.frozen = true;
        l2.frozen = true;
        let stack = [l1, l2];
        let trace = stack_forward(&stack, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (grads, _) = stack_backward(&stack, &trace, &[1.0, -1.0]).unwrap();
        assert!(grads.layers.iter().all(Option::is_none));
        assert_eq!(grads.tensor_count(), 0);
    }

    #[test]
    fn backward_linear_layer_matches_outer_product() {
        // Squared loss L = 0.5 * ||y - t||^2 on a single identity layer:
        // dL/dW = (y - t) x^T, dL/db = y - t.
        let layer = DenseLayer::from_parts(
            2,
            2,
            vec![1.0, 2.0, -1.0, 0.5],
            vec![0.1, -0.2],
            Activation::Identity,
        )
        .unwrap();
        let x = [0.7, -0.3];
        let t = [1.0, 0.0];
        let stack = [layer];
        let trace = stack_forward(&stack, &x).unwrap();
        let y = trace.output().to_vec();
        let residual: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a - b).collect();
        let (grads, _) = stack_backward(&stack, &trace, &residual).unwrap();
        let g = grads.layers[0].as_ref().unwrap();
        let expected_w = [
            residual[0] * x[0],
            residual[0] * x[1],
            residual[1] * x[0],
            residual[1] * x[1],
        ];
        assert!(vecs_close(&g.d_weights, &expected_w, 1e-15));
        assert!(vecs_close(&g.d_bias, &residual, 1e-15));
    }

    #[test]
    fn backward_rejects_stale_trace() {
        let mut rng = crate::seeded_rng(3);
        let l1 = DenseLayer::new_seeded(3, 3, Activation::Relu, &mut rng);
        let l2 = DenseLayer::new_seeded(3, 4, Activation::Identity, &mut rng);
        let trace = stack_forward(std::slice::from_ref(&l1), &[0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            stack_backward(std::slice::from_ref(&l2), &trace, &[0.0; 4]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn lr_schedule_matches_milestone_counting() {
        let cfg = SgdConfig {
            initial_lr: 0.1,
            milestones: vec![60, 120, 160],
            decay_factor: 0.1,
            momentum: 0.0,
            seed: 0,
        };
        assert!((cfg.lr_at(0) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(59) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(60) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(120) - 0.001).abs() < 1e-15);
        assert!((cfg.lr_at(160) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_basics() {
        let mut layer =
            DenseLayer::from_parts(1, 1, vec![1.0], vec![0.5], Activation::Identity).unwrap();
        let cfg = SgdConfig {
            initial_lr: 0.1,
            milestones: vec![],
            decay_factor: 0.5,
            momentum: 0.0,
            seed: 0,
        };
        let mut sgd = Sgd::new(cfg).unwrap();

        // Zero gradient leaves parameters unchanged.
        let zero = Gradients {
            layers: vec![Some(LayerGrad {
                d_weights: vec![0.0],
                d_bias: vec![0.0],
            })],
        };
        sgd.step(&mut [&mut layer], &zero, 0).unwrap();
        assert_eq!(layer.weights, vec![1.0]);
        assert_eq!(layer.bias, vec![0.5]);

        // Single step, momentum 0: p - lr*g exactly.
        let g = Gradients {
            layers: vec![Some(LayerGrad {
                d_weights: vec![2.0],
                d_bias: vec![-1.0],
            })],
        };
        sgd.step(&mut [&mut layer], &g, 0).unwrap();
        assert_eq!(layer.weights, vec![1.0 - 0.1 * 2.0]);
        assert_eq!(layer.bias, vec![0.5 + 0.1]);
    }

    #[test]
    fn sgd_rejects_misaligned_gradients() {
        let mut layer =
            DenseLayer::from_parts(2, 1, vec![0.0, 0.0], vec![0.0], Activation::Identity).unwrap();
        let mut frozen =
            DenseLayer::from_parts(1, 1, vec![0.0], vec![0.0], Activation::Identity).unwrap();
        frozen.frozen = true;
        let mut sgd = Sgd::new(SgdConfig::default()).unwrap();

        // Wrong layer count.
        let g = Gradients { layers: vec![] };
        assert!(matches!(
            sgd.step(&mut [&mut layer], &g, 0),
            Err(Error::ContractViolation(_))
        ));

        // Gradient present for a frozen layer.
        let g = Gradients {
            layers: vec![Some(LayerGrad {
                d_weights: vec![0.0],
                d_bias: vec![0.0],
            })],
        };
        assert!(matches!(
            sgd.step(&mut [&mut frozen], &g, 0),
            Err(Error::ContractViolation(_))
        ));

        // Gradient missing for a trainable layer.
        let g = Gradients { layers: vec![None] };
        assert!(matches!(
            sgd.step(&mut [&mut layer], &g, 0),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn optimizer_rejects_a_different_stack_after_first_step() {
        let mut a =
            DenseLayer::from_parts(1, 1, vec![1.0], vec![0.0], Activation::Identity).unwrap();
        let mut b = a.clone();
        let mut sgd = Sgd::new(SgdConfig {
            momentum: 0.5,
            ..SgdConfig::default()
        })
        .unwrap();
        let grad = || Gradients {
            layers: vec![
                Some(LayerGrad {
                    d_weights: vec![1.0],
                    d_bias: vec![1.0],
                });
                1
            ],
        };
        sgd.step(&mut [&mut a], &grad(), 0).unwrap();
        let two_layer_grads = Gradients {
            layers: vec![grad().layers[0].clone(), grad().layers[0].clone()],
        };
        assert!(matches!(
            sgd.step(&mut [&mut a, &mut b], &two_layer_grads, 1),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn frozen_layer_bytes_never_change_under_training() {
        let mut rng = crate::seeded_rng(11);
        let mut frozen = DenseLayer::new_seeded(3, 3, Activation::Relu, &mut rng);
        frozen.frozen = true;
        let trainable = DenseLayer::new_seeded(3, 2, Activation::Identity, &mut rng);
        let before = frozen.clone();

        let mut stack = [frozen, trainable];
        let mut sgd = Sgd::new(SgdConfig {
            momentum: 0.9,
            ..SgdConfig::default()
        })
        .unwrap();
        for step in 0..100 {
            let x = [0.3, -0.2, 0.9];
            let trace = stack_forward(&stack, &x).unwrap();
            let (_, dlogits) = cross_entropy_slice(trace.output(), step % 2).unwrap();
            let (grads, _) = stack_backward(&stack, &trace, &dlogits).unwrap();
            let [l0, l1] = &mut stack;
            sgd.step(&mut [l0, l1], &grads, 0).unwrap();
        }
        assert_eq!(stack[0], before);
    }

    #[test]
    fn tensor_wrappers_agree_with_slice_ops() {
        let logits = Tensor::vector(vec![0.2, -1.0, 3.0]);
        let p = softmax(&logits).unwrap();
        assert_eq!(p.values(), softmax_slice(logits.values()).unwrap());
        let h = entropy(&p).unwrap();
        assert_eq!(h, entropy_slice(p.values()).unwrap());
        let (loss, grad) = cross_entropy_loss(&logits, 2).unwrap();
        let (loss2, grad2) = cross_entropy_slice(logits.values(), 2).unwrap();
        assert_eq!(loss, loss2);
        assert_eq!(grad.values(), grad2);
    }
}
