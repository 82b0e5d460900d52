//! Dense networks with hand-derived gradients, centered RMSProp with
//! momentum, global-norm clipping and a finite-difference gradient checker.
//!
//! Topology is fixed: `layer_widths = [input, hidden.., output]`, rectified
//! linear hidden units, identity or sigmoid output.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, output: OutputActivation) -> Result<Self> {
        if layer_widths.len() < 3 {
            return config("an MLP needs an input, at least one hidden layer and an output");
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return config("all layer widths must be at least 1");
        }
        Ok(Self {
            layer_widths,
            output,
        })
    }

    /// `[input, hidden.., output]` from parts.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, act: OutputActivation) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, act)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Weights of one dense layer, row-major `rows x cols` (`out x in`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(z + self.bias[r]);
        }
    }
}

/// Per-layer weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
}

impl ParamSet {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec
                .layer_widths
                .windows(2)
                .map(|w| Layer::zeros(w[1], w[0]))
                .collect(),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(spec);
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Flat-index accessor in `values()` order.
    pub fn get_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|v| *v *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
    }

    /// FNV-1a over the bit patterns of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Scale `grads` in place so its global norm is at most `max_norm`.
/// Returns the factor applied (1 when already within bounds).
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let k = max_norm / norm;
        grads.scale(k);
        k
    } else {
        1.0
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A network: topology plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamSet,
}

/// Per-sample activations kept for the backward pass.
struct Trace {
    /// `acts[0]` is the input, `acts[l]` the post-activation of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Self {
        let params = ParamSet::init(&spec, rng);
        Self { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        let expected = ParamSet::zeros(&spec);
        if !expected.same_shape(&params) {
            return config("parameter shapes do not match the network spec");
        }
        if !params.is_finite() {
            return config("parameters contain non-finite values");
        }
        Ok(Self { spec, params })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return config(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            ));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let n = self.params.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        acts.push(x.to_vec());
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            layer.affine(&acts[l], &mut z);
            let a: Vec<f64> = if l + 1 < n {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                match self.spec.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                }
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Output for a single input.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n = self.params.layers.len();
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.params.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l + 1 < n {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.spec.output == OutputActivation::Sigmoid {
                next.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.forward_one(x.as_ref())).collect()
    }

    /// Gradient of the batch-mean loss `(1/N) sum_i L_i` given per-sample
    /// output gradients `upstream[i] = dL_i/d output_i`.
    pub fn backward<X: AsRef<[f64]>>(&self, inputs: &[X], upstream: &[Vec<f64>]) -> Result<ParamSet> {
        if inputs.len() != upstream.len() {
            return config("input and upstream batches differ in length");
        }
        let mut grads = self.params.zeros_like();
        if inputs.is_empty() {
            return Ok(grads);
        }
        let inv_n = 1.0 / inputs.len() as f64;
        let n_layers = self.params.layers.len();
        for (x, up) in inputs.iter().zip(upstream) {
            let x = x.as_ref();
            self.check_input(x)?;
            if up.len() != self.output_dim() {
                return config("upstream gradient width does not match the output");
            }
            let tr = self.trace(x);
            // delta = dL/dz for the current layer
            let mut delta: Vec<f64> = match self.spec.output {
                OutputActivation::Identity => up.clone(),
                OutputActivation::Sigmoid => up
                    .iter()
                    .zip(&tr.acts[n_layers])
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect(),
            };
            for l in (0..n_layers).rev() {
                let layer = &self.params.layers[l];
                let input = &tr.acts[l];
                let g = &mut grads.layers[l];
                for r in 0..layer.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[r] += d * inv_n;
                    let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (gw, v) in row.iter_mut().zip(input) {
                        *gw += d * v * inv_n;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.cols];
                    for (r, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&tr.pre[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok(grads)
    }

    /// Smallest absolute hidden pre-activation over a batch.
    pub fn min_hidden_preactivation<X: AsRef<[f64]>>(&self, inputs: &[X]) -> f64 {
        let n = self.params.layers.len();
        inputs
            .iter()
            .flat_map(|x| {
                let tr = self.trace(x.as_ref());
                tr.pre.into_iter().take(n - 1).flatten()
            })
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

/// Batch-mean loss over network outputs.
pub trait BatchLoss {
    /// Returns `(1/N) sum_i L_i` and the per-sample gradients `dL_i/d out_i`.
    fn evaluate(&self, outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>);
}

/// `(out - target)^2` summed over output units.
pub struct SquaredError<'a> {
    pub targets: &'a [Vec<f64>],
}

impl BatchLoss for SquaredError<'_> {
    fn evaluate(&self, outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let mut total = 0.0;
        let grads = outputs
            .iter()
            .zip(self.targets)
            .map(|(o, t)| {
                o.iter()
                    .zip(t)
                    .map(|(a, b)| {
                        total += (a - b) * (a - b);
                        2.0 * (a - b)
                    })
                    .collect()
            })
            .collect();
        (total / outputs.len().max(1) as f64, grads)
    }
}

/// `(y_i - out_i[a_i])^2`: regression on the taken action only.
pub struct SelectedSquaredError<'a> {
    pub actions: &'a [usize],
    pub targets: &'a [f64],
}

impl BatchLoss for SelectedSquaredError<'_> {
    fn evaluate(&self, outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let mut total = 0.0;
        let grads = outputs
            .iter()
            .zip(self.actions.iter().zip(self.targets))
            .map(|(o, (&a, &y))| {
                let r = o[a] - y;
                total += r * r;
                let mut g = vec![0.0; o.len()];
                g[a] = 2.0 * r;
                g
            })
            .collect();
        (total / outputs.len().max(1) as f64, grads)
    }
}

/// Two-sided binary cross-entropy on a single sigmoid output:
/// `mean_{label=0}[-ln(1-D)] + mean_{label=1}[-ln D]`, outputs clamped to
/// `[eps, 1-eps]` before the logarithms (zero gradient where clamped).
pub struct ClampedBinaryCrossEntropy<'a> {
    pub labels: &'a [bool],
    pub eps: f64,
}

impl BatchLoss for ClampedBinaryCrossEntropy<'_> {
    fn evaluate(&self, outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let n = outputs.len() as f64;
        let n_pos = self.labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = n - n_pos;
        let mut loss = 0.0;
        let grads = outputs
            .iter()
            .zip(self.labels)
            .map(|(o, &label)| {
                let d = o[0];
                let c = d.clamp(self.eps, 1.0 - self.eps);
                let inside = d > self.eps && d < 1.0 - self.eps;
                let (l, g, count) = if label {
                    (-c.ln(), if inside { -1.0 / d } else { 0.0 }, n_pos)
                } else {
                    (-(1.0 - c).ln(), if inside { 1.0 / (1.0 - d) } else { 0.0 }, n_neg)
                };
                // L_i = (N / count) * l so the batch mean is the two-sided sum.
                let w = n / count;
                loss += l / count;
                vec![w * g]
            })
            .collect();
        (loss, grads)
    }
}

/// Softmax cross-entropy over logits with integer class labels.
pub struct SoftmaxCrossEntropy<'a> {
    pub labels: &'a [usize],
}

impl BatchLoss for SoftmaxCrossEntropy<'_> {
    fn evaluate(&self, outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let mut total = 0.0;
        let grads = outputs
            .iter()
            .zip(self.labels)
            .map(|(o, &y)| {
                let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = o.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                total += z.ln() + m - o[y];
                let mut g: Vec<f64> = exps.iter().map(|e| e / z).collect();
                g[y] -= 1.0;
                g
            })
            .collect();
        (total / outputs.len().max(1) as f64, grads)
    }
}

impl Mlp {
    /// Loss and parameter gradient for one batch.
    pub fn loss_and_grad<X: AsRef<[f64]>>(&self, inputs: &[X], loss: &dyn BatchLoss) -> Result<(f64, ParamSet)> {
        let outputs = self.forward(inputs)?;
        let (value, upstream) = loss.evaluate(&outputs);
        let grads = self.backward(inputs, &upstream)?;
        Ok((value, grads))
    }
}

/// Hyperparameters of centered RMSProp with momentum. The defaults are the
/// discriminator settings: lr 0.00025, momentum 0.95, epsilon 0.01,
/// global-norm clip 5, squared-gradient decay 0.95.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            momentum: 0.95,
            decay: 0.95,
            epsilon: 0.01,
            clip_norm: 5.0,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0 && self.clip_norm > 0.0) {
            return config("RMSProp needs learning_rate, epsilon and clip_norm > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.decay) {
            return config("RMSProp momentum and decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Optimizer state: running mean of squared gradients, running mean of
/// gradients, and the momentum buffer.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    pub mean_square: ParamSet,
    pub mean_grad: ParamSet,
    pub velocity: ParamSet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clip_scale: f64,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, like: &ParamSet) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            mean_square: like.zeros_like(),
            mean_grad: like.zeros_like(),
            velocity: like.zeros_like(),
        })
    }

    /// Clip `grads` to the global norm bound, then
    /// `n = d n + (1-d) g^2`, `m = d m + (1-d) g`,
    /// `v = mu v - lr g / sqrt(n - m^2 + eps)`, `theta += v`.
    pub fn step(&mut self, params: &mut ParamSet, mut grads: ParamSet) -> Result<StepInfo> {
        if !grads.same_shape(params) || !self.velocity.same_shape(params) {
            return config("gradient shapes do not match parameters");
        }
        let grad_norm = grads.global_norm();
        if !grad_norm.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient (norm {grad_norm})"
            )));
        }
        let clip_scale = clip_global_norm(&mut grads, self.config.clip_norm);
        let RmsPropConfig {
            learning_rate: lr,
            momentum: mu,
            decay: d,
            epsilon: eps,
            ..
        } = self.config;
        let it = params
            .values_mut()
            .zip(grads.values())
            .zip(self.mean_square.values_mut())
            .zip(self.mean_grad.values_mut())
            .zip(self.velocity.values_mut());
        for ((((p, &g), n), m), v) in it {
            *n = d * *n + (1.0 - d) * g * g;
            *m = d * *m + (1.0 - d) * g;
            *v = mu * *v - lr * g / (*n - *m * *m + eps).sqrt();
            *p += *v;
        }
        Ok(StepInfo {
            grad_norm,
            clip_scale,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub param_count: usize,
    /// Smallest absolute hidden pre-activation at the checked inputs.
    pub min_preactivation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Finite-difference step of the gradient checker.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Hidden pre-activations must be at least this far from the ReLU kink.
pub const KINK_MARGIN: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely rather than relatively.
const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compare analytic gradients against central differences over every
/// parameter. Inputs whose hidden pre-activations fall within
/// [`KINK_MARGIN`] of zero are jittered (seeded) until they clear it.
pub fn grad_check<L>(mlp: &Mlp, inputs: &[Vec<f64>], loss: L, tolerance: f64) -> Result<GradCheckReport>
where
    L: BatchLoss,
{
    let mut inputs = inputs.to_vec();
    let mut jitter = rng::rng_from(0x6b696e6b, &[]);
    let mut attempts = 0;
    while mlp.min_hidden_preactivation(&inputs) < KINK_MARGIN {
        attempts += 1;
        if attempts > 1000 {
            return config("could not move inputs away from rectifier kinks");
        }
        for x in &mut inputs {
            for v in x.iter_mut() {
                *v += jitter.gen_range(-1e-2..1e-2);
            }
        }
    }
    let (_, analytic) = mlp.loss_and_grad(&inputs, &loss)?;
    let analytic: Vec<f64> = analytic.values().copied().collect();
    let mut probe = mlp.clone();
    let mut max_rel = 0.0_f64;
    let mut worst = 0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.params.get_mut(i);
        *probe.params.get_mut(i) = orig + GRAD_CHECK_STEP;
        let plus = loss.evaluate(&probe.forward(&inputs)?).0;
        *probe.params.get_mut(i) = orig - GRAD_CHECK_STEP;
        let minus = loss.evaluate(&probe.forward(&inputs)?).0;
        *probe.params.get_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if rel > max_rel || !rel.is_finite() {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_index: worst,
        param_count: analytic.len(),
        min_preactivation: mlp.min_hidden_preactivation(&inputs),
        tolerance,
        passed: max_rel < tolerance,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: MlpSpec,
    layers: Vec<CheckpointLayer>,
}

const CHECKPOINT_FORMAT: &str = "gagail-mlp";
const CHECKPOINT_VERSION: u32 = 1;

impl Mlp {
    /// JSON checkpoint: `{"format","version","spec","layers":[{"shape":[rows,cols],"weights","bias"}]}`.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            layers: self
                .params
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    shape: [l.rows, l.cols],
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &ck)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(r)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            ));
        }
        let params = ParamSet {
            layers: ck
                .layers
                .into_iter()
                .map(|l| Layer {
                    rows: l.shape[0],
                    cols: l.shape[1],
                    weights: l.weights,
                    bias: l.bias,
                })
                .collect(),
        };
        for l in &params.layers {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return config("checkpoint layer data does not match its shape");
            }
        }
        Mlp::from_params(MlpSpec::new(ck.spec.layer_widths, ck.spec.output)?, params)
    }
}
