//! Fully connected classifier with one two-unit output group per predicted
//! label, class-weighted losses and minibatch SGD with momentum.
//!
//! Output group `g` owns logits `(z[2g], z[2g+1])`; unit 1 stands for a
//! stock-out. Hinge and Euclidean heads read the group through the single
//! score `s = z[2g+1] - z[2g]`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "stockout-model";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: [usize; 2] = [350, 150];

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("input width mismatch: expected D={expected}, got {actual}")]
    InputWidth { expected: usize, actual: usize },
    #[error("label width mismatch: expected {expected}, got {actual}")]
    LabelWidth { expected: usize, actual: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    /// Identity; the layer is a plain inner product.
    InnerProduct,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::InnerProduct => {}
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::InnerProduct => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Softmax,
    Hinge,
    Euclidean,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::Hinge => "hinge",
            LossKind::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "softmax" => Ok(LossKind::Softmax),
            "hinge" => Ok(LossKind::Hinge),
            "euclidean" => Ok(LossKind::Euclidean),
            other => Err(format!(
                "unknown loss {other:?} (softmax, hinge, euclidean)"
            )),
        }
    }
}

/// `c_p` weighs groups labelled 1, `c_n` groups labelled 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub c_p: f64,
    pub c_n: f64,
}

impl LossSpec {
    pub fn unweighted(kind: LossKind) -> Self {
        LossSpec {
            kind,
            c_p: 1.0,
            c_n: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if self.c_p > 0.0 && self.c_n > 0.0 && self.c_p.is_finite() && self.c_n.is_finite() {
            Ok(())
        } else {
            Err(NnetError::InvalidConfig(format!(
                "class weights must be positive (c_p={}, c_n={})",
                self.c_p, self.c_n
            )))
        }
    }

    pub fn weight(&self, label: u8) -> f64 {
        if label == 1 {
            self.c_p
        } else {
            self.c_n
        }
    }

    /// Loss of one group and its gradient with respect to the two logits.
    pub fn group(&self, z: [f64; 2], label: u8) -> (f64, [f64; 2]) {
        let w = self.weight(label);
        let y = f64::from(label);
        match self.kind {
            LossKind::Softmax => {
                let p = softmax2(z);
                let onehot = [1.0 - y, y];
                let loss = -w * log_softmax2(z)[label as usize];
                (loss, [w * (p[0] - onehot[0]), w * (p[1] - onehot[1])])
            }
            LossKind::Hinge => {
                let s = z[1] - z[0];
                let sign = 2.0 * y - 1.0;
                let margin = 1.0 - sign * s;
                if margin > 0.0 {
                    (w * margin, [w * sign, -w * sign])
                } else {
                    (0.0, [0.0, 0.0])
                }
            }
            LossKind::Euclidean => {
                let s = z[1] - z[0];
                let r = s - y;
                (w * r * r, [-2.0 * w * r, 2.0 * w * r])
            }
        }
    }

    pub fn decide(&self, z: [f64; 2]) -> u8 {
        match self.kind {
            LossKind::Softmax | LossKind::Hinge => u8::from(z[1] > z[0]),
            LossKind::Euclidean => u8::from(z[1] - z[0] >= 0.5),
        }
    }
}

pub fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let sum = e[0] + e[1];
    [e[0] / sum, e[1] / sum]
}

fn log_softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Number of two-unit output groups.
    pub groups: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: &[usize], groups: usize) -> Self {
        Architecture {
            input_dim,
            hidden: hidden.to_vec(),
            activation: Activation::Sigmoid,
            groups,
        }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if self.input_dim == 0 || self.groups == 0 || self.hidden.contains(&0) {
            return Err(NnetError::InvalidConfig(format!(
                "input width, hidden sizes and group count must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(2 * self.groups);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.0005,
            weight_decay: 0.0001,
            batch_size: 50,
            max_epochs: 3,
            tol: 1e-6,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.batch_size >= 1
            && self.max_epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(NnetError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Learning rate, momentum and weight decay for a builtin network family.
pub fn preset(net: &str) -> Option<(f64, f64, f64)> {
    Some(match net {
        "serial" => (0.001, 0.0005, 0.0001),
        "distribution" => (0.0005, 0.001, 0.0005),
        "owmr" => (0.001, 0.0005, 0.0005),
        "complex1" => (0.05, 5e-6, 5e-6),
        "complex2" => (0.05, 0.05, 0.05),
        "complex2-multi" => (0.005, 0.005, 0.005),
        _ => return None,
    })
}

/// Maps a builtin topology name to its preset family.
pub fn preset_family(topology: &str) -> Option<&'static str> {
    let base = topology.split('-').next()?;
    ["serial", "distribution", "owmr", "complex1", "complex2"]
        .into_iter()
        .find(|f| *f == base)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in x out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

impl Model {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Model, NnetError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = arch.widths();
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-bound..=bound)
                });
                Layer {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Model {
            arch: arch.clone(),
            layers,
            seed,
        })
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnetError> {
        if x.ncols() != self.arch.input_dim {
            return Err(NnetError::InputWidth {
                expected: self.arch.input_dim,
                actual: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFinite);
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the output logits.
    fn activations(&self, x: &ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x.view() } else { acts[i - 1].view() };
            let mut z = input.dot(&layer.w);
            z += &layer.b;
            if i < last {
                self.arch.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Output logits, `samples x 2*groups`.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnetError> {
        self.check_input(&x)?;
        Ok(self.activations(&x).pop().expect("at least one layer"))
    }

    /// Logits and per-group softmax probabilities for one input.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>), NnetError> {
        let z = self.logits(x.insert_axis(Axis(0)))?;
        let z: Vec<[f64; 2]> = z
            .row(0)
            .exact_chunks(2)
            .into_iter()
            .map(|c| [c[0], c[1]])
            .collect();
        let p = z.iter().map(|&g| softmax2(g)).collect();
        Ok((z, p))
    }

    pub fn predict(&self, x: ArrayView2<f64>, loss: &LossSpec) -> Result<Array2<u8>, NnetError> {
        let z = self.logits(x)?;
        let groups = self.arch.groups;
        Ok(Array2::from_shape_fn((z.nrows(), groups), |(r, g)| {
            loss.decide([z[[r, 2 * g]], z[[r, 2 * g + 1]]])
        }))
    }

    /// Mean over samples of the per-sample loss summed across groups.
    pub fn loss(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<u8>,
        spec: &LossSpec,
    ) -> Result<f64, NnetError> {
        self.check_labels(&y)?;
        let z = self.logits(x)?;
        Ok(output_grad(&z, &y, spec).0)
    }

    fn check_labels(&self, y: &ArrayView2<u8>) -> Result<(), NnetError> {
        if y.ncols() != self.arch.groups {
            return Err(NnetError::LabelWidth {
                expected: self.arch.groups,
                actual: y.ncols(),
            });
        }
        Ok(())
    }

    /// Loss as in [`Model::loss`] and its exact gradient for every parameter.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<u8>,
        spec: &LossSpec,
    ) -> Result<(f64, Gradients), NnetError> {
        self.check_input(&x)?;
        self.check_labels(&y)?;
        let acts = self.activations(&x);
        let (loss, mut delta) = output_grad(acts.last().expect("output"), &y, spec);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x.view() } else { acts[i - 1].view() };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].w.t());
                let act = self.arch.activation;
                Zip::from(&mut prev)
                    .and(&acts[i - 1])
                    .for_each(|d, &a| *d *= act.derivative(a));
                delta = prev;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Mean loss over rows and its gradient with respect to the logits.
fn output_grad(z: &Array2<f64>, y: &ArrayView2<u8>, spec: &LossSpec) -> (f64, Array2<f64>) {
    let rows = z.nrows();
    let scale = 1.0 / rows as f64;
    let mut grad = Array2::<f64>::zeros(z.raw_dim());
    let mut total = 0.0;
    for r in 0..rows {
        for g in 0..y.ncols() {
            let (l, d) = spec.group([z[[r, 2 * g]], z[[r, 2 * g + 1]]], y[[r, g]]);
            total += l;
            grad[[r, 2 * g]] = d[0] * scale;
            grad[[r, 2 * g + 1]] = d[1] * scale;
        }
    }
    (total * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean minibatch loss of each completed epoch.
    pub history: Vec<f64>,
    pub stopped_on_tol: bool,
}

/// Minibatch SGD with momentum: `v <- momentum*v - lr*(grad + decay*w)`,
/// `w <- w + v`. Weight decay applies to weight matrices, not biases.
pub fn train(
    model: &mut Model,
    x: ArrayView2<f64>,
    y: ArrayView2<u8>,
    spec: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnetError> {
    spec.validate()?;
    cfg.validate()?;
    model.check_input(&x)?;
    model.check_labels(&y)?;
    if x.nrows() != y.nrows() {
        return Err(NnetError::InvalidConfig(format!(
            "{} inputs but {} label rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(NnetError::InvalidConfig("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut velocity: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer {
            w: Array2::zeros(l.w.raw_dim()),
            b: Array1::zeros(l.b.raw_dim()),
        })
        .collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by = y.select(Axis(0), chunk);
            let (loss, grads) = model.backward(bx.view(), by.view(), spec)?;
            if !loss.is_finite() {
                return Err(NnetError::Diverged { epoch: epoch + 1 });
            }
            sum += loss;
            batches += 1;
            for ((layer, v), g) in model
                .layers
                .iter_mut()
                .zip(&mut velocity)
                .zip(&grads.layers)
            {
                Zip::from(&mut v.w)
                    .and(&g.w)
                    .and(&layer.w)
                    .for_each(|v, &g, &w| {
                        *v = cfg.momentum * *v - cfg.learning_rate * (g + cfg.weight_decay * w);
                    });
                Zip::from(&mut v.b).and(&g.b).for_each(|v, &g| {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                });
                layer.w += &v.w;
                layer.b += &v.b;
            }
        }
        let mean = sum / batches as f64;
        history.push(mean);
        if mean < cfg.tol {
            return Ok(TrainOutcome {
                history,
                stopped_on_tol: true,
            });
        }
    }
    if model
        .layers
        .iter()
        .any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite()))
    {
        return Err(NnetError::Diverged {
            epoch: history.len(),
        });
    }
    Ok(TrainOutcome {
        history,
        stopped_on_tol: false,
    })
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<S> {
    format: String,
    version: u32,
    architecture: Architecture,
    seed: u64,
    loss: LossSpec,
    train: TrainConfig,
    extra: S,
    layers: Vec<LayerFile>,
}

pub fn save_model<S: Serialize>(
    path: &Path,
    model: &Model,
    loss: &LossSpec,
    train: &TrainConfig,
    extra: &S,
) -> Result<(), NnetError> {
    std::fs::write(path, model_to_json(model, loss, train, extra)?)?;
    Ok(())
}

pub fn model_to_json<S: Serialize>(
    model: &Model,
    loss: &LossSpec,
    train: &TrainConfig,
    extra: &S,
) -> Result<String, NnetError> {
    let env = Envelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        architecture: model.arch.clone(),
        seed: model.seed,
        loss: *loss,
        train: train.clone(),
        extra,
        layers: model
            .layers
            .iter()
            .map(|l| LayerFile {
                rows: l.w.nrows(),
                cols: l.w.ncols(),
                weights: l.w.iter().copied().collect(),
                bias: l.b.to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&env)
        .map(|s| s + "\n")
        .map_err(|e| NnetError::Format(e.to_string()))
}

/// Loaded model with its loss, training settings and caller context.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel<S> {
    pub model: Model,
    pub loss: LossSpec,
    pub train: TrainConfig,
    pub extra: S,
}

pub fn model_from_json<S: serde::de::DeserializeOwned>(
    text: &str,
) -> Result<LoadedModel<S>, NnetError> {
    let env: Envelope<S> =
        serde_json::from_str(text).map_err(|e| NnetError::Format(e.to_string()))?;
    if env.format != MODEL_FORMAT || env.version != MODEL_VERSION {
        return Err(NnetError::Format(format!(
            "unsupported model file {} v{}",
            env.format, env.version
        )));
    }
    env.architecture.validate()?;
    let widths = env.architecture.widths();
    if env.layers.len() + 1 != widths.len() {
        return Err(NnetError::Format(
            "layer count does not match architecture".into(),
        ));
    }
    let mut layers = Vec::with_capacity(env.layers.len());
    for (i, l) in env.layers.into_iter().enumerate() {
        if (l.rows, l.cols) != (widths[i], widths[i + 1]) || l.bias.len() != l.cols {
            return Err(NnetError::Format(format!("layer {i} has the wrong shape")));
        }
        let w = Array2::from_shape_vec((l.rows, l.cols), l.weights)
            .map_err(|e| NnetError::Format(e.to_string()))?;
        layers.push(Layer {
            w,
            b: Array1::from(l.bias),
        });
    }
    Ok(LoadedModel {
        model: Model {
            arch: env.architecture,
            layers,
            seed: env.seed,
        },
        loss: env.loss,
        train: env.train,
        extra: env.extra,
    })
}

pub fn load_model<S: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<LoadedModel<S>, NnetError> {
    model_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax2([0.0, 0.0]), [0.5, 0.5]);
        let p = softmax2([3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let q = softmax2([3f64.ln() + 40.0, 40.0]);
        assert!((q[0] - p[0]).abs() < 1e-15);
        let big = softmax2([1000.0, -1000.0]);
        assert!(big[0].is_finite() && big[1] >= 0.0);
    }

    #[test]
    fn weighted_softmax_loss_and_gradient() {
        let spec = LossSpec {
            kind: LossKind::Softmax,
            c_p: 2.0,
            c_n: 1.0,
        };
        let (l, _) = spec.group([0.0, 0.0], 1);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        let unit = LossSpec::unweighted(LossKind::Softmax);
        let (_, g) = unit.group([3f64.ln(), 0.0], 1);
        assert!((g[0] - 0.75).abs() < 1e-15 && (g[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn euclidean_and_hinge_values() {
        let e = LossSpec::unweighted(LossKind::Euclidean);
        assert_eq!(e.group([0.0, 0.0], 0).0, 0.0);
        assert_eq!(e.group([0.0, 0.0], 1).0, 1.0);
        let h = LossSpec {
            kind: LossKind::Hinge,
            c_p: 3.0,
            c_n: 1.0,
        };
        assert_eq!(h.group([0.0, 2.0], 1).0, 0.0);
        assert_eq!(h.group([0.0, 0.5], 1).0, 1.5);
        assert_eq!(h.group([0.0, 0.5], 0).0, 1.5);
    }

    #[test]
    fn decision_rules() {
        let soft = LossSpec::unweighted(LossKind::Softmax);
        assert_eq!(soft.decide([0.3f64.ln(), 0.7f64.ln()]), 1);
        assert_eq!(soft.decide([0.0, 0.0]), 0);
        let e = LossSpec::unweighted(LossKind::Euclidean);
        assert_eq!(e.decide([0.0, 0.49]), 0);
        assert_eq!(e.decide([0.0, 0.5]), 1);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::new(100, &[7], 1);
        let a = Model::init(&arch, 3).unwrap();
        assert_eq!(a, Model::init(&arch, 3).unwrap());
        assert_ne!(a, Model::init(&arch, 4).unwrap());
        assert!(a.layers[0].w.iter().all(|w| w.abs() <= 0.1));
        assert!(a.layers.iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn forward_probabilities_sum_to_one() {
        let arch = Architecture::new(3, &[4], 2);
        let m = Model::init(&arch, 1).unwrap();
        let (_, p) = m.forward(array![0.5, -1.0, 2.0].view()).unwrap();
        for g in p {
            assert!((g[0] + g[1] - 1.0).abs() < 1e-12);
        }
        let err = m.forward(array![1.0, 2.0].view()).unwrap_err();
        assert!(matches!(
            err,
            NnetError::InputWidth {
                expected: 3,
                actual: 2
            }
        ));
        assert!(matches!(
            m.forward(array![f64::NAN, 0.0, 0.0].view()),
            Err(NnetError::NonFinite)
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let arch = Architecture::new(2, &[3], 1);
        let mut m = Model::init(&arch, 9).unwrap();
        let before = m.clone();
        let x = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = array![[0u8], [1], [1]];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            weight_decay: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let out = train(
            &mut m,
            x.view(),
            y.view(),
            &LossSpec::unweighted(LossKind::Softmax),
            &cfg,
        )
        .unwrap();
        assert_eq!(m, before);
        assert!(out.history.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let arch = Architecture::new(5, &[4, 3], 2);
        let m = Model::init(&arch, 11).unwrap();
        let spec = LossSpec {
            kind: LossKind::Hinge,
            c_p: 0.3,
            c_n: 14.7,
        };
        let cfg = TrainConfig::default();
        let text = model_to_json(&m, &spec, &cfg, &vec![0.1f64, 1.0 / 3.0]).unwrap();
        let back: LoadedModel<Vec<f64>> = model_from_json(&text).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.loss, spec);
        assert_eq!(back.extra, vec![0.1, 1.0 / 3.0]);
        assert_eq!(
            model_to_json(&back.model, &back.loss, &back.train, &back.extra).unwrap(),
            text
        );
    }

    #[test]
    fn presets_cover_every_family() {
        assert_eq!(preset("serial"), Some((0.001, 0.0005, 0.0001)));
        assert_eq!(preset("complex2"), Some((0.05, 0.05, 0.05)));
        assert_eq!(preset_family("distribution-13"), Some("distribution"));
        assert_eq!(preset_family("custom"), None);
    }
}
