//! One-hidden-layer classifier trained on the fairness-regularized objective
//!
//! ```text
//! f(θ) = mean BCE(θ) − λ · Σ_m w_m R_m(θ)
//! ```
//!
//! with full-batch Adam. Gradients are computed by hand: the metric kernels
//! supply `∂R_m/∂p`, which is chained through the sigmoid output and the
//! ReLU layer. Matchings are frozen constants of the objective.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Split, TabularDataset};
use crate::error::{Error, Result};
use crate::fair_risk::{fit_fair_risk, FairRiskModel};
use crate::metrics::{
    compute_metric_with_grad, metric_map, FairnessStructure, MetricSpec, Predictions, PROB_EPS,
};
use crate::round_sig;

pub const HIDDEN_UNITS: usize = 64;
pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Per-metric fairness weights, indexed in [`MetricSpec::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(pub [f64; 8]);

impl Weights {
    pub fn zeros() -> Self {
        Weights([0.0; 8])
    }

    pub fn single(metric: MetricSpec) -> Self {
        let mut w = [0.0; 8];
        w[metric.index()] = 1.0;
        Weights(w)
    }

    /// `w_a = alpha`, `w_b = 1 − alpha`, all others zero.
    pub fn pair(a: MetricSpec, b: MetricSpec, alpha: f64) -> Self {
        let mut w = [0.0; 8];
        w[a.index()] = alpha;
        w[b.index()] = 1.0 - alpha;
        Weights(w)
    }

    pub fn get(&self, metric: MetricSpec) -> f64 {
        self.0[metric.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn normalized(&self) -> Option<Weights> {
        let s = self.sum();
        (s > 0.0).then(|| Weights(self.0.map(|w| w / s)))
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(field, "weights must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn active(&self) -> impl Iterator<Item = (MetricSpec, f64)> + '_ {
        MetricSpec::ALL
            .into_iter()
            .map(|m| (m, self.get(m)))
            .filter(|(_, w)| *w > 0.0)
    }
}

fn default_learning_rate() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    2000
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_epsilon() -> f64 {
    1e-8
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub weights: Weights,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_epsilon")]
    pub adam_epsilon: f64,
    /// Rescale weights to sum to one before training.
    #[serde(default)]
    pub normalize_weights: bool,
    /// Probability at or above which an instance is predicted positive.
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
}

impl TrainConfig {
    pub fn new(lambda: f64, weights: Weights, seed: u64) -> Self {
        TrainConfig {
            lambda,
            weights,
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            seed,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_adam_epsilon(),
            normalize_weights: false,
            decision_threshold: default_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be finite and ≥ 0"));
        }
        self.weights.validate("weights")?;
        if self.normalize_weights && self.lambda > 0.0 && self.weights.sum() == 0.0 {
            return Err(Error::config("weights", "cannot normalize an all-zero weight vector"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return Err(Error::config("adam_epsilon", "must be positive"));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::config("decision_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Weights actually used by the objective.
    pub fn effective_weights(&self) -> Weights {
        if self.normalize_weights {
            self.weights.normalized().unwrap_or(self.weights)
        } else {
            self.weights
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Linear → ReLU → Linear → Sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl ModelParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        ModelParams {
            w1: Array2::zeros((input_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + 1) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-l1, l1).expect("finite bounds");
        let u2 = Uniform::new_inclusive(-l2, l2).expect("finite bounds");
        let w1 = Array2::from_shape_simple_fn((input_dim, hidden), || u1.sample(&mut rng));
        let w2 = Array1::from_shape_simple_fn(hidden, || u2.sample(&mut rng));
        ModelParams {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b2),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b2),
        ]
    }

    /// All parameters in a flat vector (w1 row-major, b1, w2, b2).
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let r = |v: &[f64]| v.iter().map(|&x| round_sig(x, 12)).collect::<Vec<_>>();
        serde_json::json!({
            "format_version": PARAMS_FORMAT_VERSION,
            "input_dim": self.input_dim(),
            "hidden": self.hidden(),
            "w1": self.w1.outer_iter().map(|row| r(row.as_slice().unwrap_or(&row.to_vec()))).collect::<Vec<_>>(),
            "b1": r(self.b1.as_slice().expect("standard layout")),
            "w2": r(self.w2.as_slice().expect("standard layout")),
            "b2": round_sig(self.b2, 12),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            format_version: u32,
            input_dim: usize,
            hidden: usize,
            w1: Vec<Vec<f64>>,
            b1: Vec<f64>,
            w2: Vec<f64>,
            b2: f64,
        }
        let raw: Raw = serde_json::from_value(value.clone())?;
        if raw.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::config("format_version", "unsupported parameter format"));
        }
        let flat: Vec<f64> = raw.w1.into_iter().flatten().collect();
        let w1 = Array2::from_shape_vec((raw.input_dim, raw.hidden), flat)
            .map_err(|e| Error::config("w1", e.to_string()))?;
        if raw.b1.len() != raw.hidden || raw.w2.len() != raw.hidden {
            return Err(Error::config("b1", "bias and output widths must equal `hidden`"));
        }
        Ok(ModelParams {
            w1,
            b1: raw.b1.into(),
            w2: raw.w2.into(),
            b2: raw.b2,
        })
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

struct Activations {
    pre: Array2<f64>,
    hidden: Array2<f64>,
    probs: Vec<f64>,
    /// The sigmoid output was inside the clamp range (gradient flows).
    live: Vec<bool>,
}

fn activations(params: &ModelParams, x: ArrayView2<'_, f64>) -> Result<Activations> {
    if x.ncols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: params.input_dim(),
            actual: x.ncols(),
        });
    }
    let pre = x.dot(&params.w1) + &params.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let logits = hidden.dot(&params.w2);
    let mut probs = Vec::with_capacity(logits.len());
    let mut live = Vec::with_capacity(logits.len());
    for &z in logits.iter() {
        let p = sigmoid(z + params.b2);
        live.push(p > PROB_EPS && p < 1.0 - PROB_EPS);
        probs.push(p.clamp(PROB_EPS, 1.0 - PROB_EPS));
    }
    Ok(Activations {
        pre,
        hidden,
        probs,
        live,
    })
}

/// Predicted probabilities, clamped to `[1e-8, 1 − 1e-8]`.
pub fn forward(params: &ModelParams, features: ArrayView2<'_, f64>) -> Result<Predictions> {
    let act = activations(params, features)?;
    Predictions::new(act.probs)
}

pub fn accuracy(preds: &Predictions, labels: &[u8], threshold: f64) -> f64 {
    let correct = preds
        .as_slice()
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= threshold) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

fn bce(p: f64, y: u8) -> f64 {
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `loss − λ · fairness`
    pub objective: f64,
    pub loss: f64,
    /// Weighted fairness term; absent when λ = 0.
    pub fairness: Option<f64>,
}

fn evaluate(
    params: &ModelParams,
    features: ArrayView2<'_, f64>,
    structure: &FairnessStructure,
    config: &TrainConfig,
    want_grad: bool,
) -> Result<(ObjectiveTerms, Option<ModelParams>)> {
    let act = activations(params, features)?;
    let n = act.probs.len();
    if n != structure.len() {
        return Err(Error::ShapeMismatch {
            expected: structure.len(),
            actual: n,
        });
    }
    let labels = &structure.labels;
    let loss = act
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce(p, y))
        .sum::<f64>()
        / n as f64;

    // ∂f/∂p
    let mut dp = vec![0.0; n];
    if want_grad {
        for (i, (&p, &y)) in act.probs.iter().zip(labels).enumerate() {
            dp[i] = if y == 1 { -1.0 / p } else { 1.0 / (1.0 - p) } / n as f64;
        }
    }

    let preds = Predictions::new(act.probs.clone())?;
    let fairness = if config.lambda > 0.0 {
        let mut total = 0.0;
        for (metric, w) in config.effective_weights().active() {
            let scale = -config.lambda * w;
            let value = if want_grad {
                compute_metric_with_grad(metric, &preds, structure, &mut dp, scale)?
            } else {
                crate::metrics::compute_metric(metric, &preds, structure)?
            };
            total += w * value.value;
        }
        Some(total)
    } else {
        None
    };
    let terms = ObjectiveTerms {
        objective: loss - config.lambda * fairness.unwrap_or(0.0),
        loss,
        fairness,
    };
    if !terms.objective.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    if !want_grad {
        return Ok((terms, None));
    }

    let dz: Array1<f64> = act
        .probs
        .iter()
        .zip(&act.live)
        .zip(&dp)
        .map(|((&p, &live), &d)| if live { d * p * (1.0 - p) } else { 0.0 })
        .collect();
    let gw2 = act.hidden.t().dot(&dz);
    let gb2 = dz.sum();
    let mut dpre = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&params.w2.view().insert_axis(Axis(0)));
    dpre.zip_mut_with(&act.pre, |d, &a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });
    let gw1 = features.t().dot(&dpre);
    let gb1 = dpre.sum_axis(Axis(0));
    let grads = ModelParams {
        w1: gw1.as_standard_layout().into_owned(),
        b1: gb1,
        w2: gw2,
        b2: gb2,
    };
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((terms, Some(grads)))
}

/// Objective value on one split; only metrics with `w_m > 0` are evaluated.
pub fn objective(
    params: &ModelParams,
    features: ArrayView2<'_, f64>,
    structure: &FairnessStructure,
    config: &TrainConfig,
) -> Result<ObjectiveTerms> {
    evaluate(params, features, structure, config, false).map(|(t, _)| t)
}

/// Exact gradient of the objective with respect to every parameter.
pub fn gradient(
    params: &ModelParams,
    features: ArrayView2<'_, f64>,
    structure: &FairnessStructure,
    config: &TrainConfig,
) -> Result<(ObjectiveTerms, ModelParams)> {
    evaluate(params, features, structure, config, true).map(|(t, g)| (t, g.expect("requested")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `step` starts at 1.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: AdamConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..params.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.n_params();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) {
    state.step += 1;
    let mut flat = params.to_flat();
    adam_update(
        &mut flat,
        &grads.to_flat(),
        &mut state.m,
        &mut state.v,
        state.step,
        lr,
        cfg,
    );
    params.set_flat(&flat);
}

/// Features plus frozen fairness structure for one split.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub split: Split,
    pub features: Array2<f64>,
    pub structure: FairnessStructure,
}

/// A dataset with its fair-risk model fitted and every split's matchings
/// built. Shared read-only across training runs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub fair_risk: FairRiskModel,
    pub train: SplitData,
    pub dev: SplitData,
    pub test: SplitData,
}

impl PreparedData {
    pub fn new(ds: &TabularDataset) -> Result<Self> {
        let fair_risk = fit_fair_risk(ds)?;
        let split = |s: Split| -> Result<SplitData> {
            let view = ds.view(s);
            let scores = fair_risk.score_rows(view.fair_features.view());
            Ok(SplitData {
                split: s,
                structure: FairnessStructure::new(view.labels, view.group, scores)?,
                features: view.features,
            })
        };
        Ok(PreparedData {
            name: ds.name.clone(),
            train: split(Split::Train)?,
            dev: split(Split::Dev)?,
            test: split(Split::Test)?,
            fair_risk,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train.features.ncols()
    }

    pub fn split(&self, s: Split) -> &SplitData {
        match s {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub loss: f64,
    pub fairness: Option<f64>,
    pub dev_accuracy: f64,
    pub dev_metrics: BTreeMap<String, f64>,
}

/// Accuracy and metric values of a parameter set on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub split: Split,
    pub accuracy: f64,
    pub metrics: BTreeMap<String, f64>,
}

pub fn evaluate_split(
    params: &ModelParams,
    data: &SplitData,
    threshold: f64,
) -> Result<Evaluation> {
    let preds = forward(params, data.features.view())?;
    Ok(Evaluation {
        split: data.split,
        accuracy: accuracy(&preds, &data.structure.labels, threshold),
        metrics: metric_map(&preds, &data.structure),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Final-epoch parameters evaluated on dev and test.
    pub dev: Evaluation,
    pub test: Evaluation,
    /// Epoch (1-based) with the highest dev accuracy, first on ties.
    pub best_dev_epoch: usize,
}

impl TrainTrace {
    /// One JSON object per epoch, newline-terminated.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Training stopped early; `epochs` holds the records up to the failure.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub epochs: Vec<EpochRecord>,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training failed after {} epochs: {}",
            self.epochs.len(),
            self.error
        )
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        TrainFailure {
            error,
            epochs: Vec::new(),
        }
    }
}

/// Full-batch Adam on the train split, evaluating dev after every epoch.
/// Returns the final-epoch parameters.
pub fn train_prepared(
    data: &PreparedData,
    config: &TrainConfig,
) -> std::result::Result<(ModelParams, TrainTrace), TrainFailure> {
    config.validate()?;
    let mut params = ModelParams::glorot(data.input_dim(), HIDDEN_UNITS, config.seed);
    let mut state = AdamState::new(&params);
    let mut epochs = Vec::with_capacity(config.epochs);
    let threshold = config.decision_threshold;
    for epoch in 1..=config.epochs {
        let step = gradient(
            &params,
            data.train.features.view(),
            &data.train.structure,
            config,
        )
        .and_then(|(terms, grads)| {
            adam_step(
                &mut params,
                &grads,
                &mut state,
                config.learning_rate,
                config.adam(),
            );
            if !params.is_finite() {
                return Err(Error::NonFinite("parameters".into()));
            }
            let dev = evaluate_split(&params, &data.dev, threshold)?;
            Ok(EpochRecord {
                epoch,
                objective: terms.objective,
                loss: terms.loss,
                fairness: terms.fairness,
                dev_accuracy: dev.accuracy,
                dev_metrics: dev.metrics,
            })
        });
        match step {
            Ok(record) => epochs.push(record),
            Err(error) => return Err(TrainFailure { error, epochs }),
        }
    }
    let dev = evaluate_split(&params, &data.dev, threshold)?;
    let test = evaluate_split(&params, &data.test, threshold)?;
    let best_dev_epoch = epochs
        .iter()
        .fold((0, f64::NEG_INFINITY), |(best, acc), e| {
            if e.dev_accuracy > acc {
                (e.epoch, e.dev_accuracy)
            } else {
                (best, acc)
            }
        })
        .0;
    Ok((
        params,
        TrainTrace {
            epochs,
            dev,
            test,
            best_dev_epoch,
        },
    ))
}

pub fn train(
    ds: &TabularDataset,
    config: &TrainConfig,
) -> std::result::Result<(ModelParams, TrainTrace), TrainFailure> {
    let data = PreparedData::new(ds)?;
    train_prepared(&data, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Group;
    use crate::metrics::compute_metric;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (ModelParams, Array2<f64>, FairnessStructure) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::glorot(d, 8, seed + 1);
        params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        params.b2 = rng.random_range(-0.5..0.5);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let mut group: Vec<Group> = (0..n)
            .map(|_| if rng.random_bool(0.5) { Group::Unprivileged } else { Group::Privileged })
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        group[0] = Group::Unprivileged;
        group[1] = Group::Privileged;
        labels[0] = 1;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        (params, x, FairnessStructure::new(labels, group, scores).unwrap())
    }

    #[test]
    fn zero_params_predict_one_half() {
        let params = ModelParams::zeros(3, HIDDEN_UNITS);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64);
        let p = forward(&params, x.view()).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn one_unit_subnetwork_by_hand() {
        let mut params = ModelParams::zeros(2, HIDDEN_UNITS);
        params.w1[[0, 0]] = 0.5;
        params.w1[[1, 0]] = -1.5;
        params.b1[0] = 0.25;
        params.w2[0] = 2.0;
        params.b2 = -0.75;
        let x = ndarray::array![[1.0, 0.2], [-1.0, 0.4]];
        let p = forward(&params, x.view()).unwrap();
        // row 0: h = relu(0.5 − 0.3 + 0.25) = 0.45, z = 0.9 − 0.75 = 0.15
        let e0 = 1.0 / (1.0 + (-0.15f64).exp());
        // row 1: h = relu(−0.5 − 0.6 + 0.25) = 0, z = −0.75
        let e1 = 1.0 / (1.0 + 0.75f64.exp());
        assert!((p.as_slice()[0] - e0).abs() < 1e-12);
        assert!((p.as_slice()[1] - e1).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let (params, x, _) = random_problem(7, 12, 5);
        let p = forward(&params, x.view()).unwrap();
        for i in 0..x.nrows() {
            let mut z = params.b2;
            for h in 0..params.hidden() {
                let mut a = params.b1[h];
                for j in 0..x.ncols() {
                    a += x[[i, j]] * params.w1[[j, h]];
                }
                z += a.max(0.0) * params.w2[h];
            }
            let expect = (1.0 / (1.0 + (-z).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS);
            assert!((p.as_slice()[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let params = ModelParams::zeros(3, 4);
        let x = Array2::zeros((2, 4));
        assert!(matches!(
            forward(&params, x.view()),
            Err(Error::ShapeMismatch { expected: 3, actual: 4 })
        ));
    }

    #[test]
    fn lambda_zero_objective_is_mean_bce() {
        let (params, x, s) = random_problem(3, 10, 4);
        let config = TrainConfig::new(0.0, Weights::single(MetricSpec::ALL[0]), 0);
        let terms = objective(&params, x.view(), &s, &config).unwrap();
        let p = forward(&params, x.view()).unwrap();
        let bce_oracle: f64 = p
            .as_slice()
            .iter()
            .zip(&s.labels)
            .map(|(&p, &y)| -(f64::from(y) * p.ln() + (1.0 - f64::from(y)) * (1.0 - p).ln()))
            .sum::<f64>()
            / 10.0;
        assert!((terms.objective - bce_oracle).abs() < 1e-12);
        assert_eq!(terms.fairness, None);
    }

    #[test]
    fn objective_composes_loss_and_metrics() {
        let (params, x, s) = random_problem(5, 10, 4);
        let mut w = Weights::zeros();
        w.0[2] = 0.3;
        w.0[6] = 0.7;
        let config = TrainConfig::new(1.7, w, 0);
        let terms = objective(&params, x.view(), &s, &config).unwrap();
        let p = forward(&params, x.view()).unwrap();
        let r = 0.3 * compute_metric(MetricSpec::ALL[2], &p, &s).unwrap().value
            + 0.7 * compute_metric(MetricSpec::ALL[6], &p, &s).unwrap().value;
        assert!((terms.objective - (terms.loss - 1.7 * r)).abs() < 1e-10);
    }

    #[test]
    fn objective_arithmetic_example() {
        // zero parameters: every p = 0.5, BCE = ln 2 and every metric = 1
        let s = FairnessStructure::new(
            vec![1, 0, 1, 0],
            vec![Group::Unprivileged, Group::Unprivileged, Group::Privileged, Group::Privileged],
            vec![0.2, 0.4, 0.3, 0.5],
        )
        .unwrap();
        let params = ModelParams::zeros(2, HIDDEN_UNITS);
        let x = Array2::zeros((4, 2));
        let config = TrainConfig::new(1.0, Weights::single(MetricSpec::ALL[6]), 0);
        let terms = objective(&params, x.view(), &s, &config).unwrap();
        assert!((terms.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((terms.objective - (std::f64::consts::LN_2 - 1.0)).abs() < 1e-12);
    }

    fn fd_gradient(
        params: &ModelParams,
        x: &Array2<f64>,
        s: &FairnessStructure,
        config: &TrainConfig,
    ) -> Vec<f64> {
        let h = 1e-5;
        let base = params.to_flat();
        let mut out = vec![0.0; base.len()];
        let mut p = params.clone();
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] += h;
            p.set_flat(&v);
            let up = objective(&p, x.view(), s, config).unwrap().objective;
            v[i] -= 2.0 * h;
            p.set_flat(&v);
            let dn = objective(&p, x.view(), s, config).unwrap().objective;
            out[i] = (up - dn) / (2.0 * h);
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..4 {
            let (params, x, s) = random_problem(20 + seed, 10, 4);
            for metric in MetricSpec::ALL {
                let config = TrainConfig::new(0.8, Weights::single(metric), 0);
                let (_, g) = gradient(&params, x.view(), &s, &config).unwrap();
                let fd = fd_gradient(&params, &x, &s, &config);
                for (i, (a, n)) in g.to_flat().iter().zip(&fd).enumerate() {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
                    assert!(rel < 1e-4, "{metric} seed {seed} coord {i}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn lambda_zero_gradient_is_plain_backprop() {
        let (params, x, s) = random_problem(2, 10, 4);
        let a = TrainConfig::new(0.0, Weights::single(MetricSpec::ALL[3]), 0);
        let b = TrainConfig::new(0.0, Weights::zeros(), 0);
        let (_, ga) = gradient(&params, x.view(), &s, &a).unwrap();
        let (_, gb) = gradient(&params, x.view(), &s, &b).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn fairness_gradient_ascends_the_metric() {
        let (params, x, s) = random_problem(8, 10, 4);
        for metric in MetricSpec::ALL {
            let config = TrainConfig::new(1.0, Weights::single(metric), 0);
            let loss_only = TrainConfig::new(0.0, Weights::zeros(), 0);
            let (_, g) = gradient(&params, x.view(), &s, &config).unwrap();
            let (_, gl) = gradient(&params, x.view(), &s, &loss_only).unwrap();
            // −∇f with the loss part removed is λ·∇R
            let dir: Vec<f64> = gl.to_flat().iter().zip(g.to_flat()).map(|(l, f)| l - f).collect();
            let step = 1e-6;
            let mut moved = params.clone();
            let flat: Vec<f64> = params.to_flat().iter().zip(&dir).map(|(p, d)| p + step * d).collect();
            moved.set_flat(&flat);
            let before = compute_metric(metric, &forward(&params, x.view()).unwrap(), &s).unwrap();
            let after = compute_metric(metric, &forward(&moved, x.view()).unwrap(), &s).unwrap();
            assert!(after.value >= before.value, "{metric}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = [1.0, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 0.1, AdamConfig::default());
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn adam_scalar_recursion() {
        let cfg = AdamConfig::default();
        let (mut x, mut m, mut v) = ([1.0], [0.0], [0.0]);
        adam_update(&mut x, &[2.0 * 1.0], &mut m, &mut v, 1, 0.1, cfg);
        // first bias-corrected step has magnitude lr
        assert!((x[0] - 0.9).abs() < 1e-7);
        let g2 = 2.0 * x[0];
        adam_update(&mut x, &[g2], &mut m, &mut v, 2, 0.1, cfg);

        // hand recursion
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let mut xr = 1.0f64;
        let (mut mr, mut vr) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 2.0 * xr;
            mr = b1 * mr + (1.0 - b1) * g;
            vr = b2 * vr + (1.0 - b2) * g * g;
            let mh = mr / (1.0 - b1.powi(t));
            let vh = vr / (1.0 - b2.powi(t));
            xr -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((x[0] - xr).abs() < 1e-12);
    }

    #[test]
    fn glorot_is_seeded() {
        assert_eq!(ModelParams::glorot(5, 64, 3), ModelParams::glorot(5, 64, 3));
        assert_ne!(ModelParams::glorot(5, 64, 3), ModelParams::glorot(5, 64, 4));
        let p = ModelParams::glorot(10, 64, 1);
        let limit = (6.0f64 / 74.0).sqrt();
        assert!(p.w1.iter().all(|w| w.abs() <= limit));
        assert!(p.b1.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn params_json_round_trip() {
        let p = ModelParams::glorot(3, 4, 9);
        let back = ModelParams::from_json(&p.to_json()).unwrap();
        for (a, b) in p.to_flat().iter().zip(back.to_flat()) {
            assert!((a - b).abs() <= 1e-11 * a.abs());
        }
    }

    fn separable_dataset(n: usize) -> TabularDataset {
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        let mut group = Vec::new();
        let mut split = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let sign = if y == 1 { 1.0 } else { -1.0 };
            x[[i, 0]] = sign * (1.0 + (i % 7) as f64 * 0.1);
            x[[i, 1]] = ((i * 37) % 11) as f64 / 11.0 - 0.5;
            labels.push(y);
            group.push(if (i / 2) % 2 == 0 { Group::Unprivileged } else { Group::Privileged });
            split.push(match i % 10 {
                0..=5 => Split::Train,
                6 | 7 => Split::Dev,
                _ => Split::Test,
            });
        }
        let fair = x.column(0).to_owned().insert_axis(Axis(1));
        TabularDataset::from_parts(
            "separable",
            vec!["a".into(), "b".into()],
            x,
            labels,
            group,
            vec!["a".into()],
            fair,
            split,
        )
        .unwrap()
    }

    #[test]
    fn separable_data_is_learned() {
        let ds = separable_dataset(40);
        let mut config = TrainConfig::new(0.0, Weights::zeros(), 1);
        config.learning_rate = 0.01;
        config.epochs = 300;
        let (params, trace) = train(&ds, &config).unwrap();
        let all = forward(&params, ds.features.view()).unwrap();
        assert!(accuracy(&all, &ds.labels, 0.5) >= 0.95);
        assert_eq!(trace.epochs.len(), 300);
        assert!(trace.epochs.last().unwrap().loss < trace.epochs[0].loss);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable_dataset(40);
        let mut config = TrainConfig::new(1.0, Weights::single(MetricSpec::ALL[4]), 5);
        config.epochs = 25;
        let (pa, ta) = train(&ds, &config).unwrap();
        let (pb, tb) = train(&ds, &config).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ta.to_jsonl().unwrap(), tb.to_jsonl().unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(-1.0, Weights::zeros(), 0);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { field, .. }) if field == "lambda"));
        c.lambda = 1.0;
        c.weights.0[3] = -0.1;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { field, .. }) if field == "weights"));
        c.weights = Weights([1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        c.normalize_weights = true;
        assert!(c.validate().is_ok());
        assert!((c.effective_weights().sum() - 1.0).abs() < 1e-12);
        let bad: std::result::Result<TrainConfig, _> =
            serde_json::from_str(r#"{"lambda": 1, "weights": [1,0,0,0,0,0,0]}"#);
        assert!(bad.is_err());
    }
}
