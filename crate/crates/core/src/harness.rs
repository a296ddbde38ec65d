//! λ sweeps, α sweeps, consensus sweeps and stakeholder search.
//!
//! Every operation expands a plan into independent runs, trains them on a
//! bounded rayon pool and returns [`FrontierPoint`]s in plan order. Runs are
//! keyed by a content hash of their configuration, so results do not depend
//! on which worker finished first.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset_with, DatasetSchema, LoadOptions, Split, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::MetricSpec;
use crate::model::{
    train_prepared, EpochRecord, ModelParams, PreparedData, TrainConfig, TrainTrace, Weights,
};

pub const FRONTIER_FILE: &str = "frontier.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const TRACE_DIR: &str = "traces";
pub const PARAMS_DIR: &str = "params";

/// Accuracies are compared against the tolerance floor with this much slack,
/// so that `0.90 − 0.05` admits a candidate at exactly `0.85`.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A schema given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Inline(Box<DatasetSchema>),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub csv: PathBuf,
    pub schema: SchemaSource,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_fractions")]
    pub split_fractions: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rows: Option<usize>,
}

impl DatasetRef {
    /// Makes relative paths relative to `base` (usually the plan's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.csv.is_relative() {
            self.csv = base.join(&self.csv);
        }
        if let SchemaSource::Path(p) = &mut self.schema {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn schema(&self) -> Result<DatasetSchema> {
        match &self.schema {
            SchemaSource::Inline(s) => {
                s.validate()?;
                Ok((**s).clone())
            }
            SchemaSource::Path(p) => DatasetSchema::from_json_file(p),
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            split_seed: self.split_seed,
            split_fractions: self.split_fractions,
            max_rows: self.max_rows,
        }
    }

    pub fn load(&self) -> Result<TabularDataset> {
        load_dataset_with(&self.csv, &self.schema()?, &self.load_options())
    }

    pub fn prepare(&self) -> Result<LoadedDataset> {
        LoadedDataset::new(&self.load()?)
    }
}

/// Content fingerprint of an encoded, split dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIdentity {
    pub name: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub sha256: String,
}

impl DatasetIdentity {
    pub fn of(ds: &TabularDataset) -> Self {
        let mut h = Sha256::new();
        h.update(ds.name.as_bytes());
        for names in [&ds.feature_names, &ds.fair_feature_names] {
            for n in names {
                h.update(n.as_bytes());
                h.update([0]);
            }
            h.update([1]);
        }
        for v in ds.features.iter().chain(ds.fair_features.iter()) {
            h.update(v.to_le_bytes());
        }
        h.update(&ds.labels);
        for (g, s) in ds.group.iter().zip(&ds.split) {
            h.update([*g as u8, *s as u8]);
        }
        DatasetIdentity {
            name: ds.name.clone(),
            n_rows: ds.len(),
            n_features: ds.n_features(),
            sha256: hex::encode(h.finalize()),
        }
    }
}

/// A dataset ready for training: fingerprint plus fitted fair-risk model and
/// per-split matchings.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub identity: DatasetIdentity,
    pub data: PreparedData,
}

impl LoadedDataset {
    pub fn new(ds: &TabularDataset) -> Result<Self> {
        Ok(LoadedDataset {
            identity: DatasetIdentity::of(ds),
            data: PreparedData::new(ds)?,
        })
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

/// Training settings shared by every run of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub normalize_weights: bool,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_adam_epsilon(),
            normalize_weights: false,
            decision_threshold: default_threshold(),
        }
    }
}

impl TrainSettings {
    pub fn config(&self, lambda: f64, weights: Weights, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda,
            weights,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            normalize_weights: self.normalize_weights,
            decision_threshold: self.decision_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config(0.0, Weights::zeros(), 0)
            .validate()
            .map_err(|e| prefix_field("train", e))
    }
}

fn prefix_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, message } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

fn validate_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::config("seeds", "seeds must be distinct"));
    }
    Ok(())
}

fn validate_lambda(field: &str, l: f64) -> Result<()> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::config(field, "λ values must be finite and ≥ 0"));
    }
    Ok(())
}

/// A single configuration trained under one or more seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub dataset: DatasetRef,
    pub lambda: f64,
    pub weights: Weights,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        validate_lambda("lambda", self.lambda)?;
        self.weights.validate("weights")?;
        validate_seeds(&self.seeds)?;
        self.train.validate()
    }
}

/// λ sweep (no `alpha_grid`) or α sweep (`alpha_grid` with a single λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub dataset: DatasetRef,
    pub lambda_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_a: Option<MetricSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_b: Option<MetricSpec>,
    #[serde(default)]
    pub base_weights: Weights,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
}

impl SweepPlan {
    pub fn is_alpha(&self) -> bool {
        self.alpha_grid.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::config("lambda_grid", "grid must be nonempty"));
        }
        for &l in &self.lambda_grid {
            validate_lambda("lambda_grid", l)?;
        }
        self.base_weights.validate("base_weights")?;
        validate_seeds(&self.seeds)?;
        self.train.validate()?;
        if let Some(alphas) = &self.alpha_grid {
            if alphas.is_empty() {
                return Err(Error::config("alpha_grid", "grid must be nonempty"));
            }
            if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::config("alpha_grid", "α values must lie in [0, 1]"));
            }
            if self.lambda_grid.len() != 1 {
                return Err(Error::config(
                    "lambda_grid",
                    "an α sweep needs exactly one fixed λ",
                ));
            }
            let a = self
                .metric_a
                .ok_or_else(|| Error::config("metric_a", "required for an α sweep"))?;
            let b = self
                .metric_b
                .ok_or_else(|| Error::config("metric_b", "required for an α sweep"))?;
            if a == b {
                return Err(Error::config("metric_b", "must differ from metric_a"));
            }
        } else if self.base_weights.sum() == 0.0 && self.lambda_grid.iter().any(|&l| l > 0.0) {
            return Err(Error::config(
                "base_weights",
                "a λ sweep needs at least one positive weight",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusPlan {
    pub dataset: DatasetRef,
    pub metric_a: MetricSpec,
    pub metric_b: MetricSpec,
    pub lambda: f64,
    /// `[w_a, w_b]` pairs, each summing to one.
    pub weight_pairs: Vec<[f64; 2]>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
}

impl ConsensusPlan {
    /// The 0.9/0.1 … 0.1/0.9 ladder.
    pub fn standard_pairs() -> Vec<[f64; 2]> {
        (1..=9)
            .rev()
            .map(|i| {
                let a = i as f64 / 10.0;
                [a, 1.0 - a]
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_lambda("lambda", self.lambda)?;
        if self.metric_a == self.metric_b {
            return Err(Error::config("metric_b", "must differ from metric_a"));
        }
        if self.weight_pairs.is_empty() {
            return Err(Error::config("weight_pairs", "at least one pair is required"));
        }
        for p in &self.weight_pairs {
            if p.iter().any(|w| !w.is_finite() || *w < 0.0)
                || (p[0] + p[1] - 1.0).abs() > WEIGHT_SUM_TOLERANCE
            {
                return Err(Error::config(
                    "weight_pairs",
                    "each pair must be nonnegative and sum to 1",
                ));
            }
        }
        validate_seeds(&self.seeds)?;
        self.train.validate()
    }
}

fn default_tolerance() -> f64 {
    5.0
}

fn default_lambda_candidates() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StakeholderProfile {
    pub name: String,
    pub target_metric: MetricSpec,
    #[serde(default = "default_tolerance")]
    pub accuracy_tolerance_pp: f64,
    #[serde(default = "default_lambda_candidates")]
    pub lambda_candidates: Vec<f64>,
    /// Empty means "the target metric alone".
    #[serde(default)]
    pub weight_candidates: Vec<Weights>,
}

impl StakeholderProfile {
    pub fn new(name: impl Into<String>, target_metric: MetricSpec) -> Self {
        StakeholderProfile {
            name: name.into(),
            target_metric,
            accuracy_tolerance_pp: default_tolerance(),
            lambda_candidates: default_lambda_candidates(),
            weight_candidates: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy_tolerance_pp.is_finite() && self.accuracy_tolerance_pp > 0.0) {
            return Err(Error::config("accuracy_tolerance_pp", "must be positive"));
        }
        if self.lambda_candidates.is_empty() {
            return Err(Error::config("lambda_candidates", "must be nonempty"));
        }
        for &l in &self.lambda_candidates {
            validate_lambda("lambda_candidates", l)?;
        }
        for w in &self.weight_candidates {
            w.validate("weight_candidates")?;
            if (w.sum() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::config("weight_candidates", "each vector must sum to 1"));
            }
        }
        Ok(())
    }

    pub fn weight_grid(&self) -> Vec<Weights> {
        if self.weight_candidates.is_empty() {
            vec![Weights::single(self.target_metric)]
        } else {
            self.weight_candidates.clone()
        }
    }
}

/// Runs a stakeholder's candidate grid, then selects from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchPlan {
    pub dataset: DatasetRef,
    pub profile: StakeholderProfile,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
}

impl SearchPlan {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate().map_err(|e| prefix_field("profile", e))?;
        validate_seeds(&self.seeds)?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Run,
    SeedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed,
}

/// One trained configuration: accuracy and metric values on test (reported)
/// and on dev (used for selection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub config_hash: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default = "run_kind")]
    pub kind: PointKind,
    pub lambda: f64,
    pub weights: Weights,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "ok_status")]
    pub status: PointStatus,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default = "test_split")]
    pub split: Split,
    pub test_accuracy: Option<f64>,
    #[serde(default)]
    pub metric_values: BTreeMap<String, f64>,
    #[serde(default)]
    pub dev_accuracy: Option<f64>,
    #[serde(default)]
    pub dev_metric_values: BTreeMap<String, f64>,
}

fn run_kind() -> PointKind {
    PointKind::Run
}
fn ok_status() -> PointStatus {
    PointStatus::Ok
}
fn test_split() -> Split {
    Split::Test
}

impl FrontierPoint {
    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }
}

/// One run to execute.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub lambda: f64,
    pub weights: Weights,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub point: FrontierPoint,
    pub config: TrainConfig,
    pub trace: Option<TrainTrace>,
    /// Epochs completed before a failure.
    pub partial_epochs: Vec<EpochRecord>,
    pub params: Option<ModelParams>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dataset: DatasetIdentity,
    pub runs: Vec<RunRecord>,
    /// Per-seed points, each followed by its seed-mean point when there are
    /// several seeds.
    pub points: Vec<FrontierPoint>,
    pub selection: Option<FrontierPoint>,
}

pub type ProgressFn = Arc<dyn Fn(usize, usize) + Send + Sync>;

/// Worker pool settings for executing runs.
#[derive(Clone, Default)]
pub struct Runner {
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
    /// Called with `(completed, total)` after each run.
    pub progress: Option<ProgressFn>,
}

impl Runner {
    pub fn with_jobs(jobs: usize) -> Self {
        Runner {
            jobs: Some(jobs),
            progress: None,
        }
    }

    pub fn progress(mut self, f: impl Fn(usize, usize) + Send + Sync + 'static) -> Self {
        self.progress = Some(Arc::new(f));
        self
    }
}

fn short_hash(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(&digest[..8])
}

pub fn config_hash(dataset: &DatasetIdentity, config: &TrainConfig) -> String {
    short_hash(&serde_json::json!({
        "dataset": dataset.sha256,
        "config": config,
    }))
}

fn mean_hash(dataset: &DatasetIdentity, config: &TrainConfig, seeds: &[u64]) -> String {
    short_hash(&serde_json::json!({
        "dataset": dataset.sha256,
        "config": config,
        "seeds": seeds,
        "aggregate": "mean",
    }))
}

fn execute_one(
    loaded: &LoadedDataset,
    settings: &TrainSettings,
    spec: &RunSpec,
) -> RunRecord {
    let config = settings.config(spec.lambda, spec.weights, spec.seed);
    let mut point = FrontierPoint {
        config_hash: config_hash(&loaded.identity, &config),
        dataset: loaded.identity.name.clone(),
        kind: PointKind::Run,
        lambda: spec.lambda,
        weights: spec.weights,
        seed: Some(spec.seed),
        seeds: Vec::new(),
        alpha: spec.alpha,
        label: spec.label.clone(),
        status: PointStatus::Ok,
        error: None,
        split: Split::Test,
        test_accuracy: None,
        metric_values: BTreeMap::new(),
        dev_accuracy: None,
        dev_metric_values: BTreeMap::new(),
    };
    match train_prepared(&loaded.data, &config) {
        Ok((params, trace)) => {
            point.test_accuracy = Some(trace.test.accuracy);
            point.metric_values = trace.test.metrics.clone();
            point.dev_accuracy = Some(trace.dev.accuracy);
            point.dev_metric_values = trace.dev.metrics.clone();
            log::info!(
                "{} λ={} seed={} test_acc={:.4}",
                point.config_hash,
                spec.lambda,
                spec.seed,
                trace.test.accuracy
            );
            RunRecord {
                point,
                config,
                trace: Some(trace),
                partial_epochs: Vec::new(),
                params: Some(params),
            }
        }
        Err(failure) => {
            log::warn!("{} failed: {failure}", point.config_hash);
            point.status = PointStatus::Failed;
            point.error = Some(failure.to_string());
            RunRecord {
                point,
                config,
                trace: None,
                partial_epochs: failure.epochs,
                params: None,
            }
        }
    }
}

fn mean_point(loaded: &LoadedDataset, group: &[&RunRecord]) -> FrontierPoint {
    let first = &group[0];
    let seeds: Vec<u64> = group.iter().map(|r| r.config.seed).collect();
    let ok: Vec<&FrontierPoint> = group
        .iter()
        .map(|r| &r.point)
        .filter(|p| p.is_ok())
        .collect();
    let mut point = first.point.clone();
    point.config_hash = mean_hash(&loaded.identity, &first.config, &seeds);
    point.kind = PointKind::SeedMean;
    point.seed = None;
    point.seeds = seeds;
    point.error = None;
    if ok.is_empty() {
        point.status = PointStatus::Failed;
        point.error = Some("every seed failed".into());
        point.test_accuracy = None;
        point.dev_accuracy = None;
        point.metric_values.clear();
        point.dev_metric_values.clear();
        return point;
    }
    point.status = PointStatus::Ok;
    let n = ok.len() as f64;
    let mean_opt = |f: fn(&FrontierPoint) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = ok.iter().filter_map(|p| f(p)).collect();
        (v.len() == ok.len()).then(|| v.iter().sum::<f64>() / n)
    };
    let mean_map = |f: fn(&FrontierPoint) -> &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        f(ok[0])
            .keys()
            .filter_map(|k| {
                let v: Vec<f64> = ok.iter().filter_map(|p| f(p).get(k).copied()).collect();
                (v.len() == ok.len()).then(|| (k.clone(), v.iter().sum::<f64>() / n))
            })
            .collect()
    };
    point.test_accuracy = mean_opt(|p| p.test_accuracy);
    point.dev_accuracy = mean_opt(|p| p.dev_accuracy);
    point.metric_values = mean_map(|p| &p.metric_values);
    point.dev_metric_values = mean_map(|p| &p.dev_metric_values);
    point
}

/// Trains every `(config, seed)` combination on the worker pool.
///
/// `configs` are seed-free specs; each is expanded over `seeds` in order.
pub fn execute(
    loaded: &LoadedDataset,
    settings: &TrainSettings,
    configs: &[RunSpec],
    seeds: &[u64],
    runner: &Runner,
) -> Result<SweepOutcome> {
    let specs: Vec<RunSpec> = configs
        .iter()
        .flat_map(|c| {
            seeds.iter().map(move |&seed| RunSpec {
                seed,
                ..c.clone()
            })
        })
        .collect();
    let total = specs.len();
    let done = AtomicUsize::new(0);
    let work = || -> Vec<RunRecord> {
        specs
            .par_iter()
            .map(|spec| {
                let record = execute_one(loaded, settings, spec);
                let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
                if let Some(cb) = &runner.progress {
                    cb(finished, total);
                }
                record
            })
            .collect()
    };
    let runs = match runner.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut points = Vec::with_capacity(runs.len() + configs.len());
    for group in runs.chunks(seeds.len()) {
        points.extend(group.iter().map(|r| r.point.clone()));
        if seeds.len() > 1 {
            let refs: Vec<&RunRecord> = group.iter().collect();
            points.push(mean_point(loaded, &refs));
        }
    }
    Ok(SweepOutcome {
        dataset: loaded.identity.clone(),
        runs,
        points,
        selection: None,
    })
}

fn sorted_unique(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn spec(lambda: f64, weights: Weights) -> RunSpec {
    RunSpec {
        lambda,
        weights,
        seed: 0,
        alpha: None,
        label: None,
    }
}

fn baseline_spec(weights: Weights) -> RunSpec {
    RunSpec {
        label: Some("baseline".into()),
        ..spec(0.0, weights)
    }
}

pub fn train_once(plan: &TrainPlan, loaded: &LoadedDataset, runner: &Runner) -> Result<SweepOutcome> {
    plan.validate()?;
    execute(
        loaded,
        &plan.train,
        &[spec(plan.lambda, plan.weights)],
        &plan.seeds,
        runner,
    )
}

/// One run per (λ, seed) with the plan's base weights; λ = 0 is always
/// included and points come back sorted by λ.
pub fn run_lambda_sweep(
    plan: &SweepPlan,
    loaded: &LoadedDataset,
    runner: &Runner,
) -> Result<SweepOutcome> {
    plan.validate()?;
    if plan.is_alpha() {
        return Err(Error::config("alpha_grid", "use run_alpha_sweep for α sweeps"));
    }
    let lambdas = sorted_unique(plan.lambda_grid.iter().copied().chain([0.0]));
    let configs: Vec<RunSpec> = lambdas
        .into_iter()
        .map(|l| spec(l, plan.base_weights))
        .collect();
    execute(loaded, &plan.train, &configs, &plan.seeds, runner)
}

/// One run per α at the plan's fixed λ with `w_a = α`, `w_b = 1 − α`,
/// preceded by the λ = 0 baseline.
pub fn run_alpha_sweep(
    plan: &SweepPlan,
    loaded: &LoadedDataset,
    runner: &Runner,
) -> Result<SweepOutcome> {
    plan.validate()?;
    let (Some(alphas), Some(a), Some(b)) = (&plan.alpha_grid, plan.metric_a, plan.metric_b) else {
        return Err(Error::config("alpha_grid", "required for an α sweep"));
    };
    let lambda = plan.lambda_grid[0];
    let mut configs = vec![baseline_spec(Weights::zeros())];
    configs.extend(alphas.iter().map(|&alpha| RunSpec {
        alpha: Some(alpha),
        ..spec(lambda, Weights::pair(a, b, alpha))
    }));
    execute(loaded, &plan.train, &configs, &plan.seeds, runner)
}

/// Label shown for a consensus weight pair.
pub fn consensus_label(pair: [f64; 2]) -> &'static str {
    if (pair[0] - pair[1]).abs() <= WEIGHT_SUM_TOLERANCE {
        "balanced"
    } else if pair[0] > pair[1] {
        "a_dominant"
    } else {
        "b_dominant"
    }
}

/// One run per weight pair at fixed λ, preceded by the λ = 0 baseline.
pub fn consensus_sweep(
    plan: &ConsensusPlan,
    loaded: &LoadedDataset,
    runner: &Runner,
) -> Result<SweepOutcome> {
    plan.validate()?;
    let mut configs = vec![baseline_spec(Weights::zeros())];
    configs.extend(plan.weight_pairs.iter().map(|&pair| {
        let mut w = Weights::zeros();
        w.0[plan.metric_a.index()] = pair[0];
        w.0[plan.metric_b.index()] = pair[1];
        RunSpec {
            alpha: Some(pair[0]),
            label: Some(consensus_label(pair).into()),
            ..spec(plan.lambda, w)
        }
    }));
    execute(loaded, &plan.train, &configs, &plan.seeds, runner)
}

/// Feasible argmax of the target metric on dev.
///
/// A candidate is feasible when it trained successfully, reports the target
/// metric, and its dev accuracy is at least the baseline's minus the
/// tolerance. Ties go to higher dev accuracy, then lower λ, then list order.
pub fn stakeholder_search(
    profile: &StakeholderProfile,
    baseline: &FrontierPoint,
    candidates: &[FrontierPoint],
) -> Result<FrontierPoint> {
    profile.validate()?;
    if baseline.lambda != 0.0 {
        return Err(Error::config("baseline", "baseline must be the λ = 0 point"));
    }
    let base_acc = baseline
        .dev_accuracy
        .ok_or_else(|| Error::config("baseline", "baseline has no dev accuracy"))?;
    let floor = base_acc - profile.accuracy_tolerance_pp / 100.0 - FEASIBILITY_SLACK;
    let target = profile.target_metric.id();
    let mut best: Option<(&FrontierPoint, f64, f64)> = None;
    for c in candidates.iter().filter(|c| c.is_ok()) {
        let (Some(acc), Some(&m)) = (c.dev_accuracy, c.dev_metric_values.get(&target)) else {
            continue;
        };
        if acc < floor {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bm, bacc)) => {
                m > bm || (m == bm && (acc > bacc || (acc == bacc && c.lambda < b.lambda)))
            }
        };
        if better {
            best = Some((c, m, acc));
        }
    }
    best.map(|(p, _, _)| p.clone())
        .ok_or(Error::NoFeasibleCandidate)
}

/// Searches a persisted frontier: seed-mean points when present, otherwise
/// per-seed points, with the first λ = 0 point as the baseline.
pub fn search_frontier(
    profile: &StakeholderProfile,
    points: &[FrontierPoint],
) -> Result<FrontierPoint> {
    let kind = if points.iter().any(|p| p.kind == PointKind::SeedMean) {
        PointKind::SeedMean
    } else {
        PointKind::Run
    };
    let pool: Vec<FrontierPoint> = points.iter().filter(|p| p.kind == kind).cloned().collect();
    let baseline = pool
        .iter()
        .find(|p| p.lambda == 0.0 && p.is_ok())
        .ok_or_else(|| Error::config("frontier", "no successful λ = 0 baseline point"))?;
    stakeholder_search(profile, baseline, &pool)
}

/// Trains the profile's λ × weight grid (λ = 0 once) and selects from it.
pub fn run_stakeholder_grid(
    plan: &SearchPlan,
    loaded: &LoadedDataset,
    runner: &Runner,
) -> Result<SweepOutcome> {
    plan.validate()?;
    let weights = plan.profile.weight_grid();
    let mut configs = vec![baseline_spec(weights[0])];
    for l in sorted_unique(plan.profile.lambda_candidates.iter().copied()) {
        if l == 0.0 {
            continue;
        }
        configs.extend(weights.iter().map(|&w| spec(l, w)));
    }
    let mut outcome = execute(loaded, &plan.train, &configs, &plan.seeds, runner)?;
    outcome.selection = Some(search_frontier(&plan.profile, &outcome.points)?);
    Ok(outcome)
}

/// Serialized frontier exactly as written to disk.
pub fn frontier_json(points: &[FrontierPoint]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(points)?;
    s.push('\n');
    Ok(s)
}

pub fn read_frontier(path: impl AsRef<Path>) -> Result<Vec<FrontierPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub config_hash: String,
    pub lambda: f64,
    pub seed: u64,
    pub status: PointStatus,
}

/// Provenance for a result directory. Contains no timestamps so that
/// re-running a plan reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub operation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    pub plan: serde_json::Value,
    pub plan_sha256: String,
    pub dataset: DatasetIdentity,
    pub decision_threshold: f64,
    pub runs: Vec<ManifestRun>,
    /// Relative path → sha256 of every file written.
    pub files: BTreeMap<String, String>,
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], files: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
    Ok(())
}

fn pretty(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes frontier, selection, traces, parameters and manifest under `dir`.
pub fn write_outcome(
    dir: &Path,
    outcome: &SweepOutcome,
    operation: &str,
    plan: &serde_json::Value,
    command: Option<Vec<String>>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    write_file(dir, FRONTIER_FILE, frontier_json(&outcome.points)?.as_bytes(), &mut files)?;
    if let Some(sel) = &outcome.selection {
        write_file(dir, SELECTION_FILE, pretty(sel)?.as_bytes(), &mut files)?;
    }
    for run in &outcome.runs {
        let hash = &run.point.config_hash;
        let (epochs, summary) = match &run.trace {
            Some(trace) => (
                trace.to_jsonl()?,
                serde_json::json!({
                    "config_hash": hash,
                    "config": run.config,
                    "status": run.point.status,
                    "epochs": trace.epochs.len(),
                    "best_dev_epoch": trace.best_dev_epoch,
                    "dev": trace.dev,
                    "test": trace.test,
                }),
            ),
            None => {
                let mut s = String::new();
                for e in &run.partial_epochs {
                    s.push_str(&serde_json::to_string(e)?);
                    s.push('\n');
                }
                (
                    s,
                    serde_json::json!({
                        "config_hash": hash,
                        "config": run.config,
                        "status": run.point.status,
                        "epochs": run.partial_epochs.len(),
                        "error": run.point.error,
                    }),
                )
            }
        };
        write_file(dir, &format!("{TRACE_DIR}/{hash}.jsonl"), epochs.as_bytes(), &mut files)?;
        write_file(
            dir,
            &format!("{TRACE_DIR}/{hash}.summary.json"),
            pretty(&summary)?.as_bytes(),
            &mut files,
        )?;
        if let Some(params) = &run.params {
            write_file(
                dir,
                &format!("{PARAMS_DIR}/{hash}.json"),
                pretty(&params.to_json())?.as_bytes(),
                &mut files,
            )?;
        }
    }
    let manifest = Manifest {
        tool: "fairforge".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        operation: operation.into(),
        command,
        plan_sha256: hex::encode(Sha256::digest(plan.to_string().as_bytes())),
        plan: plan.clone(),
        dataset: outcome.dataset.clone(),
        decision_threshold: outcome
            .runs
            .first()
            .map_or(0.5, |r| r.config.decision_threshold),
        runs: outcome
            .runs
            .iter()
            .map(|r| ManifestRun {
                config_hash: r.point.config_hash.clone(),
                lambda: r.config.lambda,
                seed: r.config.seed,
                status: r.point.status,
            })
            .collect(),
        files,
    };
    fs::write(dir.join(MANIFEST_FILE), pretty(&manifest)?)
        .map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    Ok(manifest)
}
