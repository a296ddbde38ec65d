//! Fairness-regularized training over the eight ratio-based fairness metrics.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads CSV decision data under a [`DatasetSchema`] and produces
//!   stratified train/dev/test splits.
//! * [`fair_risk`] fits the fair-risk logistic model, applies the parity shift
//!   and builds cross-group nearest-neighbour matchings.
//! * [`metrics`] evaluates the eight metrics (and their gradients) from
//!   predicted probabilities.
//! * [`model`] holds the one-hidden-layer classifier, the regularized
//!   objective, backprop and the Adam training loop.
//! * [`harness`] runs λ / α / consensus sweeps and stakeholder search and
//!   persists frontier artifacts.
//! * [`stakeholders`] carries metric descriptors and the built-in stakeholder
//!   presets.

pub mod dataset;
pub mod error;
pub mod fair_risk;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod stakeholders;

pub use dataset::{
    class_distribution, load_dataset, load_dataset_with, ClassDistribution, DatasetSchema, Group,
    LoadOptions, Split, TabularDataset,
};
pub use error::{Error, Result};
pub use fair_risk::{
    fit_fair_risk, match_pairs, parity_shift, FairRiskModel, FairRiskProfile, MatchedPairs,
    ScoreAxis,
};
pub use harness::{
    consensus_sweep, run_alpha_sweep, run_lambda_sweep, run_stakeholder_grid, search_frontier,
    stakeholder_search, ConsensusPlan, DatasetRef, FrontierPoint, LoadedDataset, Runner,
    SearchPlan, StakeholderProfile, SweepOutcome, SweepPlan, TrainPlan,
};
pub use model::{
    forward, train, train_prepared, ModelParams, PreparedData, TrainConfig, TrainTrace, Weights,
};
pub use metrics::{
    compute_metric, group_ratio, matched_group_ratio, pairwise_ratio, Granularity, MetricSpec,
    MetricValue, Predictions, Regime, Stance,
};

/// Rounds to `digits` significant decimal digits (used for audit output).
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}
