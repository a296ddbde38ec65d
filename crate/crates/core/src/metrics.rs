//! The eight ratio-based fairness metrics.
//!
//! Every metric is a disparate-impact style ratio of predicted probabilities
//! between the unprivileged and privileged group, symmetrized to
//! `min(ρ, 1/ρ)` so that 1 means parity and any disparity, in either
//! direction, lowers the value. Three toggles select the metric:
//!
//! | granularity | stance          | kernel                                  |
//! |-------------|-----------------|-----------------------------------------|
//! | individual  | infra-marginal  | mean pairwise ratio, pairs on raw scores |
//! | individual  | intersectional  | mean pairwise ratio, pairs on shifted scores |
//! | group       | infra-marginal  | ratio of means over the matched sample   |
//! | group       | intersectional  | ratio of group means, no matching        |
//!
//! The EOO regime restricts every average (and matching eligibility) to
//! instances with `y = 1`.
//!
//! All kernels can accumulate `scale · ∂value/∂p` into a gradient buffer so
//! that the training objective can backpropagate through them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::fair_risk::{build_matching, FairRiskProfile, MatchedPairs, ScoreAxis};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Individual,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    InfraMarginal,
    Intersectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Outcome,
    Eoo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricSpec {
    pub granularity: Granularity,
    pub stance: Stance,
    pub regime: Regime,
}

impl MetricSpec {
    /// Canonical ordering; weight vectors are indexed the same way.
    pub const ALL: [MetricSpec; 8] = {
        use Granularity::*;
        use Regime::*;
        use Stance::*;
        [
            MetricSpec::new(Individual, InfraMarginal, Outcome),
            MetricSpec::new(Individual, InfraMarginal, Eoo),
            MetricSpec::new(Individual, Intersectional, Outcome),
            MetricSpec::new(Individual, Intersectional, Eoo),
            MetricSpec::new(Group, InfraMarginal, Outcome),
            MetricSpec::new(Group, InfraMarginal, Eoo),
            MetricSpec::new(Group, Intersectional, Outcome),
            MetricSpec::new(Group, Intersectional, Eoo),
        ]
    };

    pub const fn new(granularity: Granularity, stance: Stance, regime: Regime) -> Self {
        MetricSpec {
            granularity,
            stance,
            regime,
        }
    }

    pub fn index(self) -> usize {
        (self.granularity as usize) * 4 + (self.stance as usize) * 2 + self.regime as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Score axis the metric's matching uses, or `None` when unmatched.
    pub fn axis(self) -> Option<ScoreAxis> {
        match (self.granularity, self.stance) {
            (Granularity::Individual, Stance::InfraMarginal) => Some(ScoreAxis::RawScores),
            (Granularity::Individual, Stance::Intersectional) => Some(ScoreAxis::ShiftedScores),
            (Granularity::Group, Stance::InfraMarginal) => Some(ScoreAxis::RawScores),
            (Granularity::Group, Stance::Intersectional) => None,
        }
    }

    pub fn id(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.granularity {
            Granularity::Individual => "individual",
            Granularity::Group => "group",
        };
        let s = match self.stance {
            Stance::InfraMarginal => "infra_marginal",
            Stance::Intersectional => "intersectional",
        };
        let r = match self.regime {
            Regime::Outcome => "outcome",
            Regime::Eoo => "eoo",
        };
        write!(f, "{g}.{s}.{r}")
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricSpec::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| {
                Error::config(
                    "metric",
                    format!("unknown metric `{s}`; expected granularity.stance.regime"),
                )
            })
    }
}

impl Serialize for MetricSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a metric value was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Pairs(usize),
    Groups { unprivileged: usize, privileged: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    /// Symmetrized ratio in (0, 1].
    pub value: f64,
    /// Unprivileged over privileged, before symmetrization. For pairwise
    /// metrics this is the mean of the per-pair ratios.
    pub raw_ratio: f64,
    pub support: Support,
}

/// Model probabilities, finite and clamped into `[PROB_EPS, 1 - PROB_EPS]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions(Vec<f64>);

impl Predictions {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("predictions".into()));
        }
        Ok(Predictions(
            raw.into_iter()
                .map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS))
                .collect(),
        ))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `(min(ρ, 1/ρ), d/dρ)`; the kink at ρ = 1 takes the ρ ≤ 1 branch.
fn symmetrize(rho: f64) -> (f64, f64) {
    if rho <= 1.0 {
        (rho, 1.0)
    } else {
        (1.0 / rho, -1.0 / (rho * rho))
    }
}

/// Gradient sink: `buffer[i] += scale · ∂value/∂p_i`.
pub struct GradSink<'a> {
    pub buffer: &'a mut [f64],
    pub scale: f64,
}

/// Ratio of two weighted means with index multiplicities, symmetrized.
fn ratio_of_means(
    p: &[f64],
    unpriv: &[usize],
    priv_: &[usize],
    support: Support,
    grad: Option<GradSink<'_>>,
) -> MetricValue {
    let a = unpriv.iter().map(|&i| p[i]).sum::<f64>() / unpriv.len() as f64;
    let b = priv_.iter().map(|&j| p[j]).sum::<f64>() / priv_.len() as f64;
    let rho = a / b;
    let (value, slope) = symmetrize(rho);
    if let Some(sink) = grad {
        let du = sink.scale * slope / (b * unpriv.len() as f64);
        let dp = -sink.scale * slope * a / (b * b * priv_.len() as f64);
        for &i in unpriv {
            sink.buffer[i] += du;
        }
        for &j in priv_ {
            sink.buffer[j] += dp;
        }
    }
    MetricValue {
        value,
        raw_ratio: rho,
        support,
    }
}

fn group_ratio_impl(
    p: &[f64],
    group: &[Group],
    regime: Regime,
    labels: &[u8],
    grad: Option<GradSink<'_>>,
) -> Result<MetricValue> {
    let members = |g: Group| -> Vec<usize> {
        (0..p.len())
            .filter(|&i| group[i] == g && (regime == Regime::Outcome || labels[i] == 1))
            .collect()
    };
    let unpriv = members(Group::Unprivileged);
    let priv_ = members(Group::Privileged);
    for (g, m) in [(Group::Unprivileged, &unpriv), (Group::Privileged, &priv_)] {
        if m.is_empty() {
            let any = group.contains(&g);
            return Err(if regime == Regime::Eoo && any {
                Error::EmptyEooPool(g)
            } else {
                Error::EmptyGroup(format!("no {g} instances"))
            });
        }
    }
    let support = Support::Groups {
        unprivileged: unpriv.len(),
        privileged: priv_.len(),
    };
    Ok(ratio_of_means(p, &unpriv, &priv_, support, grad))
}

fn matched_group_ratio_impl(
    p: &[f64],
    pairs: &MatchedPairs,
    grad: Option<GradSink<'_>>,
) -> Result<MetricValue> {
    if pairs.is_empty() {
        return Err(Error::EmptyMatching);
    }
    let (unpriv, priv_): (Vec<usize>, Vec<usize>) = pairs.oriented().unzip();
    Ok(ratio_of_means(
        p,
        &unpriv,
        &priv_,
        Support::Pairs(pairs.len()),
        grad,
    ))
}

fn pairwise_ratio_impl(
    p: &[f64],
    pairs: &MatchedPairs,
    grad: Option<GradSink<'_>>,
) -> Result<MetricValue> {
    if pairs.is_empty() {
        return Err(Error::EmptyMatching);
    }
    let n = pairs.len() as f64;
    let mut value = 0.0;
    let mut raw = 0.0;
    let mut grad = grad;
    for (u, v) in pairs.oriented() {
        let rho = p[u] / p[v];
        let (s, slope) = symmetrize(rho);
        value += s;
        raw += rho;
        if let Some(sink) = grad.as_mut() {
            let k = sink.scale * slope / n;
            sink.buffer[u] += k / p[v];
            sink.buffer[v] -= k * rho / p[v];
        }
    }
    Ok(MetricValue {
        value: value / n,
        raw_ratio: raw / n,
        support: Support::Pairs(pairs.len()),
    })
}

/// Group ratio without matching: mean `q` over G− divided by mean over G+.
pub fn group_ratio(
    preds: &Predictions,
    group: &[Group],
    regime: Regime,
    labels: &[u8],
) -> Result<MetricValue> {
    group_ratio_impl(preds.as_slice(), group, regime, labels, None)
}

/// Ratio of group means taken over the matched sample only.
pub fn matched_group_ratio(preds: &Predictions, pairs: &MatchedPairs) -> Result<MetricValue> {
    matched_group_ratio_impl(preds.as_slice(), pairs, None)
}

/// Mean over matched pairs of the symmetrized per-pair ratio.
pub fn pairwise_ratio(preds: &Predictions, pairs: &MatchedPairs) -> Result<MetricValue> {
    pairwise_ratio_impl(preds.as_slice(), pairs, None)
}

/// Labels, groups, fair-risk profile and the four frozen matchings for one
/// split of a dataset.
#[derive(Debug, Clone)]
pub struct FairnessStructure {
    pub labels: Vec<u8>,
    pub group: Vec<Group>,
    pub profile: FairRiskProfile,
    matchings: BTreeMap<(ScoreAxis, Regime), Result<MatchedPairs>>,
}

impl FairnessStructure {
    /// Builds all four matchings. Failures (e.g. a group without positives)
    /// are kept and only surface when a metric that needs them is requested.
    pub fn new(labels: Vec<u8>, group: Vec<Group>, scores: Vec<f64>) -> Result<Self> {
        if labels.len() != group.len() || labels.len() != scores.len() {
            return Err(Error::config("structure", "label, group and score lengths differ"));
        }
        let profile = FairRiskProfile::new(scores, &group)?;
        let mut matchings = BTreeMap::new();
        for axis in [ScoreAxis::RawScores, ScoreAxis::ShiftedScores] {
            for regime in [Regime::Outcome, Regime::Eoo] {
                matchings.insert(
                    (axis, regime),
                    build_matching(&profile, &labels, &group, axis, regime),
                );
            }
        }
        Ok(FairnessStructure {
            labels,
            group,
            profile,
            matchings,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn matching(&self, axis: ScoreAxis, regime: Regime) -> Result<&MatchedPairs> {
        match &self.matchings[&(axis, regime)] {
            Ok(m) => Ok(m),
            Err(e) => Err(e.clone()),
        }
    }
}

fn dispatch(
    spec: MetricSpec,
    p: &[f64],
    structure: &FairnessStructure,
    grad: Option<GradSink<'_>>,
) -> Result<MetricValue> {
    if p.len() != structure.len() {
        return Err(Error::ShapeMismatch {
            expected: structure.len(),
            actual: p.len(),
        });
    }
    match (spec.granularity, spec.axis()) {
        (_, None) => group_ratio_impl(p, &structure.group, spec.regime, &structure.labels, grad),
        (Granularity::Individual, Some(axis)) => {
            pairwise_ratio_impl(p, structure.matching(axis, spec.regime)?, grad)
        }
        (Granularity::Group, Some(axis)) => {
            matched_group_ratio_impl(p, structure.matching(axis, spec.regime)?, grad)
        }
    }
}

pub fn compute_metric(
    spec: MetricSpec,
    preds: &Predictions,
    structure: &FairnessStructure,
) -> Result<MetricValue> {
    dispatch(spec, preds.as_slice(), structure, None)
}

/// Like [`compute_metric`], also accumulating `scale · ∂value/∂p` into `grad`.
pub fn compute_metric_with_grad(
    spec: MetricSpec,
    preds: &Predictions,
    structure: &FairnessStructure,
    grad: &mut [f64],
    scale: f64,
) -> Result<MetricValue> {
    dispatch(
        spec,
        preds.as_slice(),
        structure,
        Some(GradSink {
            buffer: grad,
            scale,
        }),
    )
}

/// Evaluates all eight metrics; entries that cannot be computed are `Err`.
pub fn evaluate_all(
    preds: &Predictions,
    structure: &FairnessStructure,
) -> Vec<(MetricSpec, Result<MetricValue>)> {
    MetricSpec::ALL
        .into_iter()
        .map(|spec| (spec, compute_metric(spec, preds, structure)))
        .collect()
}

/// Metric id → value for the metrics that could be computed.
pub fn metric_map(preds: &Predictions, structure: &FairnessStructure) -> BTreeMap<String, f64> {
    evaluate_all(preds, structure)
        .into_iter()
        .filter_map(|(spec, v)| v.ok().map(|v| (spec.id(), v.value)))
        .collect()
}
