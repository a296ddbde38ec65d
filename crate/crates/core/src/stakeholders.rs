//! Plain-language metric descriptors and built-in stakeholder presets.

use serde::Serialize;

use crate::metrics::{Granularity, MetricSpec, Regime, Stance};
use crate::model::Weights;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDescriptor {
    pub id: String,
    pub index: usize,
    pub title: String,
    pub granularity: Granularity,
    pub stance: Stance,
    pub regime: Regime,
    pub summary: String,
    pub question: String,
}

fn granularity_text(g: Granularity) -> (&'static str, &'static str) {
    match g {
        Granularity::Individual => (
            "Individual",
            "compares matched pairs of people, one from each group, and averages their prediction ratios",
        ),
        Granularity::Group => (
            "Group",
            "compares the average prediction of one group against the other",
        ),
    }
}

fn stance_text(g: Granularity, s: Stance) -> (&'static str, &'static str) {
    match (g, s) {
        (_, Stance::InfraMarginal) => (
            "infra-marginal",
            "Only people with similar fair-risk scores are compared, so differences in qualification are not counted as unfairness.",
        ),
        (Granularity::Individual, Stance::Intersectional) => (
            "intersectional",
            "Group baselines are levelled before pairing, so historical disadvantage in the fair-risk score is not allowed to justify different treatment.",
        ),
        (Granularity::Group, Stance::Intersectional) => (
            "intersectional",
            "No matching is done: the groups are compared as a whole, treating base-rate gaps as a product of systemic inequity.",
        ),
    }
}

fn regime_text(r: Regime) -> (&'static str, &'static str) {
    match r {
        Regime::Outcome => (
            "outcome",
            "Every prediction counts, whatever the true label.",
        ),
        Regime::Eoo => (
            "equal opportunity",
            "Only people whose true label is positive count, so the question is whether those who truly qualify are treated alike.",
        ),
    }
}

impl MetricDescriptor {
    pub fn new(spec: MetricSpec) -> Self {
        let (g_title, g_text) = granularity_text(spec.granularity);
        let (s_title, s_text) = stance_text(spec.granularity, spec.stance);
        let (r_title, r_text) = regime_text(spec.regime);
        let question = match (spec.granularity, spec.regime) {
            (Granularity::Individual, Regime::Outcome) => {
                "Do similarly situated people from the two groups get similar predictions?"
            }
            (Granularity::Individual, Regime::Eoo) => {
                "Among people who truly qualify, do similarly situated people from the two groups get similar predictions?"
            }
            (Granularity::Group, Regime::Outcome) => {
                "Does each group receive, on average, similar predictions?"
            }
            (Granularity::Group, Regime::Eoo) => {
                "Among people who truly qualify, does each group receive similar predictions on average?"
            }
        };
        MetricDescriptor {
            id: spec.id(),
            index: spec.index(),
            title: format!("{g_title} {s_title} fairness ({r_title})"),
            granularity: spec.granularity,
            stance: spec.stance,
            regime: spec.regime,
            summary: format!(
                "A ratio between 0 and 1, where 1 means perfect parity and 0.8 is the classic four-fifths threshold. It {g_text}. {s_text} {r_text}"
            ),
            question: question.to_string(),
        }
    }
}

/// Descriptors for all eight metrics in weight-vector order.
pub fn metric_descriptors() -> Vec<MetricDescriptor> {
    MetricSpec::ALL.into_iter().map(MetricDescriptor::new).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StakeholderPreset {
    pub id: &'static str,
    pub name: &'static str,
    pub domain: &'static str,
    pub target_metric: MetricSpec,
    pub lambda: f64,
    pub weights: Weights,
    pub rationale: &'static str,
}

const IM_IND_EOO: MetricSpec = MetricSpec::new(
    Granularity::Individual,
    Stance::InfraMarginal,
    Regime::Eoo,
);
const INT_GRP_OUTCOME: MetricSpec = MetricSpec::new(
    Granularity::Group,
    Stance::Intersectional,
    Regime::Outcome,
);
const INT_GRP_EOO: MetricSpec =
    MetricSpec::new(Granularity::Group, Stance::Intersectional, Regime::Eoo);

fn preset(
    id: &'static str,
    name: &'static str,
    domain: &'static str,
    target_metric: MetricSpec,
    lambda: f64,
    rationale: &'static str,
) -> StakeholderPreset {
    StakeholderPreset {
        id,
        name,
        domain,
        target_metric,
        lambda,
        weights: Weights::single(target_metric),
        rationale,
    }
}

pub fn stakeholder_presets() -> Vec<StakeholderPreset> {
    vec![
        preset(
            "public-safety",
            "Public Safety Advocates",
            "criminal justice",
            IM_IND_EOO,
            1.0,
            "Similarly risky people who truly re-offend should be treated the same, without adjusting for historical bias.",
        ),
        preset(
            "civil-rights",
            "Civil Rights Organizations",
            "criminal justice",
            INT_GRP_OUTCOME,
            3.0,
            "Outcomes should be at parity across demographic groups regardless of base rates.",
        ),
        preset(
            "social-work",
            "Social Workers / Rehabilitation Advocates",
            "criminal justice",
            INT_GRP_EOO,
            3.0,
            "People at real risk should get equal access to support services across groups.",
        ),
        preset(
            "provider",
            "Healthcare Providers",
            "healthcare",
            IM_IND_EOO,
            2.0,
            "Patients with similar needs who truly require frequent care should get comparable predictions.",
        ),
        preset(
            "public-health",
            "Public Health Officials",
            "healthcare",
            INT_GRP_OUTCOME,
            2.0,
            "Disadvantaged groups should not be under-identified, even at some cost in accuracy.",
        ),
        preset(
            "patient-advocacy",
            "Patient Advocacy Groups",
            "healthcare",
            INT_GRP_EOO,
            2.0,
            "Among patients who truly need care, marginalized groups should not be overlooked.",
        ),
    ]
}

pub fn find_preset(id: &str) -> Option<StakeholderPreset> {
    stakeholder_presets().into_iter().find(|p| p.id == id)
}
