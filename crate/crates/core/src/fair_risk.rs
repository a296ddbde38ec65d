//! Fair-risk scores, the parity shift and cross-group 1-NN matching.
//!
//! The fair-risk model is a logistic regression on the designated fair
//! features only. Its scores are the merit axis along which instances of the
//! two groups are paired. Nothing here depends on the classifier being
//! trained, so matchings are computed once and frozen.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Group, Split, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::Regime;
use crate::round_sig;

/// L2 penalty on the fair-risk coefficients (the intercept is not penalized).
pub const FAIR_RISK_L2: f64 = 1e-4;
pub const FAIR_RISK_TOLERANCE: f64 = 1e-6;
pub const FAIR_RISK_MAX_ITER: usize = 10_000;

/// Reference scores whose distance to a query is within this of the minimum
/// count as equally near; the lowest reference index among them wins.
pub const MATCH_TIE_TOLERANCE: f64 = 1e-12;

const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairRiskModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// False when the iteration cap was hit above the gradient tolerance.
    pub converged: bool,
    /// All fair-feature rows were identical; the model is intercept-only.
    pub degenerate: bool,
}

impl FairRiskModel {
    pub fn score_rows(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let w = Array1::from(self.coefficients.clone());
        x.dot(&w)
            .iter()
            .map(|&z| sigmoid(z + self.intercept).clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR))
            .collect()
    }

    /// Coefficients rounded to 12 significant digits, for audit files.
    pub fn to_audit_json(&self) -> serde_json::Value {
        serde_json::json!({
            "coefficients": self.coefficients.iter().map(|&c| round_sig(c, 12)).collect::<Vec<_>>(),
            "intercept": round_sig(self.intercept, 12),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "degenerate": self.degenerate,
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

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            l2: FAIR_RISK_L2,
            tolerance: FAIR_RISK_TOLERANCE,
            max_iter: FAIR_RISK_MAX_ITER,
        }
    }
}

/// Penalized logistic regression by gradient descent with Armijo backtracking.
pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[u8], opts: LogisticOptions) -> FairRiskModel {
    let n = x.nrows() as f64;
    let k = x.ncols();
    let yv: Array1<f64> = y.iter().map(|&v| f64::from(v)).collect();

    let objective = |w: &Array1<f64>, b: f64| -> f64 {
        let z = x.dot(w);
        let loss: f64 = z
            .iter()
            .zip(&yv)
            .map(|(&z, &y)| softplus(z + b) - y * (z + b))
            .sum::<f64>()
            / n;
        loss + 0.5 * opts.l2 * w.dot(w)
    };
    let gradient = |w: &Array1<f64>, b: f64| -> (Array1<f64>, f64) {
        let z = x.dot(w);
        let resid: Array1<f64> = z
            .iter()
            .zip(&yv)
            .map(|(&z, &y)| sigmoid(z + b) - y)
            .collect();
        let gw = x.t().dot(&resid) / n + opts.l2 * w;
        (gw, resid.sum() / n)
    };

    let degenerate = x.nrows() > 0
        && x.rows()
            .into_iter()
            .all(|row| row.iter().zip(x.row(0)).all(|(a, b)| a == b));
    if degenerate {
        log::warn!("fair-risk features are identical on every row; model reduces to an intercept");
    }

    let mut w = Array1::<f64>::zeros(k);
    let mut b = 0.0;
    let mut f = objective(&w, b);
    let mut step = 1.0;
    let mut iterations = 0;
    let (mut gw, mut gb) = gradient(&w, b);
    let mut gnorm = (gw.dot(&gw) + gb * gb).sqrt();
    while gnorm >= opts.tolerance && iterations < opts.max_iter {
        iterations += 1;
        let sq = gnorm * gnorm;
        loop {
            let w_new = &w - &(step * &gw);
            let b_new = b - step * gb;
            let f_new = objective(&w_new, b_new);
            if f_new <= f - 0.5 * step * sq || step < 1e-12 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
        step = (step * 2.0).min(1e6);
        (gw, gb) = gradient(&w, b);
        gnorm = (gw.dot(&gw) + gb * gb).sqrt();
    }
    let converged = gnorm < opts.tolerance;
    if !converged {
        log::warn!(
            "fair-risk fit stopped after {iterations} iterations with gradient norm {gnorm:.3e}"
        );
    }
    FairRiskModel {
        coefficients: w.to_vec(),
        intercept: b,
        iterations,
        gradient_norm: gnorm,
        converged,
        degenerate,
    }
}

/// Fits the fair-risk model on the train split's fair features and labels.
pub fn fit_fair_risk(ds: &TabularDataset) -> Result<FairRiskModel> {
    if ds.fair_features.ncols() == 0 {
        return Err(Error::config(
            "fair_features",
            "at least one fair feature is required",
        ));
    }
    let train = ds.view(Split::Train);
    if !(train.labels.contains(&0) && train.labels.contains(&1)) {
        return Err(Error::config(
            "labels",
            "the train split must contain both label values",
        ));
    }
    Ok(fit_logistic(
        train.fair_features.view(),
        &train.labels,
        LogisticOptions::default(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairRiskProfile {
    pub scores: Vec<f64>,
    pub shift_constant: f64,
    pub shifted_scores: Vec<f64>,
}

impl FairRiskProfile {
    pub fn new(scores: Vec<f64>, group: &[Group]) -> Result<Self> {
        let (shift_constant, shifted_scores) = parity_shift(&scores, group)?;
        Ok(FairRiskProfile {
            scores,
            shift_constant,
            shifted_scores,
        })
    }

    pub fn axis(&self, axis: ScoreAxis) -> &[f64] {
        match axis {
            ScoreAxis::RawScores => &self.scores,
            ScoreAxis::ShiftedScores => &self.shifted_scores,
        }
    }

    pub fn to_audit_json(&self) -> serde_json::Value {
        let r = |v: &[f64]| v.iter().map(|&x| round_sig(x, 12)).collect::<Vec<_>>();
        serde_json::json!({
            "scores": r(&self.scores),
            "shift_constant": round_sig(self.shift_constant, 12),
            "shifted_scores": r(&self.shifted_scores),
        })
    }
}

fn group_mean(values: &[f64], group: &[Group], g: Group) -> Option<f64> {
    let (sum, count) = values
        .iter()
        .zip(group)
        .filter(|(_, &gg)| gg == g)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Returns `c = mean(G−) − mean(G+)` and the scores with `c` added to every
/// privileged instance.
pub fn parity_shift(scores: &[f64], group: &[Group]) -> Result<(f64, Vec<f64>)> {
    let unpriv = group_mean(scores, group, Group::Unprivileged)
        .ok_or_else(|| Error::EmptyGroup("no unprivileged instances".into()))?;
    let priv_ = group_mean(scores, group, Group::Privileged)
        .ok_or_else(|| Error::EmptyGroup("no privileged instances".into()))?;
    let c = unpriv - priv_;
    let shifted = scores
        .iter()
        .zip(group)
        .map(|(&s, &g)| if g == Group::Privileged { s + c } else { s })
        .collect();
    Ok((c, shifted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreAxis {
    RawScores,
    ShiftedScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairs {
    /// `(query_index, reference_index)` into the scored instance vector.
    pub pairs: Vec<(usize, usize)>,
    pub query_group: Group,
    pub axis: ScoreAxis,
    pub regime: Regime,
}

impl MatchedPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs as `(unprivileged_index, privileged_index)`.
    pub fn oriented(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let flip = self.query_group == Group::Privileged;
        self.pairs
            .iter()
            .map(move |&(q, r)| if flip { (r, q) } else { (q, r) })
    }

    pub fn to_audit_json(&self) -> serde_json::Value {
        serde_json::json!({
            "query_group": self.query_group,
            "axis": self.axis,
            "regime": self.regime,
            "query": self.pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
            "reference": self.pairs.iter().map(|p| p.1).collect::<Vec<_>>(),
        })
    }
}

/// Result of [`match_pairs`] before it is tagged with an axis and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub query_group: Group,
}

/// Range-minimum over reference indices laid out in score order.
struct SparseMin {
    levels: Vec<Vec<usize>>,
}

impl SparseMin {
    fn new(values: Vec<usize>) -> Self {
        let mut levels = vec![values];
        let mut width = 1;
        while 2 * width <= levels[0].len() {
            let prev = levels.last().unwrap();
            let next = (0..prev.len() - width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        SparseMin { levels }
    }

    /// Minimum over `lo..hi` (non-empty).
    fn query(&self, lo: usize, hi: usize) -> usize {
        let len = hi - lo;
        let level = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let width = 1 << level;
        self.levels[level][lo].min(self.levels[level][hi - width])
    }
}

/// Pairs every eligible instance of the smaller eligible group with its
/// nearest eligible instance of the other group by absolute score distance.
///
/// The query group is the one with fewer eligible instances; on equal counts
/// it is the group owning the lowest eligible index. References may be reused. Among references within
/// [`MATCH_TIE_TOLERANCE`] of the minimum distance the lowest index wins.
pub fn match_pairs(scores: &[f64], group: &[Group], eligible: &[bool]) -> Result<Matching> {
    if scores.len() != group.len() || scores.len() != eligible.len() {
        return Err(Error::config("scores", "score, group and mask lengths differ"));
    }
    let pool = |g: Group| -> Vec<usize> {
        (0..scores.len())
            .filter(|&i| eligible[i] && group[i] == g)
            .collect()
    };
    let unpriv = pool(Group::Unprivileged);
    let priv_ = pool(Group::Privileged);
    if unpriv.is_empty() || priv_.is_empty() {
        let g = if unpriv.is_empty() {
            Group::Unprivileged
        } else {
            Group::Privileged
        };
        return Err(Error::EmptyGroup(format!("no eligible {g} instances to match")));
    }
    let unpriv_queries = match unpriv.len().cmp(&priv_.len()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => unpriv[0] < priv_[0],
    };
    let (query_group, queries, mut refs) = if unpriv_queries {
        (Group::Unprivileged, unpriv, priv_)
    } else {
        (Group::Privileged, priv_, unpriv)
    };
    refs.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = refs.iter().map(|&j| scores[j]).collect();
    let rmq = SparseMin::new(refs.clone());

    let pairs = queries
        .into_iter()
        .map(|q| {
            let s = scores[q];
            let pos = sorted.partition_point(|&r| r < s);
            let mut best = f64::INFINITY;
            if pos > 0 {
                best = best.min((s - sorted[pos - 1]).abs());
            }
            if pos < sorted.len() {
                best = best.min((s - sorted[pos]).abs());
            }
            let bound = best + MATCH_TIE_TOLERANCE;
            let lo = sorted[..pos].partition_point(|&r| (s - r).abs() > bound);
            let hi = pos + sorted[pos..].partition_point(|&r| (s - r).abs() <= bound);
            (q, rmq.query(lo, hi))
        })
        .collect();
    Ok(Matching { pairs, query_group })
}

/// Matches on one score axis, restricting both sides to `y = 1` for EOO.
pub fn build_matching(
    profile: &FairRiskProfile,
    labels: &[u8],
    group: &[Group],
    axis: ScoreAxis,
    regime: Regime,
) -> Result<MatchedPairs> {
    let eligible: Vec<bool> = match regime {
        Regime::Outcome => vec![true; labels.len()],
        Regime::Eoo => labels.iter().map(|&y| y == 1).collect(),
    };
    if regime == Regime::Eoo {
        for g in [Group::Unprivileged, Group::Privileged] {
            if !eligible.iter().zip(group).any(|(&e, &gg)| e && gg == g) {
                return Err(Error::EmptyEooPool(g));
            }
        }
    }
    let m = match_pairs(profile.axis(axis), group, &eligible)?;
    Ok(MatchedPairs {
        pairs: m.pairs,
        query_group: m.query_group,
        axis,
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use Group::{Privileged as P, Unprivileged as U};

    /// Exhaustive scan with the same tie rule.
    fn brute_force(scores: &[f64], group: &[Group], eligible: &[bool]) -> Matching {
        let count = |g| (0..scores.len()).filter(|&i| eligible[i] && group[i] == g).count();
        let first = (0..scores.len()).find(|&i| eligible[i]).unwrap();
        let qg = match count(U).cmp(&count(P)) {
            std::cmp::Ordering::Less => U,
            std::cmp::Ordering::Greater => P,
            std::cmp::Ordering::Equal => group[first],
        };
        let mut pairs = Vec::new();
        for q in 0..scores.len() {
            if !eligible[q] || group[q] != qg {
                continue;
            }
            let refs: Vec<usize> = (0..scores.len())
                .filter(|&j| eligible[j] && group[j] != qg)
                .collect();
            let d: Vec<f64> = refs.iter().map(|&j| (scores[q] - scores[j]).abs()).collect();
            let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let j = refs
                .iter()
                .zip(&d)
                .filter(|(_, &dj)| dj <= best + MATCH_TIE_TOLERANCE)
                .map(|(&j, _)| j)
                .min()
                .unwrap();
            pairs.push((q, j));
        }
        Matching {
            pairs,
            query_group: qg,
        }
    }

    #[test]
    fn nearest_with_tie_to_lower_index() {
        // queries: the two unprivileged instances; references: three privileged
        let scores = [0.2, 0.9, 0.1, 0.85, 0.95];
        let group = [U, U, P, P, P];
        let m = match_pairs(&scores, &group, &[true; 5]).unwrap();
        assert_eq!(m.query_group, U);
        assert_eq!(m.pairs, vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn single_reference_takes_all_queries() {
        let scores = [0.1, 0.5, 0.9, 0.3];
        let group = [U, U, U, P];
        let m = match_pairs(&scores, &group, &[true; 4]).unwrap();
        assert_eq!(m.query_group, P);
        assert_eq!(m.pairs, vec![(3, 0)]);
        let group = [P, P, P, U];
        let m = match_pairs(&scores, &group, &[true; 4]).unwrap();
        assert_eq!(m.pairs, vec![(3, 0)]);
        let scores = [0.4, 0.5, 0.9, 0.3];
        let group = [U, U, P, U];
        let m = match_pairs(&scores, &group, &[true; 4]).unwrap();
        assert_eq!(m.pairs, vec![(2, 1)]);
    }

    #[test]
    fn many_to_one() {
        let scores = [0.31, 0.32, 0.33, 0.3, 0.9, 0.95, 0.99];
        let group = [U, U, U, P, P, P, P];
        let m = match_pairs(&scores, &group, &[true; 7]).unwrap();
        assert_eq!(m.pairs, vec![(0, 3), (1, 3), (2, 3)]);
    }

    #[test]
    fn random_thirty_by_fifty_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..80).map(|_| rng.random::<f64>()).collect();
        let group: Vec<Group> = (0..80).map(|i| if i < 30 { U } else { P }).collect();
        let eligible = vec![true; 80];
        let fast = match_pairs(&scores, &group, &eligible).unwrap();
        assert_eq!(fast.pairs.len(), 30);
        assert_eq!(fast, brute_force(&scores, &group, &eligible));
    }

    #[test]
    fn empty_pool_errors() {
        let err = match_pairs(&[0.1, 0.2], &[U, P], &[true, false]).unwrap_err();
        assert!(matches!(err, Error::EmptyGroup(_)));
    }

    #[test]
    fn eoo_matching_restricts_to_positives() {
        let scores = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let group = [U, U, U, P, P, P];
        let labels = [1, 0, 1, 0, 1, 1];
        let profile = FairRiskProfile::new(scores, &group).unwrap();
        let m = build_matching(&profile, &labels, &group, ScoreAxis::RawScores, Regime::Eoo)
            .unwrap();
        for (q, r) in &m.pairs {
            assert_eq!(labels[*q], 1);
            assert_eq!(labels[*r], 1);
        }
        let labels = [0, 0, 0, 1, 1, 1];
        let err = build_matching(&profile, &labels, &group, ScoreAxis::RawScores, Regime::Eoo)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyEooPool(Group::Unprivileged)));
    }

    #[test]
    fn parity_shift_examples() {
        let (c, shifted) = parity_shift(&[0.3, 0.5, 0.5, 0.3], &[U, P, P, U]).unwrap();
        assert!((c + 0.2).abs() < 1e-15);
        assert!((shifted[1] - 0.3).abs() < 1e-15);
        assert_eq!(shifted[0], 0.3);

        let (c, shifted) = parity_shift(&[0.2, 0.4, 0.4, 0.2], &[U, U, P, P]).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(shifted, vec![0.2, 0.4, 0.4, 0.2]);

        assert!(matches!(parity_shift(&[0.1], &[U]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn parity_shift_equalizes_random_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let group: Vec<Group> = (0..50).map(|_| if rng.random_bool(0.4) { U } else { P }).collect();
        let (_, shifted) = parity_shift(&scores, &group).unwrap();
        let mu = group_mean(&shifted, &group, U).unwrap();
        let mp = group_mean(&shifted, &group, P).unwrap();
        assert!((mu - mp).abs() < 1e-12);
        // a second application is a no-op
        let (c2, again) = parity_shift(&shifted, &group).unwrap();
        assert!(c2.abs() < 1e-12);
        for (a, b) in again.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_fair_feature_gives_base_rate() {
        let x = Array2::from_elem((8, 1), 0.0);
        let y = [1, 0, 0, 1, 1, 1, 0, 1];
        let model = fit_logistic(x.view(), &y, LogisticOptions::default());
        assert!(model.degenerate);
        assert!(model.converged);
        for s in model.score_rows(x.view()) {
            assert!((s - 5.0 / 8.0).abs() < 1e-6);
        }
    }

    #[test]
    fn separable_feature_splits_scores() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| if i < 10 { 1.0 } else { -1.0 });
        let y: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let model = fit_logistic(x.view(), &y, LogisticOptions::default());
        let s = model.score_rows(x.view());
        assert!(s[..10].iter().all(|&v| v > 0.95));
        assert!(s[10..].iter().all(|&v| v < 0.05));
        assert!(model.coefficients.iter().all(|c| c.is_finite()));
    }

    /// Newton–Raphson on the same penalized objective, run to machine precision.
    fn newton_oracle(x: &Array2<f64>, y: &[u8], l2: f64) -> (Vec<f64>, f64) {
        let n = x.nrows();
        let k = x.ncols();
        // augmented design with a trailing intercept column
        let xa = Array2::from_shape_fn((n, k + 1), |(i, j)| if j < k { x[[i, j]] } else { 1.0 });
        let mut beta = vec![0.0; k + 1];
        for _ in 0..100 {
            let mut g = vec![0.0; k + 1];
            let mut h = vec![vec![0.0; k + 1]; k + 1];
            for i in 0..n {
                let z: f64 = (0..=k).map(|j| xa[[i, j]] * beta[j]).sum();
                let p = 1.0 / (1.0 + (-z).exp());
                for a in 0..=k {
                    g[a] += (p - f64::from(y[i])) * xa[[i, a]] / n as f64;
                    for b in 0..=k {
                        h[a][b] += p * (1.0 - p) * xa[[i, a]] * xa[[i, b]] / n as f64;
                    }
                }
            }
            for a in 0..k {
                g[a] += l2 * beta[a];
                h[a][a] += l2;
            }
            // Gaussian elimination with partial pivoting
            let mut m: Vec<Vec<f64>> = h
                .iter()
                .zip(&g)
                .map(|(row, &gi)| {
                    let mut r = row.clone();
                    r.push(gi);
                    r
                })
                .collect();
            for c in 0..=k {
                let piv = (c..=k)
                    .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
                    .unwrap();
                m.swap(c, piv);
                for r in 0..=k {
                    if r != c {
                        let f = m[r][c] / m[c][c];
                        for cc in c..=k + 1 {
                            m[r][cc] -= f * m[c][cc];
                        }
                    }
                }
            }
            let step: Vec<f64> = (0..=k).map(|r| m[r][k + 1] / m[r][r]).collect();
            for j in 0..=k {
                beta[j] -= step[j];
            }
            if step.iter().map(|s| s * s).sum::<f64>().sqrt() < 1e-14 {
                break;
            }
        }
        (beta[..k].to_vec(), beta[k])
    }

    #[test]
    fn gradient_descent_fit_matches_newton_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        // an ordinal feature resembling years of education, z-scored
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1..=16) as f64).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| (raw[i] - mean) / sd);
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let p = 1.0 / (1.0 + (-(0.9 * x[[i, 0]] - 1.1)).exp());
                u8::from(rng.random::<f64>() < p)
            })
            .collect();
        let model = fit_logistic(x.view(), &y, LogisticOptions::default());
        assert!(model.converged);
        let (w, b) = newton_oracle(&x, &y, FAIR_RISK_L2);
        let oracle = FairRiskModel {
            coefficients: w,
            intercept: b,
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
            degenerate: false,
        };
        for (a, b) in model
            .score_rows(x.view())
            .iter()
            .zip(oracle.score_rows(x.view()))
        {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn matching_is_optimal(
            scores in proptest::collection::vec(0.0f64..1.0, 2..60),
            flags in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let n = scores.len();
            let mut group: Vec<Group> = flags[..n].iter().map(|&f| if f { U } else { P }).collect();
            group[0] = U;
            group[1] = P;
            let eligible = vec![true; n];
            let m = match_pairs(&scores, &group, &eligible).unwrap();
            for &(q, r) in &m.pairs {
                prop_assert_ne!(group[q], group[r]);
                for j in 0..n {
                    if group[j] == group[r] {
                        prop_assert!((scores[q] - scores[r]).abs() <= (scores[q] - scores[j]).abs() + MATCH_TIE_TOLERANCE);
                    }
                }
            }
            prop_assert_eq!(m.clone(), brute_force(&scores, &group, &eligible));
            // a zero shift leaves the matching unchanged
            let profile = FairRiskProfile { scores: scores.clone(), shift_constant: 0.0, shifted_scores: scores.clone() };
            let a = match_pairs(profile.axis(ScoreAxis::RawScores), &group, &eligible).unwrap();
            let b = match_pairs(profile.axis(ScoreAxis::ShiftedScores), &group, &eligible).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn discrete_scores_tie_break_like_brute_force(
            levels in proptest::collection::vec(0u8..6, 2..50),
            flags in proptest::collection::vec(any::<bool>(), 50),
            mask in proptest::collection::vec(any::<bool>(), 50),
        ) {
            let n = levels.len();
            let scores: Vec<f64> = levels.iter().map(|&l| f64::from(l) * 0.05 + 0.1).collect();
            let mut group: Vec<Group> = flags[..n].iter().map(|&f| if f { U } else { P }).collect();
            let mut eligible = mask[..n].to_vec();
            group[0] = U;
            group[1] = P;
            eligible[0] = true;
            eligible[1] = true;
            prop_assert_eq!(
                match_pairs(&scores, &group, &eligible).unwrap(),
                brute_force(&scores, &group, &eligible)
            );
        }
    }
}
