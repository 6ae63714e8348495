//! Error-rate bounds for hyperplane rules.
//!
//! Every bound is driven by the normalized expected scores
//!
//! ```text
//! ε⁺_j = Σ_i q_ij v_i (2p⁺_i - 1) + a      ε⁻_j = Σ_i q_ij v_i (2p⁻_i - 1) - a
//! t₁ = min_j min(ε⁺_j, ε⁻_j) / ‖v‖₂        t₂ = max_j max(ε⁺_j, ε⁻_j) / ‖v‖₂
//! ```
//!
//! `ε⁺_j` is the expected score of item `j` when its label is `+1` and `ε⁻_j`
//! the expected negated score when its label is `-1`; the per-item scores are
//! sums of independent bounded terms, so Hoeffding and Bernstein inequalities
//! bound the probability that a score lands on the wrong side of zero.

use serde::{Deserialize, Serialize};

use crate::em::{estimate_sampling, WorkerModel};
use crate::error::{Error, Result};
use crate::model::{
    DawidSkeneParams, GoldLabels, Label, LabelMatrix, OneCoinParams, Prediction, SamplingDesign,
};
use crate::rules::{oracle_map_rule, HyperplaneRule};

/// `exp(-x²/2)`.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp()
}

/// Bernoulli relative entropy `D(x‖y)`, defined for `x, y ∈ (0, 1)`.
pub fn kl_bernoulli(x: f64, y: f64) -> Result<f64> {
    let inside = |p: f64| p > 0.0 && p < 1.0;
    if !inside(x) || !inside(y) {
        return Err(Error::invalid(format!(
            "relative entropy needs arguments in (0, 1), got ({x}, {y})"
        )));
    }
    Ok(x * (x / y).ln() + (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStats {
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    /// `‖v‖∞ / ‖v‖₂`
    pub c_h: f64,
    /// Worst-case normalized score variance.
    pub sigma2: f64,
}

fn check_rule(rule: &HyperplaneRule, num_workers: usize) -> Result<f64> {
    if rule.num_workers() != num_workers {
        return Err(Error::DimensionMismatch {
            what: "rule weights",
            expected: num_workers,
            actual: rule.num_workers(),
        });
    }
    rule.checked_norm()
}

pub fn t_stats(rule: &HyperplaneRule, params: &DawidSkeneParams) -> Result<TStats> {
    let norm = check_rule(rule, params.num_workers())?;
    let mut t1 = f64::INFINITY;
    let mut t2 = f64::NEG_INFINITY;
    for q in params.sampling().columns(params.num_workers()) {
        let mut eps_pos = rule.shift;
        let mut eps_neg = -rule.shift;
        for (i, &v) in rule.weights.iter().enumerate() {
            eps_pos += q[i] * v * (2.0 * params.sensitivity()[i] - 1.0);
            eps_neg += q[i] * v * (2.0 * params.specificity()[i] - 1.0);
        }
        t1 = t1.min(eps_pos.min(eps_neg) / norm);
        t2 = t2.max(eps_pos.max(eps_neg) / norm);
    }
    Ok(TStats { t1, t2 })
}

/// One-coin variant: `t₁' = min_j (Σ q v (2w - 1) - |a|) / ‖v‖` and `t₂'` with
/// `+|a|`.
pub fn t_stats_onecoin(rule: &HyperplaneRule, params: &OneCoinParams) -> Result<TStats> {
    let norm = check_rule(rule, params.num_workers())?;
    let mut t1 = f64::INFINITY;
    let mut t2 = f64::NEG_INFINITY;
    for q in params.sampling().columns(params.num_workers()) {
        let margin: f64 = rule
            .weights
            .iter()
            .zip(params.accuracy())
            .zip(&q)
            .map(|((&v, &w), &q)| q * v * (2.0 * w - 1.0))
            .sum();
        t1 = t1.min((margin - rule.shift.abs()) / norm);
        t2 = t2.max((margin + rule.shift.abs()) / norm);
    }
    Ok(TStats { t1, t2 })
}

pub fn dispersion_stats(rule: &HyperplaneRule, params: &DawidSkeneParams) -> Result<Dispersion> {
    let norm = check_rule(rule, params.num_workers())?;
    let sup = rule.weights.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sigma2 = f64::NEG_INFINITY;
    for q in params.sampling().columns(params.num_workers()) {
        let (mut var_pos, mut var_neg) = (0.0, 0.0);
        for (i, &v) in rule.weights.iter().enumerate() {
            let bias_pos = 2.0 * params.sensitivity()[i] - 1.0;
            let bias_neg = 2.0 * params.specificity()[i] - 1.0;
            var_pos += v * v * q[i] * (1.0 - q[i] * bias_pos * bias_pos);
            var_neg += v * v * q[i] * (1.0 - q[i] * bias_neg * bias_neg);
        }
        sigma2 = sigma2.max(var_pos.max(var_neg) / (norm * norm));
    }
    Ok(Dispersion {
        c_h: sup / norm,
        sigma2,
    })
}

/// `max_j Σ v² q_ij / ‖v‖²`, the variance proxy used for one-coin workers.
pub fn sigma2_onecoin(rule: &HyperplaneRule, sampling: &SamplingDesign) -> Result<f64> {
    let norm = check_rule(rule, rule.num_workers())?;
    sampling.validate(rule.num_workers())?;
    Ok(sampling
        .columns(rule.num_workers())
        .iter()
        .map(|q| rule.weights.iter().zip(q).map(|(v, q)| v * v * q).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
        / (norm * norm))
}

/// Mean error-rate bounds of a hyperplane rule, with the statistics they
/// were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t1: f64,
    pub t2: f64,
    pub c_h: f64,
    pub sigma2: f64,
    pub hoeffding_upper: Option<f64>,
    pub bernstein_upper: Option<f64>,
    pub combined_upper: Option<f64>,
    pub hoeffding_lower: Option<f64>,
    pub bernstein_lower: Option<f64>,
    pub combined_lower: Option<f64>,
    pub t1_nonneg: bool,
    pub t2_nonpos: bool,
    /// Set when the parameters were estimated from data rather than known.
    pub estimated: bool,
}

impl BoundReport {
    pub fn from_stats(t: TStats, d: Dispersion) -> BoundReport {
        let TStats { t1, t2 } = t;
        let Dispersion { c_h, sigma2 } = d;
        let t1_nonneg = t1 >= 0.0;
        let t2_nonpos = t2 <= 0.0;

        let (hoeffding_upper, bernstein_upper) = if t1_nonneg {
            let bern = if t1 == 0.0 {
                1.0
            } else {
                (-t1 * t1 / (2.0 * (sigma2 + c_h * t1 / 3.0))).exp()
            };
            (Some(phi(t1)), Some(bern))
        } else {
            (None, None)
        };
        let combined_upper = hoeffding_upper.zip(bernstein_upper).map(|(h, b)| h.min(b));

        let hoeffding_lower = t2_nonpos.then(|| 1.0 - phi(t2));
        let bernstein_lower =
            (t2 < 0.0).then(|| 1.0 - (-t2 * t2 / (2.0 * (sigma2 - c_h * t2 / 3.0))).exp());
        let combined_lower = match (hoeffding_lower, bernstein_lower) {
            (Some(h), Some(b)) => Some(h.max(b)),
            (h, b) => h.or(b),
        };

        BoundReport {
            t1,
            t2,
            c_h,
            sigma2,
            hoeffding_upper,
            bernstein_upper,
            combined_upper,
            hoeffding_lower,
            bernstein_lower,
            combined_lower,
            t1_nonneg,
            t2_nonpos,
            estimated: false,
        }
    }
}

/// Hoeffding and Bernstein bounds on the mean error rate under the two-coin
/// model. Upper bounds need `t₁ ≥ 0`, lower bounds `t₂ ≤ 0`.
pub fn mean_error_bounds(rule: &HyperplaneRule, params: &DawidSkeneParams) -> Result<BoundReport> {
    Ok(BoundReport::from_stats(
        t_stats(rule, params)?,
        dispersion_stats(rule, params)?,
    ))
}

/// One-coin variant: `t₁'`, `t₂'` and the enlarged variance `σ²'`.
pub fn mean_error_bounds_onecoin(
    rule: &HyperplaneRule,
    params: &OneCoinParams,
) -> Result<BoundReport> {
    let t = t_stats_onecoin(rule, params)?;
    let norm = rule.checked_norm()?;
    let c_h = rule.weights.iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm;
    let sigma2 = sigma2_onecoin(rule, params.sampling())?;
    Ok(BoundReport::from_stats(t, Dispersion { c_h, sigma2 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvBound {
    pub value: f64,
    pub kind: BoundKind,
}

/// Majority-vote bound under one-coin workers with constant sampling `q`:
/// `exp(-2Mq²(w̄ - 1/2)²)` above 1/2, `1 - exp(...)` as a lower bound below.
pub fn mv_mean_bound(num_workers: usize, q: f64, wbar: f64) -> MvBound {
    let gap = wbar - 0.5;
    let tail = (-2.0 * num_workers as f64 * q * q * gap * gap).exp();
    if gap > 0.0 {
        MvBound {
            value: tail,
            kind: BoundKind::Upper,
        }
    } else if gap < 0.0 {
        MvBound {
            value: 1.0 - tail,
            kind: BoundKind::Lower,
        }
    } else {
        MvBound {
            value: 1.0,
            kind: BoundKind::Vacuous,
        }
    }
}

/// Lower bound on `P(error rate ≤ eps)`: `1 - exp(-N·D(eps‖φ(t₁)))`.
/// Requires `t₁ ≥ 0` and `eps > φ(t₁)`.
pub fn high_prob_bound(eps: f64, t1: f64, num_items: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(t1 >= 0.0) {
        return Err(Error::BoundNotApplicable(format!("t1 = {t1} is negative")));
    }
    let psi = phi(t1);
    if !(eps > psi) {
        return Err(Error::BoundNotApplicable(format!(
            "eps = {eps} does not exceed phi(t1) = {psi}"
        )));
    }
    if psi == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (-(num_items as f64) * kl_bernoulli(eps, psi)?).exp())
}

// φ(t) stays a positive normal double up to here.
const T1_SEARCH_MAX: f64 = 37.0;

/// Smallest `t₁` for which [`high_prob_bound`] reaches `1 - delta`, by
/// bisection to `1e-9`. The returned point is on the feasible side.
pub fn min_t1_for(eps: f64, delta: f64, num_items: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "eps and delta must lie in (0, 1), got ({eps}, {delta})"
        )));
    }
    if num_items == 0 {
        return Err(Error::invalid("number of items must be positive"));
    }
    let n = num_items as f64;
    // exp(-N D(eps‖φ(t))) ≤ delta, with φ(t) < eps
    let feasible = |t: f64| {
        let psi = phi(t);
        psi < eps && psi > 0.0 && (-n * kl_bernoulli(eps, psi).unwrap_or(0.0)).exp() <= delta
    };
    let mut lo = (-2.0 * eps.ln()).sqrt();
    if !feasible(T1_SEARCH_MAX) {
        return Err(Error::BoundNotApplicable(format!(
            "no t1 up to {T1_SEARCH_MAX} reaches confidence {} at eps = {eps}",
            1.0 - delta
        )));
    }
    let mut hi = lo + 1.0;
    while !feasible(hi) {
        lo = hi;
        hi = (hi * 2.0).min(T1_SEARCH_MAX);
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Minimum average accuracy for the one-step WMV guarantee:
/// `1/2 + 1/M + sqrt((M - 1) ln 2 / (2M²))`.
pub fn oswmv_threshold(num_workers: usize) -> f64 {
    let m = num_workers as f64;
    0.5 + 1.0 / m + ((m - 1.0) * std::f64::consts::LN_2 / (2.0 * m * m)).sqrt()
}

pub fn oswmv_condition(num_workers: usize, wbar: f64) -> bool {
    num_workers >= 2 && wbar >= oswmv_threshold(num_workers)
}

/// Root-mean-square distance of the accuracies from 1/2.
pub fn rho_bar(accuracies: &[f64]) -> f64 {
    if accuracies.is_empty() {
        return 0.0;
    }
    (accuracies.iter().map(|w| (w - 0.5) * (w - 0.5)).sum::<f64>() / accuracies.len() as f64).sqrt()
}

/// What worker quality is estimated against in a plugin bound.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Gold(&'a GoldLabels),
    Prediction(&'a Prediction),
}

impl Reference<'_> {
    fn get(&self, item: usize) -> Option<Label> {
        match self {
            Reference::Gold(g) => g.get(item),
            Reference::Prediction(p) => p.labels.get(item).copied(),
        }
    }

    fn num_items(&self) -> usize {
        match self {
            Reference::Gold(g) => g.num_items(),
            Reference::Prediction(p) => p.num_items(),
        }
    }
}

fn ratio_or_half(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.5
    } else {
        hits as f64 / total as f64
    }
}

/// Worker parameters estimated by agreement with a reference labeling,
/// `q̂_i = n_i / N` and `π̂` the positive fraction of the reference.
pub fn estimate_params(
    labels: &LabelMatrix,
    reference: Reference<'_>,
    model: WorkerModel,
) -> Result<DawidSkeneParams> {
    if reference.num_items() != labels.num_items() {
        return Err(Error::DimensionMismatch {
            what: "reference labels",
            expected: labels.num_items(),
            actual: reference.num_items(),
        });
    }
    let refs: Vec<Label> = (0..labels.num_items()).filter_map(|j| reference.get(j)).collect();
    if refs.is_empty() {
        return Err(Error::EmptyGold);
    }
    let prior = refs.iter().filter(|l| l.is_pos()).count() as f64 / refs.len() as f64;
    let m = labels.num_workers();
    let mut sens = Vec::with_capacity(m);
    let mut spec = Vec::with_capacity(m);
    for i in 0..m {
        // [class][agree?] counts, class 0 = positive
        let mut counts = [[0usize; 2]; 2];
        for &(j, z) in labels.worker(i) {
            if let Some(y) = reference.get(j) {
                counts[usize::from(!y.is_pos())][usize::from(z == y)] += 1;
            }
        }
        match model {
            WorkerModel::OneCoin => {
                let hits = counts[0][1] + counts[1][1];
                let total = hits + counts[0][0] + counts[1][0];
                let w = ratio_or_half(hits, total);
                sens.push(w);
                spec.push(w);
            }
            WorkerModel::DawidSkene => {
                sens.push(ratio_or_half(counts[0][1], counts[0][0] + counts[0][1]));
                spec.push(ratio_or_half(counts[1][1], counts[1][0] + counts[1][1]));
            }
        }
    }
    DawidSkeneParams::new(sens, spec, prior, estimate_sampling(labels))
}

/// Oracle-MAP bounds evaluated at estimated parameters; flagged `estimated`.
pub fn plugin_bound(params: &OneCoinParams) -> Result<BoundReport> {
    let mut report = mean_error_bounds(&oracle_map_rule(params), &params.to_dawid_skene())?;
    report.estimated = true;
    Ok(report)
}

/// Estimates worker quality against `reference` and returns the oracle-MAP
/// bound at those estimates. Under the two-coin model the rule is built from
/// the per-worker overall agreement and evaluated under the estimated
/// sensitivities and specificities.
pub fn plugin_report(
    labels: &LabelMatrix,
    reference: Reference<'_>,
    model: WorkerModel,
) -> Result<BoundReport> {
    let ds = estimate_params(labels, reference, model)?;
    let one_coin = match model {
        WorkerModel::OneCoin => ds.to_one_coin().expect("one-coin estimate"),
        WorkerModel::DawidSkene => {
            estimate_params(labels, reference, WorkerModel::OneCoin)?
                .to_one_coin()
                .expect("one-coin estimate")
        }
    };
    let mut report = mean_error_bounds(&oracle_map_rule(&one_coin), &ds)?;
    report.estimated = true;
    Ok(report)
}
