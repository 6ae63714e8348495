//! Exact posteriors and EM fitting of the two-coin and one-coin worker models.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    clamp_probability, DawidSkeneParams, Label, LabelMatrix, OneCoinParams, Prediction,
    SamplingDesign, PROB_FLOOR,
};
use crate::rules::majority_rule;

/// Per-item posterior probability that the true label is `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub rho: Vec<f64>,
}

impl Posterior {
    /// MAP labels: `+1` when `rho >= 0.5`.
    pub fn predict(&self, labels: &LabelMatrix) -> Prediction {
        Prediction {
            labels: self
                .rho
                .iter()
                .map(|&r| if r >= 0.5 { Label::Pos } else { Label::Neg })
                .collect(),
            undetermined: (0..labels.num_items())
                .filter(|&j| labels.item(j).is_empty())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerModel {
    DawidSkene,
    OneCoin,
}

impl FromStr for WorkerModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dawid-skene" | "dawid_skene" | "ds" => Ok(WorkerModel::DawidSkene),
            "one-coin" | "one_coin" | "onecoin" => Ok(WorkerModel::OneCoin),
            other => Err(Error::invalid(format!("unknown worker model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the objective changes by less than this between iterations.
    pub tol: f64,
    pub estimate_prior: bool,
    /// Beta pseudo-count added to both outcomes in every accuracy update.
    pub smoothing: f64,
    /// Initialize from vote fractions instead of hard majority labels.
    pub soft_init: bool,
    /// Prior used when `estimate_prior` is off.
    pub fixed_prior: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 500,
            tol: 1e-8,
            estimate_prior: true,
            smoothing: 0.5,
            soft_init: false,
            fixed_prior: 0.5,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("EM max_iter must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("EM tolerance must be positive"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::invalid("EM smoothing must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.fixed_prior) {
            return Err(Error::invalid("fixed prior must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Log-probabilities of each worker's two outcomes under each class.
struct LogTable {
    ln_prior: f64,
    ln_not_prior: f64,
    // ln p⁺, ln (1 - p⁺), ln p⁻, ln (1 - p⁻)
    workers: Vec<[f64; 4]>,
}

impl LogTable {
    fn new(params: &DawidSkeneParams) -> Self {
        let prior = clamp_probability(params.prior());
        let workers = params
            .sensitivity()
            .iter()
            .zip(params.specificity())
            .map(|(&sens, &spec)| {
                let sens = clamp_probability(sens);
                let spec = clamp_probability(spec);
                [sens.ln(), (1.0 - sens).ln(), spec.ln(), (1.0 - spec).ln()]
            })
            .collect();
        LogTable {
            ln_prior: prior.ln(),
            ln_not_prior: (1.0 - prior).ln(),
            workers,
        }
    }

    /// `(ln A_j, ln B_j)`: joint log-probability of the item's labels with
    /// `y = +1` and with `y = -1`.
    fn item(&self, observations: &[(usize, Label)]) -> (f64, f64) {
        let mut ln_a = self.ln_prior;
        let mut ln_b = self.ln_not_prior;
        for &(i, z) in observations {
            let [sens, miss_pos, spec, miss_neg] = self.workers[i];
            match z {
                Label::Pos => {
                    ln_a += sens;
                    ln_b += miss_neg;
                }
                Label::Neg => {
                    ln_a += miss_pos;
                    ln_b += spec;
                }
            }
        }
        (ln_a, ln_b)
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_workers(labels: &LabelMatrix, params: &DawidSkeneParams) -> Result<()> {
    if params.num_workers() != labels.num_workers() {
        return Err(Error::DimensionMismatch {
            what: "worker parameters",
            expected: labels.num_workers(),
            actual: params.num_workers(),
        });
    }
    Ok(())
}

fn e_step(labels: &LabelMatrix, table: &LogTable) -> (Posterior, f64) {
    let mut ll = 0.0;
    let rho = (0..labels.num_items())
        .map(|j| {
            let (ln_a, ln_b) = table.item(labels.item(j));
            ll += log_sum_exp(ln_a, ln_b);
            1.0 / (1.0 + (ln_b - ln_a).exp())
        })
        .collect();
    (Posterior { rho }, ll)
}

pub fn posterior_ds(labels: &LabelMatrix, params: &DawidSkeneParams) -> Result<Posterior> {
    check_workers(labels, params)?;
    Ok(e_step(labels, &LogTable::new(params)).0)
}

/// Marginal log-likelihood `Σ_j ln(A_j + B_j)` with true labels summed out.
pub fn log_likelihood(labels: &LabelMatrix, params: &DawidSkeneParams) -> Result<f64> {
    check_workers(labels, params)?;
    Ok(e_step(labels, &LogTable::new(params)).1)
}

/// Oracle MAP labels from known parameters: the exact posterior thresholded
/// at 0.5.
pub fn oracle_map_predict(labels: &LabelMatrix, params: &DawidSkeneParams) -> Result<Prediction> {
    Ok(posterior_ds(labels, params)?.predict(labels))
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedParams {
    DawidSkene(DawidSkeneParams),
    OneCoin(OneCoinParams),
}

impl FittedParams {
    pub fn to_dawid_skene(&self) -> DawidSkeneParams {
        match self {
            FittedParams::DawidSkene(p) => p.clone(),
            FittedParams::OneCoin(p) => p.to_dawid_skene(),
        }
    }

    pub fn prior(&self) -> f64 {
        match self {
            FittedParams::DawidSkene(p) => p.prior(),
            FittedParams::OneCoin(p) => p.prior(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: FittedParams,
    pub posterior: Posterior,
    pub iterations: usize,
    pub converged: bool,
    /// Marginal log-likelihood at the final parameters.
    pub log_likelihood: f64,
    /// Objective after every iteration: log-likelihood plus the log of the
    /// Beta(s+1, s+1) smoothing prior. Equal to the log-likelihood when the
    /// smoothing is zero. EM never decreases it.
    pub objective_trace: Vec<f64>,
}

/// Per-worker labeling rate `n_i / N`. Workers with no labels get
/// `PROB_FLOOR` so the design stays valid.
pub fn estimate_sampling(labels: &LabelMatrix) -> SamplingDesign {
    let n = labels.num_items().max(1) as f64;
    SamplingDesign::PerWorker(
        (0..labels.num_workers())
            .map(|i| {
                let count = labels.worker(i).len();
                if count == 0 {
                    PROB_FLOOR
                } else {
                    count as f64 / n
                }
            })
            .collect(),
    )
}

fn initial_rho(labels: &LabelMatrix, soft: bool) -> Vec<f64> {
    if soft {
        return (0..labels.num_items())
            .map(|j| {
                let obs = labels.item(j);
                if obs.is_empty() {
                    0.5
                } else {
                    obs.iter().filter(|(_, z)| z.is_pos()).count() as f64 / obs.len() as f64
                }
            })
            .collect();
    }
    majority_rule(labels.num_workers())
        .predict(labels)
        .expect("majority rule matches the matrix")
        .labels
        .into_iter()
        .map(|l| if l.is_pos() { 1.0 } else { 0.0 })
        .collect()
}

fn smoothed_ratio(s: f64, hits: f64, total: f64) -> f64 {
    let denom = 2.0 * s + total;
    if denom > 0.0 {
        (s + hits) / denom
    } else {
        0.5
    }
}

fn m_step(
    labels: &LabelMatrix,
    rho: &[f64],
    model: WorkerModel,
    opts: &EmOptions,
    sampling: &SamplingDesign,
) -> FittedParams {
    let s = opts.smoothing;
    let prior = if opts.estimate_prior {
        rho.iter().sum::<f64>() / rho.len() as f64
    } else {
        opts.fixed_prior
    };
    let m = labels.num_workers();
    match model {
        WorkerModel::DawidSkene => {
            let mut sens = Vec::with_capacity(m);
            let mut spec = Vec::with_capacity(m);
            for i in 0..m {
                let (mut pos_hits, mut pos_mass, mut neg_hits, mut neg_mass) = (0.0, 0.0, 0.0, 0.0);
                for &(j, z) in labels.worker(i) {
                    let r = rho[j];
                    pos_mass += r;
                    neg_mass += 1.0 - r;
                    match z {
                        Label::Pos => pos_hits += r,
                        Label::Neg => neg_hits += 1.0 - r,
                    }
                }
                sens.push(smoothed_ratio(s, pos_hits, pos_mass));
                spec.push(smoothed_ratio(s, neg_hits, neg_mass));
            }
            FittedParams::DawidSkene(
                DawidSkeneParams::new(sens, spec, prior, sampling.clone())
                    .expect("M-step estimates are probabilities"),
            )
        }
        WorkerModel::OneCoin => {
            let accuracy = (0..m)
                .map(|i| {
                    let row = labels.worker(i);
                    let hits: f64 = row
                        .iter()
                        .map(|&(j, z)| if z.is_pos() { rho[j] } else { 1.0 - rho[j] })
                        .sum();
                    smoothed_ratio(s, hits, row.len() as f64)
                })
                .collect();
            FittedParams::OneCoin(
                OneCoinParams::new(accuracy, prior, sampling.clone())
                    .expect("M-step estimates are probabilities"),
            )
        }
    }
}

fn log_smoothing_prior(params: &FittedParams, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let term = |p: f64| {
        let p = clamp_probability(p);
        s * (p.ln() + (1.0 - p).ln())
    };
    match params {
        FittedParams::DawidSkene(p) => p
            .sensitivity()
            .iter()
            .chain(p.specificity())
            .map(|&x| term(x))
            .sum(),
        FittedParams::OneCoin(p) => p.accuracy().iter().map(|&x| term(x)).sum(),
    }
}

/// Fits worker parameters by EM, starting from majority-vote labels.
pub fn em_fit(labels: &LabelMatrix, model: WorkerModel, opts: &EmOptions) -> Result<EmFit> {
    opts.validate()?;
    if labels.num_items() == 0 || labels.num_workers() == 0 {
        return Err(Error::invalid("EM needs at least one worker and one item"));
    }
    let sampling = estimate_sampling(labels);
    let mut rho = initial_rho(labels, opts.soft_init);
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let params = m_step(labels, &rho, model, opts, &sampling);
        let (posterior, ll) = e_step(labels, &LogTable::new(&params.to_dawid_skene()));
        let objective = ll + log_smoothing_prior(&params, opts.smoothing);
        let converged = trace
            .last()
            .is_some_and(|prev| (objective - prev).abs() < opts.tol);
        trace.push(objective);
        if converged || iterations >= opts.max_iter {
            return Ok(EmFit {
                params,
                posterior,
                iterations,
                converged,
                log_likelihood: ll,
                objective_trace: trace,
            });
        }
        rho = posterior.rho;
    }
}

/// EM fit followed by MAP thresholding of the fitted posterior.
pub fn em_map_predict(
    labels: &LabelMatrix,
    model: WorkerModel,
    opts: &EmOptions,
) -> Result<(Prediction, EmFit)> {
    let fit = em_fit(labels, model, opts)?;
    Ok((fit.posterior.predict(labels), fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_coin(w: &[f64], prior: f64) -> DawidSkeneParams {
        OneCoinParams::new(w.to_vec(), prior, SamplingDesign::Constant(1.0))
            .unwrap()
            .to_dawid_skene()
    }

    #[test]
    fn posterior_single_worker() {
        let z = LabelMatrix::new(1, 1, vec![(0, 0, Label::Pos)]).unwrap();
        let rho = posterior_ds(&z, &one_coin(&[0.8], 0.5)).unwrap().rho;
        assert!((rho[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn posterior_two_agreeing_workers() {
        let z = LabelMatrix::new(2, 1, vec![(0, 0, Label::Pos), (1, 0, Label::Pos)]).unwrap();
        let rho = posterior_ds(&z, &one_coin(&[0.8, 0.8], 0.5)).unwrap().rho;
        assert!((rho[0] - 0.64 / 0.68).abs() < 1e-12);
        assert!((rho[0] - 0.9412).abs() < 1e-4);
    }

    #[test]
    fn posterior_without_observations_is_prior() {
        let z = LabelMatrix::new(2, 3, vec![(0, 1, Label::Neg)]).unwrap();
        let rho = posterior_ds(&z, &one_coin(&[0.9, 0.7], 0.3)).unwrap().rho;
        assert!((rho[0] - 0.3).abs() < 1e-12);
        assert!((rho[2] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_values() {
        let empty = LabelMatrix::new(2, 4, vec![]).unwrap();
        assert!(log_likelihood(&empty, &one_coin(&[0.9, 0.7], 0.3)).unwrap().abs() < 1e-12);
        let z = LabelMatrix::new(1, 1, vec![(0, 0, Label::Pos)]).unwrap();
        let ll = log_likelihood(&z, &one_coin(&[0.8], 0.5)).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn posterior_dimension_mismatch() {
        let z = LabelMatrix::new(2, 1, vec![]).unwrap();
        assert!(posterior_ds(&z, &one_coin(&[0.8], 0.5)).is_err());
    }

    #[test]
    fn posterior_threshold_with_tie() {
        let z = LabelMatrix::new(1, 3, (0..3).map(|j| (0, j, Label::Pos))).unwrap();
        let p = Posterior {
            rho: vec![0.9, 0.1, 0.5],
        };
        assert_eq!(p.predict(&z).labels, vec![Label::Pos, Label::Neg, Label::Pos]);
    }

    #[test]
    fn unanimous_crowd() {
        let z = LabelMatrix::new(4, 6, (0..4).flat_map(|i| (0..6).map(move |j| (i, j, Label::Pos)))).unwrap();
        for model in [WorkerModel::OneCoin, WorkerModel::DawidSkene] {
            let (pred, fit) = em_map_predict(&z, model, &EmOptions::default()).unwrap();
            assert!(fit.converged);
            assert!(fit.iterations <= 5, "{} iterations", fit.iterations);
            assert!(pred.labels.iter().all(|l| l.is_pos()));
            assert!(fit.posterior.rho.iter().all(|&r| r > 0.999));
            let ds = fit.params.to_dawid_skene();
            assert!(ds.sensitivity().iter().all(|&p| p > 0.9));
        }
    }

    #[test]
    fn single_worker_first_m_step() {
        let signs = [1, 1, -1, 1, -1, 1, 1, 1, -1, 1];
        let z = LabelMatrix::new(
            1,
            signs.len(),
            signs.iter().enumerate().map(|(j, &x)| (0, j, Label::from_sign(x).unwrap())),
        )
        .unwrap();
        let opts = EmOptions {
            max_iter: 1,
            ..EmOptions::default()
        };
        let (pred, fit) = em_map_predict(&z, WorkerModel::OneCoin, &opts).unwrap();
        let s = opts.smoothing;
        let n = signs.len() as f64;
        match &fit.params {
            FittedParams::OneCoin(p) => assert!((p.accuracy()[0] - (s + n) / (2.0 * s + n)).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let expected: Vec<Label> = signs.iter().map(|&x| Label::from_sign(x).unwrap()).collect();
        assert_eq!(pred.labels, expected);
    }

    #[test]
    fn options_validation() {
        let bad = EmOptions {
            tol: 0.0,
            ..EmOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmOptions {
            smoothing: -1.0,
            ..EmOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fixed_prior_is_held() {
        let z = LabelMatrix::new(2, 3, vec![(0, 0, Label::Pos), (1, 1, Label::Pos), (0, 2, Label::Neg)]).unwrap();
        let opts = EmOptions {
            estimate_prior: false,
            fixed_prior: 0.3,
            ..EmOptions::default()
        };
        let fit = em_fit(&z, WorkerModel::OneCoin, &opts).unwrap();
        assert_eq!(fit.params.prior(), 0.3);
    }
}
