//! Synthetic crowds, seeded Monte-Carlo replication and exact enumeration.
//!
//! Replication `r` of a run with master seed `s` draws from its own ChaCha
//! stream seeded with [`derive_seed`]`(s, r)`, and per-replication results are
//! collected in index order. Results are therefore identical for any rayon
//! thread count.

pub mod experiments;

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::em::{em_map_predict, oracle_map_predict, EmOptions, WorkerModel};
use crate::error::{Error, Result};
use crate::model::{
    error_rate, DawidSkeneParams, GoldLabels, Label, LabelMatrix, Prediction, SamplingDesign,
};
use crate::rules::{bound_optimal_rule, iterative_wmv, majority_rule, one_step_wmv, HyperplaneRule};

/// SplitMix64 finalizer over `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `a` such that `Beta(a, b)` has the given mean.
pub fn beta_shape_for_mean(mean: f64, b: f64) -> Result<f64> {
    if !(mean > 0.0 && mean < 1.0) || !(b > 0.0) {
        return Err(Error::invalid(format!(
            "Beta mean must lie in (0, 1) and b must be positive, got mean {mean}, b {b}"
        )));
    }
    Ok(b * mean / (1.0 - mean))
}

#[derive(Debug, Clone, PartialEq)]
pub enum AccuracySource {
    /// One-coin accuracies.
    Explicit(Vec<f64>),
    /// Two-coin sensitivities and specificities.
    ExplicitDs {
        sensitivity: Vec<f64>,
        specificity: Vec<f64>,
    },
    /// Independent `Beta(a, b)` draw per worker (per class under the two-coin
    /// model).
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdGenerator {
    pub model: WorkerModel,
    pub num_workers: usize,
    pub num_items: usize,
    pub prior: f64,
    pub accuracy: AccuracySource,
    pub sampling: SamplingDesign,
    /// Exactly `⌈N/2⌉` positives in shuffled order instead of i.i.d. draws.
    pub balanced: bool,
    pub seed: u64,
}

/// A generated crowd together with the truth it was drawn from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub labels: LabelMatrix,
    pub gold: GoldLabels,
    pub truth: Vec<Label>,
    pub params: DawidSkeneParams,
}

impl CrowdGenerator {
    /// One-coin crowd with `Beta(a, b)` accuracies of mean `wbar`, constant
    /// sampling `q` and balanced classes.
    pub fn beta_one_coin(
        num_workers: usize,
        num_items: usize,
        q: f64,
        wbar: f64,
        b: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(CrowdGenerator {
            model: WorkerModel::OneCoin,
            num_workers,
            num_items,
            prior: 0.5,
            accuracy: AccuracySource::Beta {
                a: beta_shape_for_mean(wbar, b)?,
                b,
            },
            sampling: SamplingDesign::Constant(q),
            balanced: true,
            seed,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        CrowdGenerator {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 || self.num_items == 0 {
            return Err(Error::invalid("generator needs at least one worker and one item"));
        }
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(Error::InvalidProbability {
                what: "prior",
                value: self.prior,
                range: "[0, 1]",
            });
        }
        self.sampling.validate(self.num_workers)?;
        if let Some(n) = self.sampling.num_items() {
            if n != self.num_items {
                return Err(Error::DimensionMismatch {
                    what: "sampling matrix columns",
                    expected: self.num_items,
                    actual: n,
                });
            }
        }
        match &self.accuracy {
            AccuracySource::Explicit(w) if w.len() != self.num_workers => {
                Err(Error::DimensionMismatch {
                    what: "accuracy vector",
                    expected: self.num_workers,
                    actual: w.len(),
                })
            }
            AccuracySource::ExplicitDs {
                sensitivity,
                specificity,
            } if sensitivity.len() != self.num_workers || specificity.len() != self.num_workers => {
                Err(Error::DimensionMismatch {
                    what: "sensitivity/specificity vectors",
                    expected: self.num_workers,
                    actual: sensitivity.len().min(specificity.len()),
                })
            }
            AccuracySource::Beta { a, b } if !(*a > 0.0 && *b > 0.0) => Err(Error::invalid(
                format!("Beta parameters must be positive, got ({a}, {b})"),
            )),
            _ => Ok(()),
        }
    }

    fn draw_params(&self, rng: &mut ChaCha8Rng) -> Result<DawidSkeneParams> {
        let (sens, spec) = match &self.accuracy {
            AccuracySource::Explicit(w) => (w.clone(), w.clone()),
            AccuracySource::ExplicitDs {
                sensitivity,
                specificity,
            } => (sensitivity.clone(), specificity.clone()),
            AccuracySource::Beta { a, b } => {
                let beta = Beta::new(*a, *b)
                    .map_err(|e| Error::invalid(format!("Beta({a}, {b}): {e}")))?;
                let sens: Vec<f64> = (0..self.num_workers).map(|_| beta.sample(rng)).collect();
                let spec = match self.model {
                    WorkerModel::OneCoin => sens.clone(),
                    WorkerModel::DawidSkene => {
                        (0..self.num_workers).map(|_| beta.sample(rng)).collect()
                    }
                };
                (sens, spec)
            }
        };
        DawidSkeneParams::new(sens, spec, self.prior, self.sampling.clone())
    }

    pub fn generate(&self) -> Result<Synthetic> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let params = self.draw_params(&mut rng)?;

        let truth: Vec<Label> = if self.balanced {
            let positives = self.num_items.div_ceil(2);
            let mut y: Vec<Label> = (0..self.num_items)
                .map(|j| if j < positives { Label::Pos } else { Label::Neg })
                .collect();
            y.shuffle(&mut rng);
            y
        } else {
            (0..self.num_items)
                .map(|_| {
                    if rng.random::<f64>() < self.prior {
                        Label::Pos
                    } else {
                        Label::Neg
                    }
                })
                .collect()
        };

        let mut entries = Vec::new();
        for (j, &y) in truth.iter().enumerate() {
            for i in 0..self.num_workers {
                if rng.random::<f64>() >= self.sampling.prob(i, j) {
                    continue;
                }
                let p_correct = match y {
                    Label::Pos => params.sensitivity()[i],
                    Label::Neg => params.specificity()[i],
                };
                let z = if rng.random::<f64>() < p_correct { y } else { -y };
                entries.push((i, j, z));
            }
        }
        let labels = LabelMatrix::new(self.num_workers, self.num_items, entries)?;
        Ok(Synthetic {
            labels,
            gold: GoldLabels::complete(truth.clone()),
            truth,
            params,
        })
    }
}

/// An aggregation procedure.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Mv,
    /// Weighted vote with zero shift; `None` uses `2w - 1` from the true
    /// (or supplied) one-coin accuracies.
    Wmv(Option<Vec<f64>>),
    OneStepWmv,
    IterativeWmv { max_iter: usize },
    EmMap { model: WorkerModel, opts: EmOptions },
    OracleMap,
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Mv => "mv",
            Method::Wmv(_) => "wmv",
            Method::OneStepWmv => "oswmv",
            Method::IterativeWmv { .. } => "iwmv",
            Method::EmMap { .. } => "em-map",
            Method::OracleMap => "oracle-map",
        }
    }

    /// Whether the method needs known worker parameters.
    pub fn needs_params(&self) -> bool {
        matches!(self, Method::OracleMap | Method::Wmv(None))
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mv" => Method::Mv,
            "wmv" | "bound-optimal" => Method::Wmv(None),
            "oswmv" => Method::OneStepWmv,
            "iwmv" => Method::IterativeWmv { max_iter: 100 },
            "em-map" => Method::EmMap {
                model: WorkerModel::OneCoin,
                opts: EmOptions::default(),
            },
            "oracle-map" => Method::OracleMap,
            other => return Err(Error::UnknownMethod(other.to_string())),
        })
    }
}

/// Oracle bound-optimal weights `(2p⁺ + 2p⁻)/2 - 1` per worker.
pub fn bound_optimal_from_params(params: &DawidSkeneParams) -> HyperplaneRule {
    let w: Vec<f64> = params
        .sensitivity()
        .iter()
        .zip(params.specificity())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    bound_optimal_rule(&w)
}

/// Runs `method` on `labels`. `params` are the known worker parameters, used
/// only by methods that need them.
pub fn aggregate(
    method: &Method,
    labels: &LabelMatrix,
    params: Option<&DawidSkeneParams>,
) -> Result<Prediction> {
    let require = || {
        params.ok_or_else(|| {
            Error::invalid(format!("method `{}` requires worker parameters", method.id()))
        })
    };
    match method {
        Method::Mv => majority_rule(labels.num_workers()).predict(labels),
        Method::Wmv(Some(weights)) => HyperplaneRule::new(weights.clone(), 0.0).predict(labels),
        Method::Wmv(None) => bound_optimal_from_params(require()?).predict(labels),
        Method::OneStepWmv => Ok(one_step_wmv(labels).0),
        Method::IterativeWmv { max_iter } => Ok(iterative_wmv(labels, *max_iter).prediction),
        Method::EmMap { model, opts } => Ok(em_map_predict(labels, *model, opts)?.0),
        Method::OracleMap => oracle_map_predict(labels, require()?),
    }
}

/// Mean and standard error of replicated measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<McEstimate> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::invalid("at least two replications are required"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        Ok(McEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            reps: n,
        })
    }
}

/// Runs `f(seed, index)` for every replication in parallel and returns the
/// results in index order.
pub fn replicate<T, F>(reps: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, usize) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| f(derive_seed(master_seed, r as u64), r))
        .collect()
}

/// Per-replication error rates of `method` on fresh crowds from `gen`.
pub fn mc_error_samples(
    method: &Method,
    gen: &CrowdGenerator,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    gen.validate()?;
    replicate(reps, master_seed, |seed, _| {
        let data = gen.with_seed(seed).generate()?;
        let pred = aggregate(method, &data.labels, Some(&data.params))?;
        error_rate(&pred, &data.gold)
    })
}

pub fn mc_error_rate(
    method: &Method,
    gen: &CrowdGenerator,
    reps: usize,
    master_seed: u64,
) -> Result<McEstimate> {
    if reps < 2 {
        return Err(Error::invalid("at least two replications are required"));
    }
    McEstimate::from_samples(&mc_error_samples(method, gen, reps, master_seed)?)
}

/// Which sampling columns an exact computation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    Item(usize),
    /// Mean over all items of the design (a single column unless the design
    /// is a full matrix).
    Average,
}

pub const MAX_ENUMERATION_WORKERS: usize = 12;

/// `(P(score < 0 | y = +1), P(score >= 0 | y = -1))` for one column.
fn column_errors(rule: &HyperplaneRule, params: &DawidSkeneParams, q: &[f64]) -> (f64, f64) {
    struct Walk<'a> {
        weights: &'a [f64],
        shift: f64,
        // per worker: (P(missing), P(z = +1), P(z = -1))
        outcomes: Vec<(f64, f64, f64)>,
        positive: bool,
        err: f64,
    }
    impl Walk<'_> {
        fn visit(&mut self, i: usize, score: f64, prob: f64) {
            if i == self.weights.len() {
                let wrong = Label::from_score(score + self.shift).is_pos() != self.positive;
                if wrong {
                    self.err += prob;
                }
                return;
            }
            let (miss, plus, minus) = self.outcomes[i];
            let v = self.weights[i];
            if miss > 0.0 {
                self.visit(i + 1, score, prob * miss);
            }
            if plus > 0.0 {
                self.visit(i + 1, score + v, prob * plus);
            }
            if minus > 0.0 {
                self.visit(i + 1, score + -v, prob * minus);
            }
        }
    }
    let run = |positive: bool| {
        let outcomes = (0..rule.num_workers())
            .map(|i| {
                let observe = q[i];
                let right = if positive {
                    params.sensitivity()[i]
                } else {
                    params.specificity()[i]
                };
                let (p_plus, p_minus) = if positive {
                    (right, 1.0 - right)
                } else {
                    (1.0 - right, right)
                };
                (1.0 - observe, observe * p_plus, observe * p_minus)
            })
            .collect();
        let mut walk = Walk {
            weights: &rule.weights,
            shift: rule.shift,
            outcomes,
            positive,
            err: 0.0,
        };
        walk.visit(0, 0.0, 1.0);
        walk.err
    };
    (run(true), run(false))
}

/// Exact `E[error rate]` of a hyperplane rule by enumerating every worker's
/// outcome (missing, `+1`, `-1`). A zero score counts as `+1`.
pub fn exact_mean_error(
    rule: &HyperplaneRule,
    params: &DawidSkeneParams,
    columns: Columns,
) -> Result<f64> {
    let m = params.num_workers();
    if m > MAX_ENUMERATION_WORKERS {
        return Err(Error::TooManyWorkers {
            max: MAX_ENUMERATION_WORKERS,
            actual: m,
        });
    }
    if rule.num_workers() != m {
        return Err(Error::DimensionMismatch {
            what: "rule weights",
            expected: m,
            actual: rule.num_workers(),
        });
    }
    let all = params.sampling().columns(m);
    let prior = params.prior();
    let mix = |q: &[f64]| {
        let (err_pos, err_neg) = column_errors(rule, params, q);
        prior * err_pos + (1.0 - prior) * err_neg
    };
    match columns {
        Columns::Item(j) => {
            let q = match params.sampling().num_items() {
                Some(n) if j >= n => {
                    return Err(Error::invalid(format!("item {j} outside the {n}-item design")))
                }
                Some(_) => &all[j],
                None => &all[0],
            };
            Ok(mix(q))
        }
        Columns::Average => Ok(all.iter().map(|q| mix(q)).sum::<f64>() / all.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OneCoinParams;

    fn onecoin(w: &[f64], q: f64, prior: f64) -> DawidSkeneParams {
        OneCoinParams::new(w.to_vec(), prior, SamplingDesign::Constant(q))
            .unwrap()
            .to_dawid_skene()
    }

    fn gen(w: &[f64], q: f64, n: usize) -> CrowdGenerator {
        CrowdGenerator {
            model: WorkerModel::OneCoin,
            num_workers: w.len(),
            num_items: n,
            prior: 0.5,
            accuracy: AccuracySource::Explicit(w.to_vec()),
            sampling: SamplingDesign::Constant(q),
            balanced: false,
            seed: 7,
        }
    }

    #[test]
    fn exact_three_workers() {
        let e = exact_mean_error(&majority_rule(3), &onecoin(&[0.6; 3], 1.0, 0.5), Columns::Average).unwrap();
        assert!((e - 0.352).abs() < 1e-12);
    }

    #[test]
    fn exact_single_worker() {
        for prior in [0.1, 0.5, 0.9] {
            let e = exact_mean_error(&majority_rule(1), &onecoin(&[0.7], 1.0, prior), Columns::Average).unwrap();
            assert!((e - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_tie_mass_is_class_dependent() {
        // both wrong: 0.04; tie (prob 0.32) is wrong only when y = -1
        let e = exact_mean_error(&majority_rule(2), &onecoin(&[0.8, 0.8], 1.0, 0.5), Columns::Average).unwrap();
        assert!((e - (0.04 + 0.5 * 0.32)).abs() < 1e-12);
    }

    #[test]
    fn exact_limits() {
        let p = onecoin(&[0.6; 13], 1.0, 0.5);
        assert!(matches!(
            exact_mean_error(&majority_rule(13), &p, Columns::Average),
            Err(Error::TooManyWorkers { .. })
        ));
    }

    #[test]
    fn exact_full_design_columns() {
        let sampling = SamplingDesign::Full(vec![vec![1.0, 0.5], vec![1.0, 0.5], vec![1.0, 0.5]]);
        let p = OneCoinParams::new(vec![0.6; 3], 0.5, sampling).unwrap().to_dawid_skene();
        let first = exact_mean_error(&majority_rule(3), &p, Columns::Item(0)).unwrap();
        let second = exact_mean_error(&majority_rule(3), &p, Columns::Item(1)).unwrap();
        let avg = exact_mean_error(&majority_rule(3), &p, Columns::Average).unwrap();
        assert!((first - 0.352).abs() < 1e-12);
        assert!((avg - 0.5 * (first + second)).abs() < 1e-15);
        assert!(exact_mean_error(&majority_rule(3), &p, Columns::Item(2)).is_err());
    }

    #[test]
    fn perfect_workers_generate_gold() {
        let data = gen(&[1.0; 4], 1.0, 50).generate().unwrap();
        assert_eq!(data.labels.num_observations(), 200);
        for (i, j, z) in data.labels.entries() {
            assert_eq!(z, data.truth[j], "worker {i} item {j}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let g = gen(&[0.7, 0.8, 0.6], 0.5, 200);
        let a = g.generate().unwrap();
        let b = g.generate().unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.truth, b.truth);
        let c = g.with_seed(8).generate().unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn balanced_generation() {
        let mut g = gen(&[0.7; 3], 1.0, 301);
        g.balanced = true;
        let data = g.generate().unwrap();
        assert_eq!(data.truth.iter().filter(|l| l.is_pos()).count(), 151);
    }

    #[test]
    fn beta_shape() {
        assert!((beta_shape_for_mean(0.75, 2.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(beta_shape_for_mean(1.0, 2.0).is_err());
    }

    #[test]
    fn method_ids() {
        for id in ["mv", "wmv", "oswmv", "iwmv", "em-map", "oracle-map"] {
            assert_eq!(id.parse::<Method>().unwrap().id(), id);
        }
        assert!(matches!("median".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn mc_perfect_crowd_has_zero_error() {
        let est = mc_error_rate(&Method::Mv, &gen(&[1.0; 3], 1.0, 40), 10, 1).unwrap();
        assert_eq!((est.mean, est.stderr, est.reps), (0.0, 0.0, 10));
    }

    #[test]
    fn mv_and_uniform_wmv_agree_per_replication() {
        let g = gen(&[0.6, 0.7, 0.55, 0.8], 0.7, 60);
        let mv = mc_error_samples(&Method::Mv, &g, 20, 3).unwrap();
        let wmv = mc_error_samples(&Method::Wmv(Some(vec![2.5; 4])), &g, 20, 3).unwrap();
        assert_eq!(mv, wmv);
    }

    #[test]
    fn mc_requires_two_reps() {
        assert!(mc_error_rate(&Method::Mv, &gen(&[0.7], 1.0, 5), 1, 0).is_err());
    }

    #[test]
    fn params_required_for_oracle() {
        let data = gen(&[0.7, 0.8], 1.0, 10).generate().unwrap();
        assert!(aggregate(&Method::OracleMap, &data.labels, None).is_err());
        assert!(aggregate(&Method::OracleMap, &data.labels, Some(&data.params)).is_ok());
    }
}
