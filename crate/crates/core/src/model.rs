//! Label matrices, worker-quality parameters and error rates.
//!
//! A [`LabelMatrix`] stores the observed labels `z_ij ∈ {-1, +1}`; an absent
//! entry is an unobserved pair (`z_ij = 0`). Entries are indexed both by item
//! and by worker so that aggregation rules (column sweeps) and accuracy
//! estimates (row sweeps) are linear in the number of observations.

use std::fmt;
use std::ops::Neg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before any log-odds is taken.
pub const PROB_FLOOR: f64 = 1e-6;
/// Upper clamp applied to probabilities before any log-odds is taken.
pub const PROB_CEIL: f64 = 1.0 - 1e-6;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, PROB_CEIL)
}

/// `ln(p / (1 - p))` of the clamped probability.
pub fn log_odds(p: f64) -> f64 {
    let p = clamp_probability(p);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_sign(value: i64) -> Option<Label> {
        match value {
            1 => Some(Label::Pos),
            -1 => Some(Label::Neg),
            _ => None,
        }
    }

    /// `+1` for any non-negative score, `-1` otherwise.
    pub fn from_score(score: f64) -> Label {
        if score < 0.0 {
            Label::Neg
        } else {
            Label::Pos
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_i8())
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }
}

impl Neg for Label {
    type Output = Label;

    fn neg(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// Sparse `M x N` matrix of observed binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    num_workers: usize,
    num_items: usize,
    // item-major: item_ptr[j]..item_ptr[j + 1] indexes by_item, sorted by worker
    item_ptr: Vec<usize>,
    by_item: Vec<(usize, Label)>,
    // worker-major: sorted by item
    worker_ptr: Vec<usize>,
    by_worker: Vec<(usize, Label)>,
}

impl LabelMatrix {
    pub fn new<I>(num_workers: usize, num_items: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Label)>,
    {
        let mut triples: Vec<(usize, usize, Label)> = Vec::new();
        for (worker, item, label) in entries {
            if worker >= num_workers || item >= num_items {
                return Err(Error::IndexOutOfRange {
                    worker,
                    item,
                    num_workers,
                    num_items,
                });
            }
            triples.push((worker, item, label));
        }
        triples.sort_unstable_by_key(|&(w, i, _)| (i, w));
        if let Some(pair) = triples
            .windows(2)
            .find(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1)
        {
            return Err(Error::DuplicateEntry {
                worker: pair[0].0,
                item: pair[0].1,
            });
        }
        Ok(Self::from_sorted(num_workers, num_items, &triples))
    }

    fn from_sorted(num_workers: usize, num_items: usize, triples: &[(usize, usize, Label)]) -> Self {
        let mut item_ptr = vec![0usize; num_items + 1];
        let mut worker_ptr = vec![0usize; num_workers + 1];
        for &(w, i, _) in triples {
            item_ptr[i + 1] += 1;
            worker_ptr[w + 1] += 1;
        }
        for k in 0..num_items {
            item_ptr[k + 1] += item_ptr[k];
        }
        for k in 0..num_workers {
            worker_ptr[k + 1] += worker_ptr[k];
        }
        let by_item = triples.iter().map(|&(w, _, l)| (w, l)).collect();
        // triples are item-major, so each worker row fills in increasing item order
        let mut cursor = worker_ptr.clone();
        let mut by_worker = vec![(0usize, Label::Pos); triples.len()];
        for &(w, i, l) in triples {
            by_worker[cursor[w]] = (i, l);
            cursor[w] += 1;
        }
        LabelMatrix {
            num_workers,
            num_items,
            item_ptr,
            by_item,
            worker_ptr,
            by_worker,
        }
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_observations(&self) -> usize {
        self.by_item.len()
    }

    /// Observations of item `j` as `(worker, label)`, sorted by worker.
    pub fn item(&self, j: usize) -> &[(usize, Label)] {
        &self.by_item[self.item_ptr[j]..self.item_ptr[j + 1]]
    }

    /// Observations of worker `i` as `(item, label)`, sorted by item.
    pub fn worker(&self, i: usize) -> &[(usize, Label)] {
        &self.by_worker[self.worker_ptr[i]..self.worker_ptr[i + 1]]
    }

    pub fn get(&self, worker: usize, item: usize) -> Option<Label> {
        let col = self.item(item);
        col.binary_search_by_key(&worker, |&(w, _)| w)
            .ok()
            .map(|k| col[k].1)
    }

    /// All observations as `(worker, item, label)`, item-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Label)> + '_ {
        (0..self.num_items).flat_map(move |j| self.item(j).iter().map(move |&(w, l)| (w, j, l)))
    }

    /// Keeps only the observations for which `keep` returns true.
    pub fn filtered<F>(&self, mut keep: F) -> LabelMatrix
    where
        F: FnMut(usize, usize, Label) -> bool,
    {
        let triples: Vec<_> = self.entries().filter(|&(w, i, l)| keep(w, i, l)).collect();
        Self::from_sorted(self.num_workers, self.num_items, &triples)
    }

    /// Every observed label negated.
    pub fn negated(&self) -> LabelMatrix {
        let triples: Vec<_> = self.entries().map(|(w, i, l)| (w, i, -l)).collect();
        Self::from_sorted(self.num_workers, self.num_items, &triples)
    }
}

/// Probability that worker `i` labels item `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplingDesign {
    Constant(f64),
    PerWorker(Vec<f64>),
    /// Row `i` holds worker `i`'s probabilities over all items.
    Full(Vec<Vec<f64>>),
}

impl SamplingDesign {
    pub fn validate(&self, num_workers: usize) -> Result<()> {
        let check = |q: f64| {
            if q > 0.0 && q <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidProbability {
                    what: "sampling probability",
                    value: q,
                    range: "(0, 1]",
                })
            }
        };
        match self {
            SamplingDesign::Constant(q) => check(*q),
            SamplingDesign::PerWorker(qs) => {
                expect_len("per-worker sampling vector", num_workers, qs.len())?;
                qs.iter().try_for_each(|&q| check(q))
            }
            SamplingDesign::Full(rows) => {
                expect_len("sampling matrix rows", num_workers, rows.len())?;
                let n = rows.first().map_or(0, Vec::len);
                if n == 0 {
                    return Err(Error::invalid("sampling matrix has no columns"));
                }
                for row in rows {
                    expect_len("sampling matrix row", n, row.len())?;
                    row.iter().try_for_each(|&q| check(q))?;
                }
                Ok(())
            }
        }
    }

    pub fn prob(&self, worker: usize, item: usize) -> f64 {
        match self {
            SamplingDesign::Constant(q) => *q,
            SamplingDesign::PerWorker(qs) => qs[worker],
            SamplingDesign::Full(rows) => rows[worker][item],
        }
    }

    /// Number of items the design fixes, if it is item-specific.
    pub fn num_items(&self) -> Option<usize> {
        match self {
            SamplingDesign::Full(rows) => rows.first().map(Vec::len),
            _ => None,
        }
    }

    /// The distinct sampling columns: one for item-independent designs,
    /// one per item for a full matrix.
    pub fn columns(&self, num_workers: usize) -> Vec<Vec<f64>> {
        match self {
            SamplingDesign::Constant(q) => vec![vec![*q; num_workers]],
            SamplingDesign::PerWorker(qs) => vec![qs.clone()],
            SamplingDesign::Full(rows) => {
                let n = rows.first().map_or(0, Vec::len);
                (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
            }
        }
    }
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

fn check_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability {
            what,
            value,
            range: "[0, 1]",
        })
    }
}

/// Two-coin worker model: per-worker sensitivity `p⁺` and specificity `p⁻`.
///
/// Values are stored as given; every log-odds computation goes through
/// [`clamp_probability`].
#[derive(Debug, Clone, PartialEq)]
pub struct DawidSkeneParams {
    sensitivity: Vec<f64>,
    specificity: Vec<f64>,
    prior: f64,
    sampling: SamplingDesign,
}

impl DawidSkeneParams {
    pub fn new(
        sensitivity: Vec<f64>,
        specificity: Vec<f64>,
        prior: f64,
        sampling: SamplingDesign,
    ) -> Result<Self> {
        expect_len("specificity", sensitivity.len(), specificity.len())?;
        if sensitivity.is_empty() {
            return Err(Error::invalid("at least one worker is required"));
        }
        for &p in sensitivity.iter() {
            check_unit("sensitivity", p)?;
        }
        for &p in specificity.iter() {
            check_unit("specificity", p)?;
        }
        check_unit("prior", prior)?;
        sampling.validate(sensitivity.len())?;
        Ok(DawidSkeneParams {
            sensitivity,
            specificity,
            prior,
            sampling,
        })
    }

    pub fn num_workers(&self) -> usize {
        self.sensitivity.len()
    }

    pub fn sensitivity(&self) -> &[f64] {
        &self.sensitivity
    }

    pub fn specificity(&self) -> &[f64] {
        &self.specificity
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn sampling(&self) -> &SamplingDesign {
        &self.sampling
    }

    /// Copy with every probability clamped into `[PROB_FLOOR, PROB_CEIL]`.
    pub fn clamped(&self) -> DawidSkeneParams {
        DawidSkeneParams {
            sensitivity: self.sensitivity.iter().copied().map(clamp_probability).collect(),
            specificity: self.specificity.iter().copied().map(clamp_probability).collect(),
            prior: clamp_probability(self.prior),
            sampling: self.sampling.clone(),
        }
    }

    /// The one-coin view, when every worker has `p⁺ = p⁻`.
    pub fn to_one_coin(&self) -> Option<OneCoinParams> {
        if self.sensitivity != self.specificity {
            return None;
        }
        Some(OneCoinParams {
            accuracy: self.sensitivity.clone(),
            prior: self.prior,
            sampling: self.sampling.clone(),
        })
    }
}

/// One-coin worker model: worker `i` is right with probability `w_i` on
/// either class.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCoinParams {
    accuracy: Vec<f64>,
    prior: f64,
    sampling: SamplingDesign,
}

impl OneCoinParams {
    pub fn new(accuracy: Vec<f64>, prior: f64, sampling: SamplingDesign) -> Result<Self> {
        if accuracy.is_empty() {
            return Err(Error::invalid("at least one worker is required"));
        }
        for &w in accuracy.iter() {
            check_unit("accuracy", w)?;
        }
        check_unit("prior", prior)?;
        sampling.validate(accuracy.len())?;
        Ok(OneCoinParams {
            accuracy,
            prior,
            sampling,
        })
    }

    pub fn num_workers(&self) -> usize {
        self.accuracy.len()
    }

    pub fn accuracy(&self) -> &[f64] {
        &self.accuracy
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn sampling(&self) -> &SamplingDesign {
        &self.sampling
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len() as f64
    }

    pub fn to_dawid_skene(&self) -> DawidSkeneParams {
        DawidSkeneParams {
            sensitivity: self.accuracy.clone(),
            specificity: self.accuracy.clone(),
            prior: self.prior,
            sampling: self.sampling.clone(),
        }
    }
}

impl From<&OneCoinParams> for DawidSkeneParams {
    fn from(p: &OneCoinParams) -> Self {
        p.to_dawid_skene()
    }
}

/// Known true labels for a subset of the items.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldLabels {
    labels: Vec<Option<Label>>,
}

impl GoldLabels {
    pub fn new<I>(num_items: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Label)>,
    {
        let mut labels = vec![None; num_items];
        for (item, label) in pairs {
            if item >= num_items {
                return Err(Error::invalid(format!(
                    "gold item index {item} outside [0, {num_items})"
                )));
            }
            labels[item] = Some(label);
        }
        Ok(GoldLabels { labels })
    }

    /// Gold labels for every item.
    pub fn complete(labels: Vec<Label>) -> Self {
        GoldLabels {
            labels: labels.into_iter().map(Some).collect(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, item: usize) -> Option<Label> {
        self.labels.get(item).copied().flatten()
    }

    pub fn num_labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// `(item, label)` for every labeled item.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(j, l)| l.map(|l| (j, l)))
    }

    pub fn as_slice(&self) -> &[Option<Label>] {
        &self.labels
    }
}

/// Predicted labels for all items.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<Label>,
    /// Items without any observed label, sorted ascending.
    pub undetermined: Vec<usize>,
}

impl Prediction {
    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn flipped(&self) -> Prediction {
        Prediction {
            labels: self.labels.iter().map(|&l| -l).collect(),
            undetermined: self.undetermined.clone(),
        }
    }
}

/// Fraction of gold-labeled items whose prediction differs from gold.
pub fn error_rate(pred: &Prediction, gold: &GoldLabels) -> Result<f64> {
    expect_len("prediction", gold.num_items(), pred.labels.len())?;
    let mut total = 0usize;
    let mut wrong = 0usize;
    for (j, y) in gold.iter() {
        total += 1;
        if pred.labels[j] != y {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyGold);
    }
    Ok(wrong as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[i64]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_sign(x).unwrap()).collect()
    }

    fn pred(v: &[i64]) -> Prediction {
        Prediction {
            labels: labels(v),
            undetermined: vec![],
        }
    }

    #[test]
    fn error_rate_perfect_and_inverted() {
        let y = [1, -1, 1, 1, -1, -1, 1, -1, 1, 1];
        let gold = GoldLabels::complete(labels(&y));
        let p = pred(&y);
        assert_eq!(error_rate(&p, &gold).unwrap(), 0.0);
        assert_eq!(error_rate(&p.flipped(), &gold).unwrap(), 1.0);
    }

    #[test]
    fn error_rate_partial_gold() {
        let gold = GoldLabels::new(
            6,
            vec![(0, Label::Pos), (2, Label::Neg), (3, Label::Pos), (5, Label::Neg)],
        )
        .unwrap();
        // items 1 and 4 are not in gold and must be ignored
        let p = pred(&[1, -1, -1, -1, 1, -1]);
        assert_eq!(error_rate(&p, &gold).unwrap(), 0.25);
    }

    #[test]
    fn error_rate_empty_gold() {
        let gold = GoldLabels::new(3, vec![]).unwrap();
        assert!(matches!(
            error_rate(&pred(&[1, 1, 1]), &gold),
            Err(Error::EmptyGold)
        ));
    }

    #[test]
    fn one_coin_conversion() {
        let p = OneCoinParams::new(vec![0.8, 0.6], 0.3, SamplingDesign::Constant(1.0)).unwrap();
        let ds = p.to_dawid_skene();
        assert_eq!(ds.sensitivity(), &[0.8, 0.6]);
        assert_eq!(ds.specificity(), &[0.8, 0.6]);
        assert_eq!(ds.prior(), 0.3);
        assert_eq!(ds.to_one_coin().unwrap(), p);
        let asym =
            DawidSkeneParams::new(vec![0.8], vec![0.7], 0.5, SamplingDesign::Constant(1.0)).unwrap();
        assert!(asym.to_one_coin().is_none());
    }

    #[test]
    fn matrix_rejects_duplicates_and_out_of_range() {
        let dup = LabelMatrix::new(2, 2, vec![(0, 1, Label::Pos), (0, 1, Label::Neg)]);
        assert!(matches!(dup, Err(Error::DuplicateEntry { worker: 0, item: 1 })));
        let oob = LabelMatrix::new(2, 2, vec![(2, 0, Label::Pos)]);
        assert!(matches!(oob, Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn matrix_views_agree() {
        let z = LabelMatrix::new(
            3,
            4,
            vec![
                (2, 0, Label::Pos),
                (0, 0, Label::Neg),
                (1, 3, Label::Pos),
                (0, 2, Label::Pos),
            ],
        )
        .unwrap();
        assert_eq!(z.num_observations(), 4);
        assert_eq!(z.item(0), &[(0, Label::Neg), (2, Label::Pos)]);
        assert!(z.item(1).is_empty());
        assert_eq!(z.worker(0), &[(0, Label::Neg), (2, Label::Pos)]);
        assert_eq!(z.get(1, 3), Some(Label::Pos));
        assert_eq!(z.get(1, 2), None);
        assert_eq!(z.negated().get(0, 0), Some(Label::Pos));
        let only_pos = z.filtered(|_, _, l| l.is_pos());
        assert_eq!(only_pos.num_observations(), 3);
    }

    #[test]
    fn sampling_validation() {
        assert!(SamplingDesign::Constant(0.0).validate(3).is_err());
        assert!(SamplingDesign::Constant(1.0).validate(3).is_ok());
        assert!(SamplingDesign::PerWorker(vec![0.5, 0.5]).validate(3).is_err());
        let full = SamplingDesign::Full(vec![vec![0.5, 1.0], vec![0.2, 0.3]]);
        assert!(full.validate(2).is_ok());
        assert_eq!(full.columns(2), vec![vec![0.5, 0.2], vec![1.0, 0.3]]);
        assert_eq!(full.num_items(), Some(2));
    }

    #[test]
    fn clamping_bounds_log_odds() {
        assert!(log_odds(1.0).is_finite());
        assert!(log_odds(0.0).is_finite());
        assert_eq!(log_odds(0.5), 0.0);
    }
}
