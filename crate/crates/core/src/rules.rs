//! Hyperplane labeling rules and weighted majority voting.
//!
//! A hyperplane rule labels item `j` as `sign(Σ_i v_i z_ij + a)`. A score of
//! exactly zero maps to `+1`. Items with no observations score `a`, so a rule
//! whose shift is the prior log-odds falls back to the prior's majority class.

use crate::error::{Error, Result};
use crate::model::{log_odds, Label, LabelMatrix, OneCoinParams, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneRule {
    pub weights: Vec<f64>,
    pub shift: f64,
}

impl HyperplaneRule {
    pub fn new(weights: Vec<f64>, shift: f64) -> Self {
        HyperplaneRule { weights, shift }
    }

    pub fn num_workers(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖v‖₂`, or an error when the weights are all zero.
    pub fn checked_norm(&self) -> Result<f64> {
        let norm = self.norm();
        if norm > 0.0 && norm.is_finite() {
            Ok(norm)
        } else {
            Err(Error::ZeroNormWeights)
        }
    }

    pub fn scaled(&self, c: f64) -> HyperplaneRule {
        HyperplaneRule {
            weights: self.weights.iter().map(|v| v * c).collect(),
            shift: self.shift * c,
        }
    }

    /// Score of one item; observations are summed in worker order.
    pub fn score(&self, observations: &[(usize, Label)]) -> f64 {
        observations
            .iter()
            .fold(0.0, |acc, &(i, z)| acc + self.weights[i] * z.as_f64())
            + self.shift
    }

    pub fn predict(&self, labels: &LabelMatrix) -> Result<Prediction> {
        if self.weights.len() != labels.num_workers() {
            return Err(Error::DimensionMismatch {
                what: "rule weights",
                expected: labels.num_workers(),
                actual: self.weights.len(),
            });
        }
        let mut undetermined = Vec::new();
        let labels = (0..labels.num_items())
            .map(|j| {
                let obs = labels.item(j);
                if obs.is_empty() {
                    undetermined.push(j);
                }
                Label::from_score(self.score(obs))
            })
            .collect();
        Ok(Prediction {
            labels,
            undetermined,
        })
    }
}

pub fn majority_rule(num_workers: usize) -> HyperplaneRule {
    HyperplaneRule::new(vec![1.0; num_workers], 0.0)
}

/// Bayes rule for known one-coin parameters: log-odds weights and prior
/// log-odds shift.
pub fn oracle_map_rule(params: &OneCoinParams) -> HyperplaneRule {
    HyperplaneRule::new(
        params.accuracy().iter().map(|&w| log_odds(w)).collect(),
        log_odds(params.prior()),
    )
}

/// Weights `2w - 1` with zero shift; maximizes `t₁'` under constant sampling.
pub fn bound_optimal_rule(accuracies: &[f64]) -> HyperplaneRule {
    HyperplaneRule::new(accuracies.iter().map(|&w| 2.0 * w - 1.0).collect(), 0.0)
}

/// Per-worker agreement rate with a reference labeling. Workers without
/// observations get 0.5.
pub fn estimate_accuracies(labels: &LabelMatrix, reference: &[Label]) -> Vec<f64> {
    (0..labels.num_workers())
        .map(|i| {
            let row = labels.worker(i);
            if row.is_empty() {
                return 0.5;
            }
            let agree = row.iter().filter(|&&(j, z)| reference[j] == z).count();
            agree as f64 / row.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmvOutcome {
    pub prediction: Prediction,
    pub rule: HyperplaneRule,
    /// Number of reweighting passes run.
    pub iterations: usize,
    /// Whether the last pass reproduced its input labels.
    pub converged: bool,
}

fn reweight(labels: &LabelMatrix, reference: &[Label]) -> (Prediction, HyperplaneRule) {
    let accuracies = estimate_accuracies(labels, reference);
    let rule = bound_optimal_rule(&accuracies);
    let prediction = rule
        .predict(labels)
        .expect("rule built from the matrix has matching dimensions");
    (prediction, rule)
}

/// Majority vote, then one weighted vote with weights `2ŵ - 1` estimated
/// against the majority labels.
pub fn one_step_wmv(labels: &LabelMatrix) -> (Prediction, HyperplaneRule) {
    let outcome = iterative_wmv(labels, 1);
    (outcome.prediction, outcome.rule)
}

/// Repeats the reweighting step until the labels stop changing or
/// `max_iter` passes have run.
pub fn iterative_wmv(labels: &LabelMatrix, max_iter: usize) -> WmvOutcome {
    let mut current = majority_rule(labels.num_workers())
        .predict(labels)
        .expect("majority rule matches the matrix")
        .labels;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (prediction, rule) = reweight(labels, &current);
        let converged = prediction.labels == current;
        if converged || iterations >= max_iter.max(1) {
            return WmvOutcome {
                prediction,
                rule,
                iterations,
                converged,
            };
        }
        current = prediction.labels;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingDesign;

    fn l(x: i64) -> Label {
        Label::from_sign(x).unwrap()
    }

    fn single_item(z: &[i64]) -> LabelMatrix {
        LabelMatrix::new(z.len(), 1, z.iter().enumerate().map(|(i, &x)| (i, 0, l(x)))).unwrap()
    }

    #[test]
    fn predict_majority_and_tie() {
        let mv = majority_rule(3);
        assert_eq!(mv.predict(&single_item(&[1, 1, -1])).unwrap().labels, vec![Label::Pos]);
        let mv2 = majority_rule(2);
        assert_eq!(mv2.predict(&single_item(&[1, -1])).unwrap().labels, vec![Label::Pos]);
    }

    #[test]
    fn predict_weighted_with_shift() {
        let rule = HyperplaneRule::new(vec![3.0, 1.0], -2.5);
        let z = single_item(&[1, 1]);
        assert_eq!(rule.score(z.item(0)), 1.5);
        assert_eq!(rule.predict(&z).unwrap().labels, vec![Label::Pos]);
        let z = single_item(&[-1, 1]);
        assert_eq!(rule.score(z.item(0)), -4.5);
        assert_eq!(rule.predict(&z).unwrap().labels, vec![Label::Neg]);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let rule = majority_rule(4);
        assert!(matches!(
            rule.predict(&single_item(&[1, 1])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_items_follow_shift_sign() {
        let z = LabelMatrix::new(1, 3, vec![(0, 1, Label::Neg)]).unwrap();
        let p = majority_rule(1).predict(&z).unwrap();
        assert_eq!(p.labels, vec![Label::Pos, Label::Neg, Label::Pos]);
        assert_eq!(p.undetermined, vec![0, 2]);
        let neg_prior = HyperplaneRule::new(vec![1.0], -0.4);
        assert_eq!(neg_prior.predict(&z).unwrap().labels[0], Label::Neg);
    }

    #[test]
    fn majority_rule_shape() {
        assert_eq!(majority_rule(1), HyperplaneRule::new(vec![1.0], 0.0));
        assert_eq!(majority_rule(5).weights, vec![1.0; 5]);
        assert_eq!(majority_rule(5).shift, 0.0);
    }

    #[test]
    fn oracle_map_weights() {
        let p = OneCoinParams::new(vec![0.8], 0.5, SamplingDesign::Constant(1.0)).unwrap();
        let rule = oracle_map_rule(&p);
        assert!((rule.weights[0] - 4f64.ln()).abs() < 1e-12);
        assert!((rule.weights[0] - 1.3863).abs() < 1e-4);
        assert_eq!(rule.shift, 0.0);
        let p = OneCoinParams::new(vec![0.5, 0.9], 0.5, SamplingDesign::Constant(1.0)).unwrap();
        assert_eq!(oracle_map_rule(&p).weights[0], 0.0);
        let p = OneCoinParams::new(vec![1.0, 0.0], 0.3, SamplingDesign::Constant(1.0)).unwrap();
        let rule = oracle_map_rule(&p);
        assert!(rule.weights.iter().all(|v| v.is_finite()));
        assert!((rule.shift - (0.3f64 / 0.7).ln()).abs() < 1e-12);
    }

    #[test]
    fn bound_optimal_weights() {
        let rule = bound_optimal_rule(&[0.9, 0.6, 0.5, 0.2]);
        let expected = [0.8, 0.2, 0.0, -0.6];
        for (v, e) in rule.weights.iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
        assert_eq!(rule.shift, 0.0);
    }

    #[test]
    fn accuracy_estimates() {
        // worker 0 agrees on 8 of 10, worker 1 has no labels, worker 2 copies the reference
        let reference: Vec<Label> = (0..10).map(|j| if j % 3 == 0 { Label::Neg } else { Label::Pos }).collect();
        let mut entries = Vec::new();
        for (j, &y) in reference.iter().enumerate() {
            entries.push((0, j, if j < 2 { -y } else { y }));
            entries.push((2, j, y));
        }
        let z = LabelMatrix::new(3, 10, entries).unwrap();
        assert_eq!(estimate_accuracies(&z, &reference), vec![0.8, 0.5, 1.0]);
    }

    #[test]
    fn single_worker_wmv_copies_worker() {
        let z = LabelMatrix::new(1, 4, (0..4).map(|j| (0, j, if j % 2 == 0 { Label::Pos } else { Label::Neg })))
            .unwrap();
        let (p, rule) = one_step_wmv(&z);
        assert_eq!(rule.weights, vec![1.0]);
        assert_eq!(p.labels, vec![Label::Pos, Label::Neg, Label::Pos, Label::Neg]);
    }

    #[test]
    fn unanimous_wmv_equals_mv() {
        let z = LabelMatrix::new(
            3,
            5,
            (0..3).flat_map(|i| (0..5).map(move |j| (i, j, if j < 2 { Label::Neg } else { Label::Pos }))),
        )
        .unwrap();
        let mv = majority_rule(3).predict(&z).unwrap();
        let (p, rule) = one_step_wmv(&z);
        assert_eq!(p, mv);
        assert_eq!(rule.weights, vec![1.0; 3]);
        let it = iterative_wmv(&z, 50);
        assert_eq!(it.iterations, 1);
        assert!(it.converged);
    }

    /// Worker 0 is always right, worker 1 errs on items 0-2 and worker 2 is
    /// always wrong. MV is wrong on items 0-2 and right elsewhere, so against
    /// MV: ŵ = (0.7, 1.0, 0.3) and v = (0.4, 1.0, -0.4).
    #[test]
    fn adversarial_worker_gets_negative_weight() {
        let truth: Vec<Label> = (0..10).map(|j| if j % 2 == 0 { Label::Pos } else { Label::Neg }).collect();
        let mut entries = Vec::new();
        for (j, &y) in truth.iter().enumerate() {
            entries.push((0, j, y));
            entries.push((1, j, if j < 3 { -y } else { y }));
            entries.push((2, j, -y));
        }
        let z = LabelMatrix::new(3, 10, entries).unwrap();
        let mv = majority_rule(3).predict(&z).unwrap();
        // items 0-2: (y, -y, -y) -> MV wrong; items 3-9: (y, y, -y) -> MV right
        for (j, (l, y)) in mv.labels.iter().zip(&truth).enumerate() {
            assert_eq!(l == y, j >= 3);
        }
        let (p, rule) = one_step_wmv(&z);
        // against MV: worker 0 agrees on 7, worker 1 on 10, worker 2 on 3
        let expected = [2.0 * 0.7 - 1.0, 1.0, 2.0 * 0.3 - 1.0];
        for (v, e) in rule.weights.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(rule.weights[2] < 0.0);
        // items 3-9 score 1.8y, items 0-2 score -0.2y
        for (j, (l, y)) in p.labels.iter().zip(&truth).enumerate() {
            assert_eq!(l == y, j >= 3);
        }
    }

    #[test]
    fn iterative_with_one_pass_is_one_step() {
        let z = LabelMatrix::new(
            3,
            4,
            vec![
                (0, 0, Label::Pos),
                (1, 0, Label::Neg),
                (2, 0, Label::Pos),
                (0, 1, Label::Neg),
                (1, 1, Label::Neg),
                (2, 2, Label::Pos),
                (1, 3, Label::Neg),
                (2, 3, Label::Pos),
            ],
        )
        .unwrap();
        let (p, rule) = one_step_wmv(&z);
        let it = iterative_wmv(&z, 1);
        assert_eq!(it.prediction, p);
        assert_eq!(it.rule, rule);
        assert_eq!(it.iterations, 1);
    }
}
