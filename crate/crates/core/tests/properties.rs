use proptest::prelude::*;

use crowdbound::bounds::{
    kl_bernoulli, mean_error_bounds, mv_mean_bound, phi, t_stats, t_stats_onecoin, BoundKind,
};
use crowdbound::em::{em_fit, oracle_map_predict, posterior_ds, EmOptions, FittedParams, WorkerModel};
use crowdbound::io::{read_observations, write_labels, Encoding, IdMap};
use crowdbound::model::error_rate;
use crowdbound::rules::{bound_optimal_rule, majority_rule, oracle_map_rule};
use crowdbound::{GoldLabels, HyperplaneRule, Label, LabelMatrix, OneCoinParams, Prediction, SamplingDesign};

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Pos), Just(Label::Neg)]
}

/// A label matrix with `1..=max_m` workers and `1..=max_n` items.
fn label_matrix(max_m: usize, max_n: usize) -> impl Strategy<Value = LabelMatrix> {
    (1..=max_m, 1..=max_n).prop_flat_map(|(m, n)| {
        proptest::collection::vec(proptest::option::weighted(0.7, label()), m * n).prop_map(move |cells| {
            let entries = cells
                .iter()
                .enumerate()
                .filter_map(|(k, z)| z.map(|z| (k % m, k / m, z)));
            LabelMatrix::new(m, n, entries).unwrap()
        })
    })
}

fn one_coin(m: usize) -> impl Strategy<Value = OneCoinParams> {
    (
        proptest::collection::vec(0.02f64..0.98, m),
        0.05f64..0.95,
        proptest::collection::vec(0.1f64..1.0, m),
    )
        .prop_map(|(w, pi, q)| OneCoinParams::new(w, pi, SamplingDesign::PerWorker(q)).unwrap())
}

fn matrix_and_params() -> impl Strategy<Value = (LabelMatrix, OneCoinParams)> {
    label_matrix(8, 12).prop_flat_map(|z| {
        let m = z.num_workers();
        (Just(z), one_coin(m))
    })
}

fn matrix_and_rule() -> impl Strategy<Value = (LabelMatrix, HyperplaneRule)> {
    label_matrix(8, 12).prop_flat_map(|z| {
        let m = z.num_workers();
        (
            Just(z),
            proptest::collection::vec(-3.0f64..3.0, m),
            -2.0f64..2.0,
        )
            .prop_map(|(z, v, a)| (z, HyperplaneRule::new(v, a)))
    })
}

fn off_tie(rule: &HyperplaneRule, z: &LabelMatrix, j: usize) -> bool {
    rule.score(z.item(j)).abs() > 1e-9
}

proptest! {
    #[test]
    fn error_rate_of_flip_sums_to_one(labels in proptest::collection::vec(label(), 1..40), gold in proptest::collection::vec(label(), 40)) {
        let n = labels.len();
        let pred = Prediction { labels, undetermined: vec![] };
        let gold = GoldLabels::complete(gold[..n].to_vec());
        let sum = error_rate(&pred, &gold).unwrap() + error_rate(&pred.flipped(), &gold).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_csv_round_trip(z in label_matrix(6, 10), zero_one in any::<bool>()) {
        let enc = if zero_one { Encoding::ZeroOne } else { Encoding::Signed };
        let workers = IdMap::numbered("worker-", z.num_workers());
        let items = IdMap::numbered("item-", z.num_items());
        let mut buf = Vec::new();
        write_labels(&z, &workers, &items, enc, &mut buf).unwrap();
        if z.num_observations() == 0 {
            return Ok(());
        }
        let obs = read_observations(&buf[..], "mem.csv".as_ref(), enc, IdMap::new(), IdMap::new()).unwrap();
        let mut got: Vec<(String, String, Label)> = obs
            .entries
            .iter()
            .map(|&(w, j, l)| (obs.workers.id(w).to_string(), obs.items.id(j).to_string(), l))
            .collect();
        let mut want: Vec<(String, String, Label)> = z
            .entries()
            .map(|(w, j, l)| (workers.id(w).to_string(), items.id(j).to_string(), l))
            .collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn predictions_are_scale_invariant((z, rule) in matrix_and_rule(), c in 1e-3f64..1e3) {
        let base = rule.predict(&z).unwrap();
        let scaled = rule.scaled(c).predict(&z).unwrap();
        for j in 0..z.num_items() {
            if off_tie(&rule, &z, j) {
                prop_assert_eq!(base.labels[j], scaled.labels[j]);
            }
        }
    }

    #[test]
    fn majority_is_uniform_weights(z in label_matrix(8, 12)) {
        let m = z.num_workers();
        prop_assert_eq!(
            majority_rule(m).predict(&z).unwrap(),
            HyperplaneRule::new(vec![1.0; m], 0.0).predict(&z).unwrap()
        );
    }

    #[test]
    fn negating_labels_negates_unshifted_predictions((z, rule) in matrix_and_rule()) {
        let rule = HyperplaneRule::new(rule.weights, 0.0);
        let base = rule.predict(&z).unwrap();
        let neg = rule.predict(&z.negated()).unwrap();
        for j in 0..z.num_items() {
            if off_tie(&rule, &z, j) {
                prop_assert_eq!(neg.labels[j], -base.labels[j]);
            }
        }
    }

    #[test]
    fn posterior_threshold_matches_oracle_rule((z, p) in matrix_and_params()) {
        let rule = oracle_map_rule(&p);
        let by_rule = rule.predict(&z).unwrap();
        let by_posterior = oracle_map_predict(&z, &p.to_dawid_skene()).unwrap();
        let rho = posterior_ds(&z, &p.to_dawid_skene()).unwrap().rho;
        prop_assert!(rho.iter().all(|r| (0.0..=1.0).contains(r)));
        for j in 0..z.num_items() {
            if off_tie(&rule, &z, j) {
                prop_assert_eq!(by_rule.labels[j], by_posterior.labels[j]);
            }
        }
    }

    #[test]
    fn bound_statistics_are_scale_invariant(p in one_coin(5), v in proptest::collection::vec(-2.0f64..2.0, 5), a in -1.0f64..1.0, c in 1e-3f64..1e3) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let rule = HyperplaneRule::new(v, a);
        let ds = p.to_dawid_skene();
        let base = mean_error_bounds(&rule, &ds).unwrap();
        let scaled = mean_error_bounds(&rule.scaled(c), &ds).unwrap();
        let close = |x: f64, y: f64| x == y || (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
        for (x, y) in [(base.t1, scaled.t1), (base.t2, scaled.t2), (base.c_h, scaled.c_h), (base.sigma2, scaled.sigma2)] {
            prop_assert!(close(x, y), "{x} vs {y}");
        }
        for (x, y) in [(base.combined_upper, scaled.combined_upper), (base.combined_lower, scaled.combined_lower)] {
            prop_assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn mv_bound_matches_t1(w in proptest::collection::vec(0.02f64..0.98, 1..15), q in 0.05f64..1.0) {
        let m = w.len();
        let wbar = w.iter().sum::<f64>() / m as f64;
        let p = OneCoinParams::new(w, 0.5, SamplingDesign::Constant(q)).unwrap();
        let t = t_stats_onecoin(&majority_rule(m), &p).unwrap();
        let t_ds = t_stats(&majority_rule(m), &p.to_dawid_skene()).unwrap();
        prop_assert!((t.t1 - t_ds.t1).abs() <= 1e-12 * t.t1.abs().max(1e-12));
        let bound = mv_mean_bound(m, q, wbar);
        let via_t1 = phi(t.t1);
        match bound.kind {
            BoundKind::Upper => prop_assert!((bound.value - via_t1).abs() <= 1e-12 * via_t1),
            BoundKind::Lower => prop_assert!((bound.value - (1.0 - via_t1)).abs() <= 1e-12),
            BoundKind::Vacuous => prop_assert_eq!(bound.value, 1.0),
        }
    }

    #[test]
    fn kl_dominates_pinsker(x in 0.0f64..=1.0, y in 0.001f64..0.999) {
        let d = kl_bernoulli(x, y).unwrap();
        prop_assert!(d >= 2.0 * (x - y).powi(2) - 1e-12);
    }

    #[test]
    fn em_objective_never_decreases(z in label_matrix(7, 25), ds in any::<bool>(), soft in any::<bool>()) {
        let model = if ds { WorkerModel::DawidSkene } else { WorkerModel::OneCoin };
        let opts = EmOptions { tol: 1e-12, max_iter: 200, soft_init: soft, ..EmOptions::default() };
        let fit = em_fit(&z, model, &opts).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        prop_assert!(fit.posterior.rho.iter().all(|r| (0.0..=1.0).contains(r)));
    }
}

#[test]
fn bound_optimal_weights_are_taylor_of_log_odds() {
    // the remainder is (16/3)(w - 1/2)^3 + O((w - 1/2)^5); |w - 1/2| <= 0.2 keeps it under 1.2 (w - 1/2)^2
    let c = 1.5;
    for k in 0..=40 {
        let w = 0.3 + 0.01 * k as f64;
        let map = oracle_map_rule(&OneCoinParams::new(vec![w], 0.5, SamplingDesign::Constant(1.0)).unwrap());
        let opt = bound_optimal_rule(&[w]);
        let gap = (map.weights[0] - 2.0 * opt.weights[0]).abs();
        assert!(gap <= c * (w - 0.5).powi(2), "w={w}: gap {gap}");
    }
}

#[test]
fn one_coin_fit_converts_losslessly() {
    let z = LabelMatrix::new(
        3,
        4,
        vec![
            (0, 0, Label::Pos),
            (1, 0, Label::Pos),
            (2, 0, Label::Neg),
            (0, 1, Label::Neg),
            (1, 1, Label::Neg),
            (2, 2, Label::Pos),
            (0, 3, Label::Pos),
        ],
    )
    .unwrap();
    let fit = em_fit(&z, WorkerModel::OneCoin, &EmOptions::default()).unwrap();
    let FittedParams::OneCoin(one) = &fit.params else {
        panic!("one-coin fit expected")
    };
    let ds = fit.params.to_dawid_skene();
    assert_eq!(ds.sensitivity(), ds.specificity());
    assert_eq!(ds.to_one_coin().as_ref(), Some(one));
}
