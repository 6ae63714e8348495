use crowdbound::em::{em_map_predict, oracle_map_predict, EmOptions, WorkerModel};
use crowdbound::model::error_rate;
use crowdbound::montecarlo::experiments::{experiment_fig_a, write_fig_a, FigAConfig};
use crowdbound::montecarlo::{
    derive_seed, exact_mean_error, mc_error_rate, replicate, AccuracySource, Columns,
    CrowdGenerator, Method,
};
use crowdbound::rules::{majority_rule, oracle_map_rule};
use crowdbound::{Label, OneCoinParams, SamplingDesign};

fn generator(acc: &[f64], q: f64, prior: f64, num_items: usize) -> CrowdGenerator {
    CrowdGenerator {
        model: WorkerModel::OneCoin,
        num_workers: acc.len(),
        num_items,
        prior,
        accuracy: AccuracySource::Explicit(acc.to_vec()),
        sampling: SamplingDesign::Constant(q),
        balanced: false,
        seed: 0,
    }
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let grids: [&[f64]; 3] = [&[0.7], &[0.8, 0.6, 0.55], &[0.9, 0.65, 0.6, 0.4, 0.7]];
    let mut k = 0u64;
    for acc in grids {
        for q in [0.6, 1.0] {
            let one = OneCoinParams::new(acc.to_vec(), 0.4, SamplingDesign::Constant(q)).unwrap();
            let gen = generator(acc, q, 0.4, 10);
            for (method, rule) in [
                (Method::Mv, majority_rule(acc.len())),
                (Method::OracleMap, oracle_map_rule(&one)),
            ] {
                k += 1;
                let exact = exact_mean_error(&rule, &one.to_dawid_skene(), Columns::Average).unwrap();
                let est = mc_error_rate(&method, &gen, 10_000, derive_seed(0, k)).unwrap();
                assert!(
                    (est.mean - exact).abs() <= 3.0 * est.stderr,
                    "{} M={} q={q}: mc {} ± {} vs exact {exact}",
                    method.id(),
                    acc.len(),
                    est.mean,
                    est.stderr
                );
            }
        }
    }
}

#[test]
fn generator_marginals_match_accuracies() {
    let acc = [0.9, 0.75, 0.6, 0.3];
    let data = generator(&acc, 0.7, 0.5, 10_000).with_seed(5).generate().unwrap();
    for (i, &w) in acc.iter().enumerate() {
        let labels = data.labels.worker(i);
        let n = labels.len() as f64;
        let correct = labels.iter().filter(|&&(j, z)| z == data.truth[j]).count() as f64;
        let stderr = (w * (1.0 - w) / n).sqrt();
        assert!((correct / n - w).abs() <= 3.0 * stderr, "worker {i}: {} vs {w}", correct / n);
        let rate = n / 10_000.0;
        assert!((rate - 0.7).abs() <= 3.0 * (0.21f64 / 10_000.0).sqrt(), "worker {i} rate {rate}");
    }
}

#[test]
fn sweep_tables_ignore_thread_count() {
    let cfg = FigAConfig {
        num_workers: 5,
        num_items: 60,
        wbars: vec![0.3, 0.7],
        reps: 6,
        seed: 31,
        ..FigAConfig::default()
    };
    let table = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rows = experiment_fig_a(&cfg).unwrap();
            let mut buf = Vec::new();
            write_fig_a(&rows, &mut buf).unwrap();
            buf
        })
    };
    let single = table(1);
    assert_eq!(single, table(4));
    assert_eq!(String::from_utf8(single).unwrap().lines().count(), 3);
}

#[test]
fn em_takes_the_flipped_mode_below_one_half() {
    let gen = CrowdGenerator::beta_one_coin(11, 300, 0.8, 0.2, 2.0, 0).unwrap();
    let sums = replicate(20, 88, |seed, _| {
        let data = gen.with_seed(seed).generate()?;
        let (em, _) = em_map_predict(&data.labels, WorkerModel::OneCoin, &EmOptions::default())?;
        let oracle = oracle_map_predict(&data.labels, &data.params)?;
        Ok(error_rate(&em, &data.gold)? + error_rate(&oracle, &data.gold)?)
    })
    .unwrap();
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean of err(EM) + err(oracle) = {mean}");
}

#[test]
fn mv_and_uniform_wmv_replicate_identically() {
    let gen = CrowdGenerator::beta_one_coin(7, 50, 0.8, 0.7, 2.0, 0).unwrap();
    let mv = crowdbound::montecarlo::mc_error_samples(&Method::Mv, &gen, 20, 3).unwrap();
    let wmv = crowdbound::montecarlo::mc_error_samples(&Method::Wmv(Some(vec![1.0; 7])), &gen, 20, 3).unwrap();
    assert_eq!(mv, wmv);
    assert!(gen.with_seed(1).generate().unwrap().truth.iter().filter(|y| **y == Label::Pos).count() == 25);
}
