//! Sweep experiments producing CSV tables.
//!
//! * [`experiment_fig_a`]: MV, EM-MAP and oracle MAP over a sweep of mean
//!   worker accuracy, with the MAP plugin bound.
//! * [`experiment_fig_c`]: MV against one-step WMV from the one-step
//!   guarantee threshold upward.
//! * [`experiment_subsample`]: Bernoulli thinning of a real label matrix.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use super::{derive_seed, replicate, CrowdGenerator, McEstimate};
use crate::bounds::{
    estimate_params, mean_error_bounds, mv_mean_bound, oswmv_threshold, plugin_bound, BoundKind,
    Reference,
};
use crate::em::{em_map_predict, estimate_sampling, oracle_map_predict, EmOptions, FittedParams, WorkerModel};
use crate::error::{Error, Result};
use crate::model::{error_rate, GoldLabels, LabelMatrix, OneCoinParams, SamplingDesign};
use crate::rules::{majority_rule, one_step_wmv, oracle_map_rule};

/// `start, start + step, ...` up to `stop` inclusive, rounded to 10 decimals.
pub fn sweep(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::invalid(format!(
            "invalid sweep {start}..={stop} step {step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// Mean of the present values and how many there were.
fn mean_present(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        (None, 0)
    } else {
        (Some(present.iter().sum::<f64>() / present.len() as f64), present.len())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kind_name(kind: BoundKind) -> &'static str {
    match kind {
        BoundKind::Upper => "upper",
        BoundKind::Lower => "lower",
        BoundKind::Vacuous => "vacuous",
    }
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigAConfig {
    pub num_workers: usize,
    pub num_items: usize,
    pub q: f64,
    /// Second Beta shape; the first is solved from each sweep mean.
    pub beta_b: f64,
    pub wbars: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub balanced: bool,
    pub em_model: WorkerModel,
    pub em: EmOptions,
}

impl Default for FigAConfig {
    fn default() -> Self {
        FigAConfig {
            num_workers: 11,
            num_items: 300,
            q: 0.8,
            beta_b: 2.0,
            wbars: sweep(0.02, 0.98, 0.02).expect("valid sweep"),
            reps: 100,
            seed: 0,
            balanced: true,
            em_model: WorkerModel::OneCoin,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigARow {
    pub wbar: f64,
    pub err_mv: McEstimate,
    pub err_em_map: McEstimate,
    pub err_oracle_map: McEstimate,
    /// Mean MAP plugin bound over the replications where it exists.
    pub plugin_bound: Option<f64>,
    pub plugin_kind: BoundKind,
    pub plugin_reps: usize,
}

pub const FIG_A_HEADER: [&str; 10] = [
    "wbar",
    "err_mv",
    "err_mv_stderr",
    "err_em_map",
    "err_em_map_stderr",
    "err_oracle_map",
    "err_oracle_map_stderr",
    "plugin_bound",
    "plugin_kind",
    "plugin_reps",
];

/// Oracle MAP parameters estimated by EM: fitted accuracies and prior with
/// `q̂_i = n_i / N`.
pub fn em_plugin_params(fit: &FittedParams, labels: &LabelMatrix) -> Result<OneCoinParams> {
    let ds = fit.to_dawid_skene();
    let accuracy = ds
        .sensitivity()
        .iter()
        .zip(ds.specificity())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    OneCoinParams::new(accuracy, ds.prior(), estimate_sampling(labels))
}

/// Errors of MV, EM-MAP and oracle MAP plus the plugin bound, per replication.
type FigASample = (f64, f64, f64, Option<f64>);

pub fn experiment_fig_a(cfg: &FigAConfig) -> Result<Vec<FigARow>> {
    cfg.em.validate()?;
    cfg.wbars
        .iter()
        .enumerate()
        .map(|(k, &wbar)| {
            let gen = CrowdGenerator {
                balanced: cfg.balanced,
                ..CrowdGenerator::beta_one_coin(
                    cfg.num_workers,
                    cfg.num_items,
                    cfg.q,
                    wbar,
                    cfg.beta_b,
                    0,
                )?
            };
            gen.validate()?;
            // the upper/lower switch uses the true side of 1/2
            let plugin_kind = if wbar < 0.5 {
                BoundKind::Lower
            } else {
                BoundKind::Upper
            };
            let reps = replicate(cfg.reps, derive_seed(cfg.seed, k as u64), |seed, _| {
                let data = gen.with_seed(seed).generate()?;
                let mv = majority_rule(cfg.num_workers).predict(&data.labels)?;
                let (em_pred, fit) = em_map_predict(&data.labels, cfg.em_model, &cfg.em)?;
                let oracle = oracle_map_predict(&data.labels, &data.params)?;
                let report = plugin_bound(&em_plugin_params(&fit.params, &data.labels)?)?;
                let bound = match plugin_kind {
                    BoundKind::Lower => report.combined_lower,
                    _ => report.combined_upper,
                };
                Ok((
                    error_rate(&mv, &data.gold)?,
                    error_rate(&em_pred, &data.gold)?,
                    error_rate(&oracle, &data.gold)?,
                    bound,
                ))
            })?;
            let column = |f: fn(&FigASample) -> f64| {
                McEstimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
            };
            let (plugin_bound, plugin_reps) = mean_present(reps.iter().map(|r| r.3));
            Ok(FigARow {
                wbar,
                err_mv: column(|r| r.0)?,
                err_em_map: column(|r| r.1)?,
                err_oracle_map: column(|r| r.2)?,
                plugin_bound,
                plugin_kind,
                plugin_reps,
            })
        })
        .collect()
}

pub fn write_fig_a<W: Write>(rows: &[FigARow], out: W) -> Result<()> {
    write_table(
        out,
        &FIG_A_HEADER,
        rows.iter().map(|r| {
            vec![
                r.wbar.to_string(),
                r.err_mv.mean.to_string(),
                r.err_mv.stderr.to_string(),
                r.err_em_map.mean.to_string(),
                r.err_em_map.stderr.to_string(),
                r.err_oracle_map.mean.to_string(),
                r.err_oracle_map.stderr.to_string(),
                fmt_opt(r.plugin_bound),
                kind_name(r.plugin_kind).to_string(),
                r.plugin_reps.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigCConfig {
    pub num_workers: usize,
    pub num_items: usize,
    pub q: f64,
    pub beta_b: f64,
    pub wbars: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub balanced: bool,
}

impl FigCConfig {
    /// Sweep from the one-step WMV threshold for `num_workers` to `stop`.
    pub fn from_threshold(num_workers: usize, stop: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) {
            return Err(Error::invalid("sweep step must be positive"));
        }
        let start = oswmv_threshold(num_workers);
        let mut grid = vec![start];
        let mut k = 1;
        loop {
            let x = ((start + k as f64 * step) * 1e10).round() / 1e10;
            if x > stop + 1e-12 || x >= 1.0 {
                break;
            }
            grid.push(x);
            k += 1;
        }
        Ok(grid)
    }
}

impl Default for FigCConfig {
    fn default() -> Self {
        FigCConfig {
            num_workers: 15,
            num_items: 3000,
            q: 1.0,
            beta_b: 2.0,
            wbars: FigCConfig::from_threshold(15, 0.98, 0.02).expect("valid sweep"),
            reps: 100,
            seed: 0,
            balanced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigCRow {
    pub wbar: f64,
    pub err_mv: McEstimate,
    pub err_oswmv: McEstimate,
    /// Majority-vote mean error bound at this `w̄`.
    pub mv_bound: f64,
    /// Mean over replications of the mean-error upper bound of the learned
    /// one-step WMV rule under the true parameters. The learned weights depend
    /// on the data, so this is an estimate, not a guarantee.
    pub oswmv_rule_bound: Option<f64>,
    pub oswmv_rule_bound_reps: usize,
}

pub const FIG_C_HEADER: [&str; 8] = [
    "wbar",
    "err_mv",
    "err_mv_stderr",
    "err_oswmv",
    "err_oswmv_stderr",
    "mv_bound",
    "oswmv_rule_bound",
    "oswmv_rule_bound_reps",
];

pub fn experiment_fig_c(cfg: &FigCConfig) -> Result<Vec<FigCRow>> {
    cfg.wbars
        .iter()
        .enumerate()
        .map(|(k, &wbar)| {
            let gen = CrowdGenerator {
                balanced: cfg.balanced,
                ..CrowdGenerator::beta_one_coin(
                    cfg.num_workers,
                    cfg.num_items,
                    cfg.q,
                    wbar,
                    cfg.beta_b,
                    0,
                )?
            };
            gen.validate()?;
            let reps = replicate(cfg.reps, derive_seed(cfg.seed, k as u64), |seed, _| {
                let data = gen.with_seed(seed).generate()?;
                let mv = majority_rule(cfg.num_workers).predict(&data.labels)?;
                let (os, rule) = one_step_wmv(&data.labels);
                let bound = mean_error_bounds(&rule, &data.params)
                    .ok()
                    .and_then(|r| r.combined_upper);
                Ok((error_rate(&mv, &data.gold)?, error_rate(&os, &data.gold)?, bound))
            })?;
            let (oswmv_rule_bound, oswmv_rule_bound_reps) = mean_present(reps.iter().map(|r| r.2));
            Ok(FigCRow {
                wbar,
                err_mv: McEstimate::from_samples(&reps.iter().map(|r| r.0).collect::<Vec<_>>())?,
                err_oswmv: McEstimate::from_samples(&reps.iter().map(|r| r.1).collect::<Vec<_>>())?,
                mv_bound: mv_mean_bound(cfg.num_workers, cfg.q, wbar).value,
                oswmv_rule_bound,
                oswmv_rule_bound_reps,
            })
        })
        .collect()
}

pub fn write_fig_c<W: Write>(rows: &[FigCRow], out: W) -> Result<()> {
    write_table(
        out,
        &FIG_C_HEADER,
        rows.iter().map(|r| {
            vec![
                r.wbar.to_string(),
                r.err_mv.mean.to_string(),
                r.err_mv.stderr.to_string(),
                r.err_oswmv.mean.to_string(),
                r.err_oswmv.stderr.to_string(),
                r.mv_bound.to_string(),
                fmt_opt(r.oswmv_rule_bound),
                r.oswmv_rule_bound_reps.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleConfig {
    /// Keep probabilities, each in (0, 1].
    pub x_grid: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub em_model: WorkerModel,
    pub em: EmOptions,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            x_grid: sweep(0.05, 1.0, 0.05).expect("valid sweep"),
            reps: 40,
            seed: 0,
            em_model: WorkerModel::OneCoin,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleRow {
    pub x: f64,
    pub err_mv: McEstimate,
    pub err_em_map: McEstimate,
    /// Mean oracle-MAP upper bound at accuracies estimated against gold.
    pub map_plugin_upper: Option<f64>,
    pub map_plugin_reps: usize,
    /// Mean MV upper bound at the same estimates.
    pub mv_plugin_upper: Option<f64>,
    pub mv_plugin_reps: usize,
}

pub const SUBSAMPLE_HEADER: [&str; 9] = [
    "x",
    "err_mv",
    "err_mv_stderr",
    "err_em_map",
    "err_em_map_stderr",
    "map_plugin_upper",
    "map_plugin_reps",
    "mv_plugin_upper",
    "mv_plugin_reps",
];

/// Keeps each observed label independently with probability `x`.
pub fn thin(labels: &LabelMatrix, x: f64, seed: u64) -> LabelMatrix {
    if x >= 1.0 {
        return labels.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.filtered(|_, _, _| rng.random::<f64>() < x)
}

pub fn experiment_subsample(
    labels: &LabelMatrix,
    gold: &GoldLabels,
    cfg: &SubsampleConfig,
) -> Result<Vec<SubsampleRow>> {
    cfg.em.validate()?;
    if gold.num_items() != labels.num_items() {
        return Err(Error::DimensionMismatch {
            what: "gold labels",
            expected: labels.num_items(),
            actual: gold.num_items(),
        });
    }
    if let Some(&x) = cfg.x_grid.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::invalid(format!("sampling proportion {x} outside (0, 1]")));
    }
    cfg.x_grid
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let reps = replicate(cfg.reps, derive_seed(cfg.seed, k as u64), |seed, _| {
                let sub = thin(labels, x, seed);
                let mv = majority_rule(sub.num_workers()).predict(&sub)?;
                let (em_pred, _) = em_map_predict(&sub, cfg.em_model, &cfg.em)?;
                let est = estimate_params(&sub, Reference::Gold(gold), WorkerModel::OneCoin)?;
                let one_coin = est.to_one_coin().expect("one-coin estimate");
                let map_bound = mean_error_bounds(&oracle_map_rule(&one_coin), &est)
                    .ok()
                    .and_then(|r| r.combined_upper);
                let mv_bound = mean_error_bounds(&majority_rule(sub.num_workers()), &est)
                    .ok()
                    .and_then(|r| r.combined_upper);
                Ok((
                    error_rate(&mv, gold)?,
                    error_rate(&em_pred, gold)?,
                    map_bound,
                    mv_bound,
                ))
            })?;
            let (map_plugin_upper, map_plugin_reps) = mean_present(reps.iter().map(|r| r.2));
            let (mv_plugin_upper, mv_plugin_reps) = mean_present(reps.iter().map(|r| r.3));
            Ok(SubsampleRow {
                x,
                err_mv: McEstimate::from_samples(&reps.iter().map(|r| r.0).collect::<Vec<_>>())?,
                err_em_map: McEstimate::from_samples(&reps.iter().map(|r| r.1).collect::<Vec<_>>())?,
                map_plugin_upper,
                map_plugin_reps,
                mv_plugin_upper,
                mv_plugin_reps,
            })
        })
        .collect()
}

pub fn write_subsample<W: Write>(rows: &[SubsampleRow], out: W) -> Result<()> {
    write_table(
        out,
        &SUBSAMPLE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.x.to_string(),
                r.err_mv.mean.to_string(),
                r.err_mv.stderr.to_string(),
                r.err_em_map.mean.to_string(),
                r.err_em_map.stderr.to_string(),
                fmt_opt(r.map_plugin_upper),
                r.map_plugin_reps.to_string(),
                fmt_opt(r.mv_plugin_upper),
                r.mv_plugin_reps.to_string(),
            ]
        }),
    )
}

/// Mean per-worker labeling rate of the RTE annotation set.
pub const RTE_MEAN_RATE: f64 = 0.061;

/// A crowd shaped like the RTE annotation set: 164 workers, 800 items,
/// per-worker labeling rates drawn from `Beta(1, 15.4)` and rescaled to mean
/// [`RTE_MEAN_RATE`], one-coin accuracies from `Beta(a, 2)` with mean `wbar`.
pub fn rte_shaped_generator(wbar: f64, seed: u64) -> Result<CrowdGenerator> {
    const WORKERS: usize = 164;
    const ITEMS: usize = 800;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let rate = Beta::new(1.0_f64, 15.4).map_err(|e| Error::invalid(e.to_string()))?;
    let raw: Vec<f64> = (0..WORKERS).map(|_| rate.sample(&mut rng)).collect();
    let scale = RTE_MEAN_RATE * WORKERS as f64 / raw.iter().sum::<f64>();
    // at least one expected label per worker
    let q = raw
        .iter()
        .map(|r| (r * scale).clamp(1.0 / ITEMS as f64, 1.0))
        .collect();
    Ok(CrowdGenerator {
        sampling: SamplingDesign::PerWorker(q),
        balanced: true,
        ..CrowdGenerator::beta_one_coin(WORKERS, ITEMS, 1.0, wbar, 2.0, seed)?
    })
}
