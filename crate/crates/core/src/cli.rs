//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{mean_error_bounds, plugin_bound, plugin_report, BoundReport, Reference};
use crate::em::{em_fit, EmOptions, WorkerModel};
use crate::error::{Error, Result};
use crate::io::{self, Encoding, IdMap, ParamsFile};
use crate::model::{error_rate, SamplingDesign};
use crate::montecarlo::experiments::{
    em_plugin_params, experiment_fig_a, experiment_fig_c, experiment_subsample, sweep,
    write_fig_a, write_fig_c, write_subsample, FigAConfig, FigCConfig, SubsampleConfig,
};
use crate::montecarlo::{aggregate, bound_optimal_from_params, beta_shape_for_mean, AccuracySource, CrowdGenerator, Method};
use crate::rules::{majority_rule, oracle_map_rule};

#[derive(Debug, Parser)]
#[command(name = "crowdbound", version, about = "Crowdsourced binary label aggregation with error-rate bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate a label CSV into item predictions.
    Aggregate(AggregateArgs),
    /// Mean error-rate bounds from known or estimated worker parameters.
    Bound(BoundArgs),
    /// Generate a synthetic crowd with its truth and parameters.
    Simulate(SimulateArgs),
    /// Run an experiment sweep and write its CSV table.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    OneCoin,
    DawidSkene,
}

impl From<ModelArg> for WorkerModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::OneCoin => WorkerModel::OneCoin,
            ModelArg::DawidSkene => WorkerModel::DawidSkene,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    /// Worker model fitted by EM.
    #[arg(long, value_enum, default_value = "one-coin")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 500)]
    pub em_max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub em_tol: f64,
    /// Keep the class prior fixed (at 0.5 unless a value is given).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.5", value_name = "PI")]
    pub fix_prior: Option<f64>,
}

impl EmArgs {
    pub fn options(&self) -> EmOptions {
        EmOptions {
            max_iter: self.em_max_iter,
            tol: self.em_tol,
            estimate_prior: self.fix_prior.is_none(),
            fixed_prior: self.fix_prior.unwrap_or(0.5),
            ..EmOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// mv, wmv, oswmv, iwmv, em-map or oracle-map.
    #[arg(long, default_value = "mv")]
    pub method: String,
    /// Gold labels; adds an error-rate JSON next to the output.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Worker parameters, needed by oracle-map and wmv.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Labels are 0/1 instead of -1/1.
    #[arg(long)]
    pub zero_one: bool,
    #[arg(long, default_value_t = 100)]
    pub iwmv_max_iter: usize,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundRule {
    Mv,
    #[value(alias = "wmv")]
    BoundOptimal,
    OracleMap,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Rule whose bounds are computed under known parameters.
    #[arg(long, value_enum, default_value = "oracle-map")]
    pub method: BoundRule,
    /// Known worker parameters.
    #[arg(long, conflicts_with = "labels")]
    pub params: Option<PathBuf>,
    /// Labels for a plugin bound, estimated against `--gold` when given and
    /// from an EM fit otherwise.
    #[arg(long, required_unless_present = "params")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub zero_one: bool,
    /// BoundReport JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 11)]
    pub workers: usize,
    #[arg(long, default_value_t = 300)]
    pub items: usize,
    /// Constant labeling probability.
    #[arg(long, default_value_t = 0.8)]
    pub q: f64,
    /// Mean Beta accuracy.
    #[arg(long, default_value_t = 0.7)]
    pub wbar: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta_b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub prior: f64,
    /// Draw truth i.i.d. from the prior instead of an exact half split.
    #[arg(long)]
    pub iid: bool,
    #[arg(long, value_enum, default_value = "one-coin")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for labels.csv, gold.csv and params.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    pub which: Experiment,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Error rates of MV, EM-MAP and oracle MAP against mean accuracy.
    FigA {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 11)]
        workers: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 0.8)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        beta_b: f64,
        #[arg(long, default_value_t = 0.02)]
        wbar_start: f64,
        #[arg(long, default_value_t = 0.98)]
        wbar_stop: f64,
        #[arg(long, default_value_t = 0.02)]
        wbar_step: f64,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Bernoulli subsampling of a labeled dataset.
    FigB {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        zero_one: bool,
        #[arg(long, default_value_t = 0.05)]
        x_start: f64,
        #[arg(long, default_value_t = 1.0)]
        x_stop: f64,
        #[arg(long, default_value_t = 0.05)]
        x_step: f64,
        #[command(flatten)]
        em: EmArgs,
    },
    /// MV against one-step WMV from the one-step threshold upward.
    FigC {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 15)]
        workers: usize,
        #[arg(long, default_value_t = 3000)]
        items: usize,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        beta_b: f64,
        #[arg(long, default_value_t = 0.98)]
        wbar_stop: f64,
        #[arg(long, default_value_t = 0.02)]
        wbar_step: f64,
    },
}

fn encoding(zero_one: bool) -> Encoding {
    if zero_one {
        Encoding::ZeroOne
    } else {
        Encoding::Signed
    }
}

fn resolve_method(name: &str, args: &AggregateArgs) -> Result<Method> {
    Ok(match name.parse::<Method>()? {
        Method::EmMap { .. } => Method::EmMap {
            model: args.em.model.into(),
            opts: args.em.options(),
        },
        Method::IterativeWmv { .. } => Method::IterativeWmv {
            max_iter: args.iwmv_max_iter,
        },
        other => other,
    })
}

#[derive(Debug, Serialize)]
struct ErrorSummary<'a> {
    method: &'a str,
    error_rate: f64,
    num_gold: usize,
    num_items: usize,
    num_undetermined: usize,
}

fn run_aggregate(args: &AggregateArgs) -> Result<()> {
    let method = resolve_method(&args.method, args)?;
    let enc = encoding(args.zero_one);
    let params_file = args.params.as_deref().map(io::read_params).transpose()?;
    let ids = params_file.as_ref().map(ParamsFile::id_maps).transpose()?;
    let data = io::load_dataset(&args.labels, args.gold.as_deref(), enc, ids)?;
    let params = params_file.as_ref().map(ParamsFile::to_params).transpose()?;
    if let Some(p) = &params {
        if p.num_workers() != data.labels.num_workers() {
            return Err(Error::DimensionMismatch {
                what: "parameter file workers",
                expected: data.labels.num_workers(),
                actual: p.num_workers(),
            });
        }
    }
    let pred = aggregate(&method, &data.labels, params.as_ref())?;
    io::to_file(&args.out, |out| io::write_predictions(&pred, &data.items, enc, out))?;
    if let Some(gold) = &data.gold {
        let summary = ErrorSummary {
            method: method.id(),
            error_rate: error_rate(&pred, gold)?,
            num_gold: gold.num_labeled(),
            num_items: pred.num_items(),
            num_undetermined: pred.undetermined.len(),
        };
        io::write_json(&args.out.with_extension("error.json"), &summary)?;
    }
    Ok(())
}

fn bound_report(args: &BoundArgs) -> Result<BoundReport> {
    if let Some(path) = &args.params {
        let params = io::read_params(path)?.to_params()?;
        let rule = match args.method {
            BoundRule::Mv => majority_rule(params.num_workers()),
            BoundRule::BoundOptimal => bound_optimal_from_params(&params),
            BoundRule::OracleMap => match params.to_one_coin() {
                Some(one) => oracle_map_rule(&one),
                None => {
                    return Err(Error::invalid(
                        "oracle-map bounds need one-coin parameters (`w`)",
                    ))
                }
            },
        };
        return mean_error_bounds(&rule, &params);
    }
    let labels_path = args.labels.as_deref().expect("clap enforces labels or params");
    let data = io::load_dataset(labels_path, args.gold.as_deref(), encoding(args.zero_one), None)?;
    match &data.gold {
        Some(gold) => plugin_report(&data.labels, Reference::Gold(gold), args.em.model.into()),
        None => {
            let fit = em_fit(&data.labels, args.em.model.into(), &args.em.options())?;
            plugin_bound(&em_plugin_params(&fit.params, &data.labels)?)
        }
    }
}

fn write_or_print<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => io::to_file(path, |w| f(w)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn run_bound(args: &BoundArgs) -> Result<()> {
    let report = bound_report(args)?;
    write_or_print(args.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))
    })
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let a = beta_shape_for_mean(args.wbar, args.beta_b)?;
    let gen = CrowdGenerator {
        model: args.model.into(),
        num_workers: args.workers,
        num_items: args.items,
        prior: args.prior,
        accuracy: AccuracySource::Beta { a, b: args.beta_b },
        sampling: SamplingDesign::Constant(args.q),
        balanced: !args.iid,
        seed: args.seed,
    };
    let data = gen.generate()?;
    let workers = IdMap::numbered("w", args.workers);
    let items = IdMap::numbered("i", args.items);
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let enc = Encoding::Signed;
    io::to_file(&args.out.join("labels.csv"), |w| {
        io::write_labels(&data.labels, &workers, &items, enc, w)
    })?;
    io::to_file(&args.out.join("gold.csv"), |w| io::write_gold(&data.gold, &items, enc, w))?;
    io::write_json(
        &args.out.join("params.json"),
        &ParamsFile::from_params(&data.params, Some((&workers, &items))),
    )
}

fn run_experiment(which: &Experiment) -> Result<()> {
    match which {
        Experiment::FigA {
            sweep: s,
            workers,
            items,
            q,
            beta_b,
            wbar_start,
            wbar_stop,
            wbar_step,
            em,
        } => {
            let cfg = FigAConfig {
                num_workers: *workers,
                num_items: *items,
                q: *q,
                beta_b: *beta_b,
                wbars: sweep(*wbar_start, *wbar_stop, *wbar_step)?,
                reps: s.reps,
                seed: s.seed,
                balanced: true,
                em_model: em.model.into(),
                em: em.options(),
            };
            let rows = experiment_fig_a(&cfg)?;
            write_or_print(s.out.as_deref(), |w| write_fig_a(&rows, w))
        }
        Experiment::FigB {
            sweep: s,
            labels,
            gold,
            zero_one,
            x_start,
            x_stop,
            x_step,
            em,
        } => {
            let data = io::load_dataset(labels, Some(gold), encoding(*zero_one), None)?;
            let gold = data.gold.expect("gold path given");
            let cfg = SubsampleConfig {
                x_grid: sweep(*x_start, *x_stop, *x_step)?,
                reps: s.reps,
                seed: s.seed,
                em_model: em.model.into(),
                em: em.options(),
            };
            let rows = experiment_subsample(&data.labels, &gold, &cfg)?;
            write_or_print(s.out.as_deref(), |w| write_subsample(&rows, w))
        }
        Experiment::FigC {
            sweep: s,
            workers,
            items,
            q,
            beta_b,
            wbar_stop,
            wbar_step,
        } => {
            let cfg = FigCConfig {
                num_workers: *workers,
                num_items: *items,
                q: *q,
                beta_b: *beta_b,
                wbars: FigCConfig::from_threshold(*workers, *wbar_stop, *wbar_step)?,
                reps: s.reps,
                seed: s.seed,
                balanced: true,
            };
            let rows = experiment_fig_c(&cfg)?;
            write_or_print(s.out.as_deref(), |w| write_fig_c(&rows, w))
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Aggregate(args) => run_aggregate(args),
        Command::Bound(args) => run_bound(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Experiment(args) => run_experiment(&args.which),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn fix_prior_flag() {
        let cli = Cli::try_parse_from([
            "crowdbound", "aggregate", "--labels", "l.csv", "--out", "p.csv", "--method", "em-map",
            "--fix-prior",
        ])
        .unwrap();
        let Command::Aggregate(args) = cli.command else { panic!() };
        let opts = args.em.options();
        assert!(!opts.estimate_prior);
        assert_eq!(opts.fixed_prior, 0.5);
        assert!(resolve_method("bogus", &args).is_err());
    }
}
