//! `tunefree` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid usage or input, 3 solver divergence.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::averaging::AveragingScheme;
use crate::dataset::{self, fmt_shortest, Dataset, DatasetError};
use crate::harness::{self, ExperimentEntry, HarnessError, Trace};
use crate::problem::{ErmProblem, LogisticProblem, RidgeProblem};
use crate::rates::{self, Figure, RateParams, RateScheme, Sweep, SweepVar};
use crate::solvers::{self, default_theta_factor, Algorithm, InnerLengthRule, SolverConfig, SolverError, StepRule};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("solver diverged: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Usage(_) => 2,
            Self::Diverged(_) => 3,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(io) => Self::Io(io),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Diverged { .. } | SolverError::NonFiniteObjective { .. } | SolverError::NonPositiveCurvature(_) => {
                Self::Diverged(e.to_string())
            }
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver { id, source } => match CliError::from(source) {
                Self::Diverged(m) => Self::Diverged(format!("config {id}: {m}")),
                other => Self::Usage(format!("config {id}: {other}")),
            },
            HarnessError::Io(io) => Self::Io(io),
            other => Self::Usage(other.to_string()),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "tunefree", version, about = "Variance-reduced ERM solvers with BB steps and averaging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic binary classification dataset in LIBSVM format.
    Gen(GenArgs),
    /// Run one solver configuration and write its trace CSV.
    Run(RunArgs),
    /// Evaluate analytic convergence rates over a sweep.
    Rates(RatesArgs),
    /// Run the SGD / SVRG / SARAH / BB-SVRG / BB-SARAH comparison.
    Bench(BenchArgs),
    /// Compute (or load from cache) the reference optimum of a problem.
    Reference(ReferenceArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Distance between the two class means.
    #[arg(long, default_value_t = 2.0)]
    pub sep: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    Logistic,
    Ridge,
}

#[derive(Debug, Args, Clone)]
pub struct ProblemArgs {
    /// LIBSVM input file.
    #[arg(long)]
    pub data: PathBuf,
    /// Strong-convexity (ℓ2) parameter μ.
    #[arg(long, conflicts_with = "kappa")]
    pub mu: Option<f64>,
    /// Target condition number; sets μ for logistic loss.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum, default_value_t = Loss::Logistic)]
    pub loss: Loss,
    /// Scale every row to unit norm.
    #[arg(long)]
    pub normalize: bool,
    /// Append a constant-1 bias feature.
    #[arg(long)]
    pub bias: bool,
    /// Feature dimension override.
    #[arg(long)]
    pub dim: Option<usize>,
}

pub enum LoadedProblem {
    Logistic(LogisticProblem),
    Ridge(RidgeProblem),
}

impl LoadedProblem {
    pub fn as_dyn(&self) -> &dyn ErmProblem {
        match self {
            Self::Logistic(p) => p,
            Self::Ridge(p) => p,
        }
    }
}

impl ProblemArgs {
    pub fn load(&self) -> Result<LoadedProblem, CliError> {
        let mut data: Dataset = dataset::read_libsvm_file(&self.data, self.dim)?;
        if self.normalize {
            data = data.normalize_rows()?;
        }
        if self.bias {
            data = data.with_bias_column();
        }
        Ok(match (self.loss, self.mu, self.kappa) {
            (Loss::Logistic, Some(mu), None) => LoadedProblem::Logistic(LogisticProblem::new(data, mu).map_err(usage)?),
            (Loss::Logistic, None, Some(k)) => {
                LoadedProblem::Logistic(LogisticProblem::with_condition_number(data, k).map_err(usage)?)
            }
            (Loss::Ridge, Some(mu), None) => LoadedProblem::Ridge(RidgeProblem::from_dataset(&data, mu).map_err(usage)?),
            (Loss::Ridge, None, Some(_)) => return Err(usage("--kappa is only supported for logistic loss")),
            _ => return Err(usage("exactly one of --mu or --kappa is required")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Gd,
    Sgd,
    Svrg,
    Sarah,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AvgArg {
    /// Uniform over x_0..x_{m−1}.
    U,
    /// Weighted averaging.
    W,
    /// Last iterate.
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepArg {
    Fixed,
    Bb,
}

fn scheme_for(algo: Algorithm, avg: AvgArg) -> AveragingScheme {
    match (algo, avg) {
        (_, AvgArg::U) => AveragingScheme::Uniform,
        (Algorithm::Svrg, AvgArg::W) => AveragingScheme::WeightedSvrg,
        (Algorithm::Svrg, AvgArg::L) => AveragingScheme::LastSvrg,
        (_, AvgArg::W) => AveragingScheme::WeightedSarah,
        (_, AvgArg::L) => AveragingScheme::LastSarah,
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// Averaging scheme (SVRG/SARAH only); defaults to weighted.
    #[arg(long = "avg", value_enum)]
    pub avg: Option<AvgArg>,
    /// Step-size rule (SVRG/SARAH only); defaults to BB.
    #[arg(long = "step", value_enum)]
    pub step: Option<StepArg>,
    /// Fixed step as a multiple of 1/L.
    #[arg(long = "eta-over-L")]
    pub eta_over_l: Option<f64>,
    /// BB scaling θ_κ as a multiple of κ.
    #[arg(long)]
    pub theta_kappa: Option<f64>,
    /// BB step used in the first outer loop, as a multiple of 1/L.
    #[arg(long = "eta0-over-L")]
    pub eta0_over_l: Option<f64>,
    /// Adaptive inner-length constant: m^s = ceil(c/(μη^s)).
    #[arg(long)]
    pub c: Option<f64>,
    /// Fixed inner length as a multiple of κ.
    #[arg(long, conflicts_with = "m")]
    pub m_kappa: Option<f64>,
    /// Fixed inner length.
    #[arg(long)]
    pub m: Option<usize>,
    /// Budget in sample passes (IFO / n).
    #[arg(long, default_value_t = 20.0)]
    pub passes: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the reference optimum (leaves the gap column empty).
    #[arg(long)]
    pub no_reference: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn config(&self, problem: &dyn ErmProblem) -> Result<SolverConfig, CliError> {
        let constants = problem.constants();
        let algorithm = match self.algo {
            AlgoArg::Gd => Algorithm::Gd,
            AlgoArg::Sgd => Algorithm::Sgd,
            AlgoArg::Svrg => Algorithm::Svrg,
            AlgoArg::Sarah => Algorithm::Sarah,
        };
        let mut cfg = match algorithm {
            Algorithm::Gd => {
                let mut cfg = SolverConfig::gd(&constants);
                if let Some(e) = self.eta_over_l {
                    cfg.step_rule = StepRule::Fixed { eta: e / constants.l };
                }
                cfg
            }
            Algorithm::Sgd => {
                let mut cfg = SolverConfig::sgd();
                if let Some(e) = self.eta_over_l {
                    cfg.step_rule = StepRule::Fixed { eta: e / constants.l };
                }
                cfg
            }
            Algorithm::Svrg | Algorithm::Sarah => {
                let scheme = scheme_for(algorithm, self.avg.unwrap_or(AvgArg::W));
                let step = self.step.unwrap_or(if self.eta_over_l.is_some() { StepArg::Fixed } else { StepArg::Bb });
                let mut cfg = SolverConfig::tune_free(algorithm, scheme, &constants);
                match step {
                    StepArg::Fixed => {
                        let e = self.eta_over_l.ok_or_else(|| usage("--step fixed needs --eta-over-L"))?;
                        cfg.step_rule = StepRule::Fixed { eta: e / constants.l };
                    }
                    StepArg::Bb => {
                        if self.eta_over_l.is_some() {
                            return Err(usage("--eta-over-L conflicts with --step bb"));
                        }
                        let factor = self.theta_kappa.unwrap_or_else(|| default_theta_factor(algorithm, scheme));
                        cfg.step_rule = StepRule::BarzilaiBorwein {
                            theta_kappa: factor * constants.kappa,
                            eta0: self.eta0_over_l.map(|e| e / constants.l),
                        };
                    }
                }
                let fixed_m = match (self.m, self.m_kappa) {
                    (Some(m), _) => Some(m),
                    (None, Some(mk)) => Some((mk * constants.kappa).round() as usize),
                    (None, None) => None,
                };
                cfg.inner_rule = Some(match (fixed_m, self.c) {
                    (Some(_), Some(_)) => return Err(usage("--c conflicts with a fixed inner length")),
                    (Some(m), None) => InnerLengthRule::Fixed(m),
                    (None, c) => {
                        if step == StepArg::Fixed && c.is_none() {
                            return Err(usage("fixed steps need --m or --m-kappa (or --c)"));
                        }
                        InnerLengthRule::Adaptive { c: c.unwrap_or(1.0) }
                    }
                });
                cfg
            }
        };
        if !algorithm.is_variance_reduced()
            && (self.avg.is_some() || self.step.is_some() || self.m.is_some() || self.m_kappa.is_some() || self.c.is_some() || self.theta_kappa.is_some())
        {
            return Err(usage(format!("{algorithm} takes no averaging, BB or inner-length flags")));
        }
        if !(self.passes >= 0.0 && self.passes.is_finite()) {
            return Err(usage(format!("--passes {}", self.passes)));
        }
        cfg = cfg.with_seed(self.seed).with_passes(problem.n(), self.passes);
        cfg.validate(problem.dim())?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Preset figure: 1a, 1b, 2 or 4b-analytic.
    #[arg(long, conflicts_with = "custom")]
    pub figure: Option<String>,
    /// Custom sweep: requires --sweep and either --values or --from/--to.
    #[arg(long)]
    pub custom: bool,
    /// Comma-separated scheme names (svrg-w, svrg-u, sarah-w, sarah-u, sarah-l, bb-...).
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<String>,
    /// Swept variable: eta, m or theta.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long = "L", default_value_t = 1.0)]
    pub l: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub mu: f64,
    /// Step as a multiple of 1/L.
    #[arg(long = "eta-over-L", default_value_t = 0.5)]
    pub eta_over_l: f64,
    /// Inner length as a multiple of κ.
    #[arg(long, default_value_t = 5.0)]
    pub m_kappa: f64,
    /// θ_κ as a multiple of κ (BB bounds).
    #[arg(long, default_value_t = 2.0)]
    pub theta_kappa: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RatesArgs {
    pub fn grid(&self) -> Result<Vec<rates::GridRow>, CliError> {
        if let Some(id) = &self.figure {
            return Ok(id.parse::<Figure>().map_err(usage)?.grid());
        }
        if !self.custom {
            return Err(usage("give --figure or --custom"));
        }
        let kappa = self.l / self.mu;
        let base = RateParams {
            eta: self.eta_over_l / self.l,
            m: (self.m_kappa * kappa).round(),
            l: self.l,
            mu: self.mu,
            theta_kappa: self.theta_kappa * kappa,
        };
        let var: SweepVar = self.sweep.as_deref().ok_or_else(|| usage("--custom needs --sweep"))?.parse().map_err(usage)?;
        let sweep = if !self.values.is_empty() {
            Sweep::new(var, self.values.clone())
        } else {
            match (self.from, self.to) {
                (Some(lo), Some(hi)) if lo > 0.0 && hi >= lo && self.points >= 1 => {
                    Sweep::log_spaced(var, lo, hi, self.points, var == SweepVar::M)
                }
                _ => return Err(usage("--custom needs --values or positive --from <= --to")),
            }
        };
        let schemes: Vec<RateScheme> = if self.schemes.is_empty() {
            vec![RateScheme::SvrgW, RateScheme::SvrgU, RateScheme::SarahW, RateScheme::SarahU, RateScheme::SarahL]
        } else {
            self.schemes.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(usage)?
        };
        rates::rate_grid(&schemes, &base, &sweep).map_err(usage)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 40.0)]
    pub passes: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inner length of the tuned SVRG/SARAH baselines, as a multiple of κ.
    #[arg(long, default_value_t = 5.0)]
    pub m_kappa: f64,
    /// Fixed SVRG step (multiple of 1/L); tuned over a grid when omitted.
    #[arg(long = "svrg-eta-over-L")]
    pub svrg_eta_over_l: Option<f64>,
    /// Fixed SARAH step (multiple of 1/L); tuned over a grid when omitted.
    #[arg(long = "sarah-eta-over-L")]
    pub sarah_eta_over_l: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write an SVG plot of ‖∇f‖² against sample passes.
    #[arg(long)]
    pub plot: bool,
}

/// Step grids (multiples of 1/L) searched for the tuned baselines.
pub const SVRG_TUNING_GRID: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.4];
pub const SARAH_TUNING_GRID: [f64; 5] = [0.1, 0.2, 0.5, 0.8, 0.95];

/// The five-config comparison lineup with ids 0..5.
pub fn bench_lineup(problem: &dyn ErmProblem, m_kappa: f64, svrg_eta: Option<f64>, sarah_eta: Option<f64>, passes: f64, seed: u64) -> Vec<ExperimentEntry> {
    let c = problem.constants();
    let m = ((m_kappa * c.kappa).round() as usize).max(2);
    let tuned = |algo: Algorithm, fixed: Option<f64>, grid: &[f64]| -> f64 {
        if let Some(e) = fixed {
            return e;
        }
        let make = |eta: f64| {
            let mut cfg = if algo == Algorithm::Svrg {
                SolverConfig::svrg(eta, m, AveragingScheme::Uniform)
            } else {
                SolverConfig::sarah(eta, m, AveragingScheme::Uniform)
            };
            cfg.seed = seed;
            cfg
        };
        harness::tune_step(problem, make, grid, passes).map(|(e, _)| e).unwrap_or(grid[0])
    };
    let svrg_eta = tuned(Algorithm::Svrg, svrg_eta, &SVRG_TUNING_GRID);
    let sarah_eta = tuned(Algorithm::Sarah, sarah_eta, &SARAH_TUNING_GRID);
    let entries = vec![
        ExperimentEntry::labelled(0, "sgd", SolverConfig::sgd()),
        ExperimentEntry::labelled(1, format!("svrg-u (eta={}/L)", fmt_shortest(svrg_eta)), SolverConfig::svrg(svrg_eta / c.l, m, AveragingScheme::Uniform)),
        ExperimentEntry::labelled(2, format!("sarah-u (eta={}/L)", fmt_shortest(sarah_eta)), SolverConfig::sarah(sarah_eta / c.l, m, AveragingScheme::Uniform)),
        ExperimentEntry::labelled(3, "bb-svrg-w", SolverConfig::tune_free_svrg(&c)),
        ExperimentEntry::labelled(4, "bb-sarah-w", SolverConfig::tune_free_sarah(&c)),
    ];
    entries.into_iter().map(|mut e| {
        e.config.seed = seed;
        e
    }).collect()
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = harness::DEFAULT_REFERENCE_TOL)]
    pub tol: f64,
    /// Write x* as `index,x` CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn f_star(problem: &dyn ErmProblem) -> Result<f64, CliError> {
    Ok(harness::cached_reference(problem, harness::DEFAULT_REFERENCE_TOL)?.f_star)
}

pub fn cmd_gen(args: &GenArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ds = dataset::generate_synthetic(args.n, args.d, args.seed, args.sep)?;
    write_output(args.out.as_deref(), &dataset::to_libsvm_string(&ds), stdout)
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loaded = args.problem.load()?;
    let problem = loaded.as_dyn();
    let cfg = args.config(problem)?;
    let fs = if args.no_reference { None } else { Some(f_star(problem)?) };
    let trace = solvers::run_with_reference(problem, &cfg, fs)?;
    write_output(args.out.as_deref(), &harness::emit_csv_string(&[(0, &trace)]), stdout)
}

pub fn cmd_rates(args: &RatesArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = args.grid()?;
    write_output(args.out.as_deref(), &rates::grid_csv_string(&rows), stdout)
}

pub fn cmd_bench(args: &BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loaded = args.problem.load()?;
    let problem = loaded.as_dyn();
    if !(args.passes >= 0.0 && args.passes.is_finite()) {
        return Err(usage(format!("--passes {}", args.passes)));
    }
    let fs = f_star(problem)?;
    let entries = bench_lineup(problem, args.m_kappa, args.svrg_eta_over_l, args.sarah_eta_over_l, args.passes, args.seed);
    let traces: Vec<Trace> = harness::run_experiment(problem, &entries, args.passes, Some(fs))?;
    fs::create_dir_all(&args.out_dir)?;
    let mut summary = String::from("config_id,label,sample_passes,gap,grad_sq\n");
    for (e, t) in entries.iter().zip(&traces) {
        let name = t.label.split_whitespace().next().unwrap_or("config");
        fs::write(args.out_dir.join(format!("{}-{name}.csv", e.id)), harness::emit_csv_string(&[(e.id, t)]))?;
        let last = t.last();
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            e.id,
            t.label,
            fmt_shortest(t.sample_passes(last)),
            last.gap.map(fmt_shortest).unwrap_or_default(),
            last.grad_sq.map(fmt_shortest).unwrap_or_default()
        ));
    }
    let merged: Vec<(u64, &Trace)> = entries.iter().map(|e| e.id).zip(&traces).collect();
    fs::write(args.out_dir.join("comparison.csv"), harness::emit_csv_string(&merged))?;
    if args.plot {
        let svg = harness::svg_plot("gradient norm", "sample passes", "‖∇f‖²", &harness::grad_sq_series(&traces));
        fs::write(args.out_dir.join("comparison.svg"), svg)?;
    }
    stdout.write_all(summary.as_bytes())?;
    Ok(())
}

pub fn cmd_reference(args: &ReferenceArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loaded = args.problem.load()?;
    let problem = loaded.as_dyn();
    let r = harness::cached_reference(problem, args.tol)?;
    writeln!(stdout, "f_star={} grad_norm={}", fmt_shortest(r.f_star), fmt_shortest(r.grad_norm))?;
    if let Some(path) = &args.out {
        let mut text = String::from("index,x\n");
        for (i, v) in r.x_star.iter().enumerate() {
            text.push_str(&format!("{i},{}\n", fmt_shortest(*v)));
        }
        fs::write(path, text)?;
    }
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Run(a) => cmd_run(a, stdout),
        Command::Rates(a) => cmd_rates(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Reference(a) => cmd_reference(a, stdout),
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = stdout.write_all(text.as_bytes());
                if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 }
            } else {
                let _ = stderr.write_all(text.as_bytes());
                2
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
