//! Command-line front end: `stochfeas run <command> [flags]`.
//!
//! A JSON config file (`--config`) supplies defaults; flags override it.
//! Artifacts go to the output directory: one trace CSV per (strategy, seed),
//! one averaged CSV per strategy and `summary.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::block::{run_block, BlockConfig, WeightRule};
use crate::diagnostics::{aggregate_runs, fejer_audit, AveragedTrace, RunSummary};
use crate::error::{Error, ErrorClass, Result};
use crate::experiments::{
    generate_image_problem, generate_signal_problem, run_experiment, ExperimentConfig, ImageSpec,
    SignalSpec,
};
use crate::experiments::toy::quadrant_family;
use crate::fixedpoint::{run_km, run_sgd, KmConfig, QuadraticGradientFamily, SgdConfig};
use crate::operators::MapOperator;
use crate::point::Point;
use crate::relaxation::RelaxationStrategy;
use crate::rng::{RandomStream, StreamLabel};
use crate::trace::ConvergenceTrace;

pub const THREADS_ENV: &str = "STOCHFEAS_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Dimension and member count of the built-in SGD family.
const SGD_DIM: usize = 10;
const SGD_MEMBERS: usize = 32;
const SGD_AMPLITUDE: f64 = 0.1;
/// Witnesses per toy run for the Fejér audit.
const TOY_WITNESSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Toy,
    Km,
    Sgd,
    Signal,
    Image,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Toy => "toy",
            Command::Km => "km",
            Command::Sgd => "sgd",
            Command::Signal => "signal",
            Command::Image => "image",
        }
    }

    fn is_block(self) -> bool {
        matches!(self, Command::Toy | Command::Signal | Command::Image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Parser)]
#[command(name = "stochfeas", version, about = "Stochastic relaxed fixed point iterations")]
pub struct Cli {
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Run a solver or experiment and write traces.
    Run(RunArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// JSON config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Block size.
    #[arg(long = "M")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// `const:<v>`, `two_point:<a>:<pa>:<b>` or `uniform:<lo>:<hi>`.
    #[arg(long)]
    pub relaxation: Option<String>,
    #[arg(long, value_enum)]
    pub weight_rule: Option<WeightRuleArg>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// SGD step exponent.
    #[arg(long)]
    pub nu: Option<f64>,
    /// SGD cocoercivity constant.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightRuleArg {
    Uniform,
    MaxResidual,
}

impl From<WeightRuleArg> for WeightRule {
    fn from(w: WeightRuleArg) -> Self {
        match w {
            WeightRuleArg::Uniform => WeightRule::UniformOverBatch,
            WeightRuleArg::MaxResidual => WeightRule::MaxResidualConcentrated,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StrategyField {
    Shorthand(String),
    Full(RelaxationStrategy),
}

impl StrategyField {
    fn resolve(self) -> Result<RelaxationStrategy> {
        match self {
            StrategyField::Shorthand(s) => s.parse(),
            StrategyField::Full(s) => Ok(s),
        }
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    command: Option<Command>,
    seed: Option<u64>,
    #[serde(rename = "M")]
    batch_size: Option<usize>,
    delta: Option<f64>,
    relaxation: Option<StrategyField>,
    weight_rule: Option<WeightRule>,
    iters: Option<usize>,
    repeats: Option<usize>,
    output_dir: Option<PathBuf>,
    scale: Option<Scale>,
    nu: Option<f64>,
    beta: Option<f64>,
}

/// A fully resolved and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub batch_size: usize,
    pub delta: f64,
    pub strategies: Vec<RelaxationStrategy>,
    pub weight_rule: WeightRule,
    pub iters: usize,
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub scale: Scale,
    pub nu: f64,
    pub beta: f64,
}

impl RunConfig {
    pub fn strategy_labels(&self) -> Vec<String> {
        match self.command {
            Command::Sgd => vec![sgd_label(self.beta, self.nu)],
            _ => self.strategies.iter().map(|s| s.label()).collect(),
        }
    }

    pub fn block_config(&self, strategy: RelaxationStrategy, seed: u64) -> BlockConfig {
        BlockConfig {
            delta: self.delta,
            weight_rule: self.weight_rule,
            ..BlockConfig::new(self.batch_size, strategy, self.iters, seed)
        }
    }

    fn experiment_config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.batch_size, self.iters, self.repeats, self.seed);
        cfg.delta = self.delta;
        cfg.weight_rule = self.weight_rule;
        // a family residual check costs a full sweep of the family
        cfg.check_every = match self.command {
            Command::Signal if self.batch_size < 16 => 10_000,
            Command::Signal => 1_000,
            Command::Image => 100,
            _ => 10,
        };
        cfg
    }

    /// Checks the target solver's hypotheses for every strategy.
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::invalid("iters must be positive"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be positive"));
        }
        match self.command {
            Command::Toy | Command::Signal | Command::Image => {
                for s in &self.strategies {
                    self.block_config(*s, self.seed).validate()?;
                }
            }
            Command::Km => {
                for s in &self.strategies {
                    KmConfig::new(*s, self.iters, self.seed).validate(1.0)?;
                }
            }
            Command::Sgd => SgdConfig::new(self.beta, self.nu, self.iters, self.seed).validate()?,
        }
        Ok(())
    }
}

fn sgd_label(beta: f64, nu: f64) -> String {
    format!("step_{beta}_{nu}")
}

fn default_iters(command: Command, scale: Scale) -> usize {
    match (command, scale) {
        (Command::Toy, _) => 100,
        (Command::Km, _) => 200,
        (Command::Sgd, _) => 100_000,
        (Command::Signal, Scale::Desk) => 100_000,
        (Command::Signal, Scale::Paper) => 1_000_000,
        (Command::Image, _) => 20_000,
    }
}

fn default_batch(command: Command) -> usize {
    match command {
        Command::Signal => 16,
        Command::Toy | Command::Image => 2,
        Command::Km | Command::Sgd => 1,
    }
}

fn default_strategies(command: Command) -> Vec<RelaxationStrategy> {
    match command {
        Command::Km => vec![RelaxationStrategy::constant(0.5).expect("valid constant")],
        _ => RelaxationStrategy::experiment_set(),
    }
}

/// Merges flags over the config file over per-command defaults, then
/// validates.
pub fn resolve(args: RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ConfigFile>(&text)?
        }
        None => ConfigFile::default(),
    };
    let command = args
        .command
        .or(file.command)
        .ok_or_else(|| Error::invalid("no command given (toy, km, sgd, signal or image)"))?;
    let scale = args.scale.or(file.scale).unwrap_or_default();
    let relaxation = match (args.relaxation, file.relaxation) {
        (Some(s), _) => Some(s.parse()?),
        (None, Some(f)) => Some(f.resolve()?),
        (None, None) => None,
    };
    let batch_size = args.batch_size.or(file.batch_size).unwrap_or(default_batch(command));
    if command.is_block() && batch_size == 0 {
        return Err(Error::invalid("M must be positive"));
    }
    let cfg = RunConfig {
        command,
        seed: args.seed.or(file.seed).unwrap_or(0),
        batch_size,
        delta: args
            .delta
            .or(file.delta)
            .unwrap_or(0.5 / batch_size.max(1) as f64),
        strategies: relaxation.map_or_else(|| default_strategies(command), |s| vec![s]),
        weight_rule: args
            .weight_rule
            .map(WeightRule::from)
            .or(file.weight_rule)
            .unwrap_or(WeightRule::UniformOverBatch),
        iters: args.iters.or(file.iters).unwrap_or(default_iters(command, scale)),
        repeats: args.repeats.or(file.repeats).unwrap_or(1),
        output_dir: args
            .output_dir
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        scale,
        nu: args.nu.or(file.nu).unwrap_or(0.75),
        beta: args.beta.or(file.beta).unwrap_or(1.0),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_and_validate<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::invalid(e.to_string().trim().to_string()))?;
    match cli.action {
        Action::Run(args) => resolve(args),
    }
}

/// Traces of one strategy, ready to be written.
struct StrategyOutput {
    label: String,
    runs: Vec<(u64, ConvergenceTrace)>,
    averaged: AveragedTrace,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub summaries: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn invariant_violations(&self) -> usize {
        self.summaries.iter().map(|s| s.invariant_violations).sum()
    }
}

/// Runs `cfg` on a pool capped by `STOCHFEAS_THREADS` (when set) and writes
/// all artifacts.
pub fn execute(cfg: &RunConfig) -> Result<Report> {
    match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numeric(format!("cannot build thread pool: {e}")))?
            .install(|| execute_inner(cfg)),
        None => execute_inner(cfg),
    }
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute_inner(cfg: &RunConfig) -> Result<Report> {
    let (outputs, summaries) = match cfg.command {
        Command::Toy => run_toy(cfg)?,
        Command::Km => run_km_command(cfg)?,
        Command::Sgd => run_sgd_command(cfg)?,
        Command::Signal => {
            let spec = match cfg.scale {
                Scale::Desk => SignalSpec::desk(),
                Scale::Paper => SignalSpec::paper(),
            };
            let prob = generate_signal_problem(&spec, cfg.seed)?;
            run_block_experiment(cfg, &prob.family)?
        }
        Command::Image => {
            let spec = match cfg.scale {
                Scale::Desk => ImageSpec::desk(),
                Scale::Paper => ImageSpec::paper(),
            };
            let prob = generate_image_problem(&spec, cfg.seed)?;
            run_block_experiment(cfg, &prob.family)?
        }
    };
    write_outputs(cfg, &outputs, summaries)
}

fn run_block_experiment(
    cfg: &RunConfig,
    family: &crate::operators::OperatorFamily,
) -> Result<(Vec<StrategyOutput>, Vec<RunSummary>)> {
    let exp = cfg.experiment_config();
    let x0 = Point::zeros(family.dim());
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for s in &cfg.strategies {
        let res = run_experiment(cfg.command.name(), family, &x0, &exp, *s)?;
        summaries.extend(res.runs.iter().map(|r| r.summary.clone()));
        outputs.push(StrategyOutput {
            label: s.label(),
            runs: res.runs.into_iter().map(|r| (r.seed, r.trace)).collect(),
            averaged: res.averaged,
        });
    }
    Ok((outputs, summaries))
}

/// The quadrant problem from `(1, 1)` with a Fejér audit against witnesses
/// drawn from the quadrant.
fn run_toy(cfg: &RunConfig) -> Result<(Vec<StrategyOutput>, Vec<RunSummary>)> {
    use rayon::prelude::*;

    let family = quadrant_family();
    let x0 = Point::new(vec![1.0, 1.0])?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for s in &cfg.strategies {
        let runs = seeds
            .par_iter()
            .map(|&seed| {
                let block = BlockConfig {
                    record: true,
                    ..cfg.block_config(*s, seed)
                };
                let out = run_block(&family, &block, &x0, None)?;
                let mut audit_stream = RandomStream::new(seed, StreamLabel::Audit);
                let witnesses: Vec<Point> = (0..TOY_WITNESSES)
                    .map(|_| {
                        Point::from_raw(vec![
                            -audit_stream.uniform_in(0.0, 2.0),
                            -audit_stream.uniform_in(0.0, 2.0),
                        ])
                    })
                    .collect();
                let audit = fejer_audit(&out.records, &out.final_point, &witnesses)?;
                let mut summary = RunSummary::from_trace("toy", &s.label(), seed, &out.trace);
                summary.invariant_violations += audit.violations;
                summary.worst_violation = summary.worst_violation.max(audit.worst);
                Ok((seed, out.trace, summary))
            })
            .collect::<Result<Vec<_>>>()?;
        let traces: Vec<ConvergenceTrace> = runs.iter().map(|r| r.1.clone()).collect();
        let averaged = aggregate_prefix(&traces)?;
        summaries.extend(runs.iter().map(|r| r.2.clone()));
        outputs.push(StrategyOutput {
            label: s.label(),
            runs: runs.into_iter().map(|r| (r.0, r.1)).collect(),
            averaged,
        });
    }
    Ok((outputs, summaries))
}

/// 90 degree rotation of the plane from `(1, 0)`.
fn run_km_command(cfg: &RunConfig) -> Result<(Vec<StrategyOutput>, Vec<RunSummary>)> {
    let rotation = MapOperator::new(2, |x: &Point| {
        let v = x.as_slice();
        Point::from_raw(vec![-v[1], v[0]])
    });
    let x0 = Point::new(vec![1.0, 0.0])?;
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for s in &cfg.strategies {
        let mut runs = Vec::new();
        for i in 0..cfg.repeats as u64 {
            let seed = cfg.seed.wrapping_add(i);
            let out = run_km(&rotation, &KmConfig::new(*s, cfg.iters, seed), &x0)?;
            summaries.push(RunSummary::from_trace("km", &s.label(), seed, &out.trace));
            runs.push((seed, out.trace));
        }
        let traces: Vec<ConvergenceTrace> = runs.iter().map(|r| r.1.clone()).collect();
        outputs.push(StrategyOutput {
            label: s.label(),
            averaged: aggregate_prefix(&traces)?,
            runs,
        });
    }
    Ok((outputs, summaries))
}

/// Quadratic family in `R^10` centered at the all-ones vector, from 0.
fn run_sgd_command(cfg: &RunConfig) -> Result<(Vec<StrategyOutput>, Vec<RunSummary>)> {
    let center = Point::from_raw(vec![1.0; SGD_DIM]);
    let family = QuadraticGradientFamily::random(center, SGD_MEMBERS, SGD_AMPLITUDE, cfg.seed)?;
    let x0 = Point::zeros(SGD_DIM);
    let label = sgd_label(cfg.beta, cfg.nu);
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for i in 0..cfg.repeats as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let out = run_sgd(&family, &SgdConfig::new(cfg.beta, cfg.nu, cfg.iters, seed), &x0)?;
        summaries.push(RunSummary::from_trace("sgd", &label, seed, &out.trace));
        runs.push((seed, out.trace));
    }
    let traces: Vec<ConvergenceTrace> = runs.iter().map(|r| r.1.clone()).collect();
    let averaged = aggregate_prefix(&traces)?;
    Ok((vec![StrategyOutput { label, runs, averaged }], summaries))
}

/// Averages over the iterations every run reached (runs may stop early at
/// tolerance).
fn aggregate_prefix(traces: &[ConvergenceTrace]) -> Result<AveragedTrace> {
    let common = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let cut: Vec<ConvergenceTrace> = traces
        .iter()
        .map(|t| ConvergenceTrace {
            rows: t.rows[..common].to_vec(),
            stop: t.stop,
        })
        .collect();
    aggregate_runs(&cut)
}

fn write_outputs(cfg: &RunConfig, outputs: &[StrategyOutput], summaries: Vec<RunSummary>) -> Result<Report> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let cmd = cfg.command.name();
    let mut files = Vec::new();
    for o in outputs {
        for (seed, trace) in &o.runs {
            let path = dir.join(format!("{cmd}_{}_{seed}.csv", o.label));
            trace.write_csv(BufWriter::new(File::create(&path)?))?;
            files.push(path);
        }
        let path = dir.join(format!("{cmd}_{}_avg.csv", o.label));
        o.averaged.write_csv(BufWriter::new(File::create(&path)?))?;
        files.push(path);
    }
    let path = dir.join("summary.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &summaries)?;
    files.push(path);
    Ok(Report { summaries, files })
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config | ErrorClass::Io => EXIT_CONFIG,
        ErrorClass::Numeric => EXIT_NUMERIC,
        ErrorClass::Invariant => EXIT_INVARIANT,
    }
}

fn report_error(kind: &str, code: i32, message: String) -> i32 {
    let report = ErrorReport {
        error: kind,
        exit_code: code,
        message,
    };
    eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
    code
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Numeric => "numeric",
        ErrorClass::Invariant => "invariant",
        ErrorClass::Io => "io",
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => return report_error("config", EXIT_CONFIG, e.to_string().trim().to_string()),
    };
    let Action::Run(args) = cli.action;
    let cfg = match resolve(args) {
        Ok(cfg) => cfg,
        Err(e) => return report_error("config", EXIT_CONFIG, e.to_string()),
    };
    let start = Instant::now();
    match execute(&cfg) {
        Ok(report) => {
            let bad = report.invariant_violations();
            println!(
                "{}: {} runs, {} files in {} ({:.2} s)",
                cfg.command.name(),
                report.summaries.len(),
                report.files.len(),
                display(&cfg.output_dir),
                start.elapsed().as_secs_f64()
            );
            if bad > 0 {
                return report_error(
                    "invariant",
                    EXIT_INVARIANT,
                    format!("{bad} invariant violations; see summary.json"),
                );
            }
            EXIT_OK
        }
        Err(e) => {
            let class = e.class();
            report_error(class_name(class), exit_code(class), e.to_string())
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
