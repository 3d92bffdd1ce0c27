//! Command-line front end: `test`, `simulate` and `diagnose`.
//!
//! Exit codes: 0 on success, 1 when the statistical procedure fails, 2 for
//! input or configuration errors.

use crate::bahadur::{remainder_study, BandwidthRule};
use crate::bootstrap::{run_test, write_draws_csv, BootstrapPlan};
use crate::config::{ConfigError, RunConfig};
use crate::input::{read_sample_path, ParseError};
use crate::mono_test::{decide, Direction, TestOutcome, Variant};
use crate::simulation::{run_mc, scatter, McReport, ModelId};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Procedure(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Procedure(_) | CliError::Output { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "monoqr", version, about = "Bootstrap tests of monotonicity for conditional quantile functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; omitted fields take built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "monoqr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    NonPositive,
    NonNegative,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::NonPositive => Direction::NonPositive,
            DirectionArg::NonNegative => Direction::NonNegative,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StatArgs {
    /// Bandwidth(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Nominal level(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Quantile levels of the grid (two levels for the interquartile variant).
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Exponent of the one-sided L_p statistic.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Number of bootstrap resamples.
    #[arg(long = "bootstrap-b")]
    pub bootstrap_b: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test monotonicity on a CSV sample.
    Test {
        /// CSV with header `y,x` or `y1,...,yL,l,x1,...,xd`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stat: StatArgs,
    },
    /// Run the Monte Carlo size and power study.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stat: StatArgs,
        /// Models to run, comma separated (null, alt1, ..., alt5).
        #[arg(long, value_delimiter = ',')]
        models: Vec<ModelId>,
        /// Use 1000 null and 200 alternative replications.
        #[arg(long)]
        full_scale: bool,
    },
    /// Measure Bahadur representation remainders under a known model.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// Sample sizes, comma separated and increasing.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        replications: Option<usize>,
        /// Fixed bandwidth for every n (default: n^{-1/5}).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Metadata {
    fn new(command: &'static str, cfg: &RunConfig) -> Self {
        Self {
            version: VERSION,
            command,
            seed: cfg.seed,
            config_sha256: cfg.hash(),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# monoqr {}\n# command: {}\n# seed: {}\n# config-sha256: {}\n",
            self.version, self.command, self.seed, self.config_sha256
        )
    }
}

#[derive(Serialize)]
struct OutcomeFile<'a> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    outcome: &'a TestOutcome,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    report: &'a McReport,
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn single<T: Copy>(values: &[T], flag: &str) -> Result<Option<T>, CliError> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => Err(CliError::Usage(format!("--{flag} takes a single value for this command"))),
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&common.out).map_err(|source| CliError::Output {
        path: common.out.display().to_string(),
        source,
    })?;
    Ok(common.out.clone())
}

fn with_workers<T>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(job()),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Procedure(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn apply_spec_overrides(spec: &mut crate::mono_test::TestSpec, stat: &StatArgs) {
    if let Some(p) = stat.p {
        spec.p = p;
    }
    if let Some(d) = stat.direction {
        spec.direction = d.into();
    }
}

/// Applies `--tau`: grid levels for the single-derivative statistic, or the
/// two compared levels for the interquartile statistic.
fn apply_tau(
    taus: &[f64],
    spec: &mut crate::mono_test::TestSpec,
    grid: &mut crate::config::GridConfig,
) -> Result<(), CliError> {
    if taus.is_empty() {
        return Ok(());
    }
    if let Variant::InterquartileDelta { .. } = spec.variant {
        let [lo, hi] = taus else {
            return Err(CliError::Usage("the interquartile statistic needs --tau LO,HI".into()));
        };
        spec.variant = Variant::InterquartileDelta { tau_lo: *lo, tau_hi: *hi };
    }
    grid.tau_nodes = taus.to_vec();
    grid.tau_weights = None;
    Ok(())
}

fn cmd_test(input: &Path, common: &CommonArgs, stat: &StatArgs) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    {
        let t = &mut cfg.test;
        if let Some(h) = single(&stat.h, "h")? {
            t.fit.bandwidth = h;
        }
        if let Some(a) = single(&stat.alpha, "alpha")? {
            t.alpha = a;
        }
        if let Some(eta) = stat.eta {
            t.eta = eta;
        }
        if let Some(b) = stat.bootstrap_b {
            t.bootstrap_resamples = b;
        }
        apply_spec_overrides(&mut t.spec, stat);
        apply_tau(&stat.tau, &mut t.spec, &mut t.grid)?;
    }
    let t = cfg.test.clone();
    t.spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(t.alpha > 0.0 && t.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", t.alpha)));
    }
    if !(t.eta >= 0.0) {
        return Err(CliError::Usage(format!("eta must be nonnegative, got {}", t.eta)));
    }
    if t.bootstrap_resamples == 0 {
        return Err(CliError::Usage("bootstrap-b must be at least 1".into()));
    }
    let grid = t.grid.build()?;
    if let Variant::InterquartileDelta { tau_lo, tau_hi } = t.spec.variant {
        if grid.tau_index(tau_lo).is_none() || grid.tau_index(tau_hi).is_none() {
            return Err(CliError::Usage(format!(
                "grid quantile levels {:?} must include {tau_lo} and {tau_hi}",
                grid.tau_nodes()
            )));
        }
    }

    let sample = read_sample_path(input)?;
    t.fit
        .validate(sample.max_outcomes())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if sample.dim() != 1 {
        return Err(CliError::Usage(format!(
            "the monotonicity test needs one covariate, input has {}",
            sample.dim()
        )));
    }
    let p = t.fit.degree + 1;
    if sample.len() < p + 1 {
        return Err(CliError::Usage(format!(
            "need at least {} observations, input has {}",
            p + 1,
            sample.len()
        )));
    }

    let mut plan = BootstrapPlan::new(t.bootstrap_resamples, cfg.seed, 0);
    plan.policy = t.failure_policy;
    let run = with_workers(common.workers, || run_test(&sample, &grid, &t.fit, &t.spec, &plan))?
        .map_err(|e| CliError::Procedure(e.to_string()))?;
    let outcome = decide(run.statistic, &run.draws, t.alpha, t.eta, t.fit.bandwidth)
        .map_err(|e| CliError::Procedure(e.to_string()))?;

    let meta = Metadata::new("test", &cfg);
    let dir = out_dir(common)?;
    let json = serde_json::to_string_pretty(&OutcomeFile {
        metadata: &meta,
        outcome: &outcome,
    })
    .expect("outcome serializes");
    write_file(&dir, "outcome.json", format!("{json}\n").as_bytes())?;

    let mut draws = meta.csv_header().into_bytes();
    write_draws_csv(&mut draws, &run.draws).map_err(|e| CliError::Procedure(e.to_string()))?;
    write_file(&dir, "draws.csv", &draws)?;

    let mut grid_csv = meta.csv_header();
    grid_csv.push_str("x,tau,qhat,ghat\n");
    for fit in run.fits.fits() {
        grid_csv.push_str(&format!("{},{},{:e},{:e}\n", fit.x[0], fit.tau, fit.gamma_hat[0], fit.gamma_hat[1]));
    }
    write_file(&dir, "ghat_grid.csv", grid_csv.as_bytes())?;

    println!("{outcome}");
    Ok(())
}

fn cmd_simulate(
    common: &CommonArgs,
    stat: &StatArgs,
    models: &[ModelId],
    full_scale: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    {
        let s = &mut cfg.simulate;
        if !stat.h.is_empty() {
            s.bandwidths = stat.h.clone();
        }
        if !stat.alpha.is_empty() {
            s.alphas = stat.alpha.clone();
        }
        if let Some(eta) = stat.eta {
            s.eta = eta;
        }
        if let Some(b) = stat.bootstrap_b {
            s.bootstrap_resamples = b;
        }
        if !models.is_empty() {
            s.models = models.to_vec();
        }
        if full_scale {
            s.null_replications = 1000;
            s.alt_replications = 200;
        }
        apply_spec_overrides(&mut s.spec, stat);
        apply_tau(&stat.tau, &mut s.spec, &mut s.grid)?;
    }
    let mc = cfg.simulate.to_mc(cfg.seed)?;
    let report = with_workers(common.workers, || run_mc(&mc))?.map_err(|e| CliError::Usage(e.to_string()))?;

    let meta = Metadata::new("simulate", &cfg);
    let dir = out_dir(common)?;
    write_file(&dir, "table1.csv", format!("{}{}", meta.csv_header(), report.table_csv()).as_bytes())?;
    let json = serde_json::to_string_pretty(&ReportFile {
        metadata: &meta,
        report: &report,
    })
    .expect("report serializes");
    write_file(&dir, "mc_report.json", format!("{json}\n").as_bytes())?;
    if cfg.simulate.scatter_n > 0 {
        for &model in &mc.models {
            let mut text = meta.csv_header();
            text.push_str("x,y,m\n");
            for (x, y, m) in scatter(model, cfg.simulate.scatter_n, mc.noise_sd, cfg.seed) {
                text.push_str(&format!("{x},{y},{m}\n"));
            }
            write_file(&dir, &format!("scatter_{model}.csv"), text.as_bytes())?;
        }
    }
    print!("{}", report.render_table());
    eprintln!("runtime: {:.1} s", report.runtime.as_secs_f64());
    let failed: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.failed())
        .map(|c| format!("({}, h={})", c.model, c.bandwidth))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Procedure(format!("failed cells: {}", failed.join(", "))))
    }
}

fn cmd_diagnose(
    common: &CommonArgs,
    n: &[usize],
    replications: Option<usize>,
    h: Option<f64>,
    tau: &[f64],
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    {
        let d = &mut cfg.diagnose;
        if !n.is_empty() {
            d.n_values = n.to_vec();
        }
        if let Some(r) = replications {
            d.replications = r;
        }
        if let Some(h) = h {
            d.bandwidth = BandwidthRule {
                constant: h,
                exponent: 0.0,
            };
        }
        if !tau.is_empty() {
            d.grid.tau_nodes = tau.to_vec();
            d.grid.tau_weights = None;
        }
    }
    let study = cfg.diagnose.to_study(cfg.seed)?;
    let model = cfg.diagnose.model;
    let report = with_workers(common.workers, || remainder_study(&model, &study))?
        .map_err(|e| CliError::Procedure(e.to_string()))?;

    let meta = Metadata::new("diagnose", &cfg);
    let dir = out_dir(common)?;
    let mut text = meta.csv_header().into_bytes();
    report
        .write_csv(&mut text)
        .map_err(|e| CliError::Procedure(e.to_string()))?;
    write_file(&dir, "remainder.csv", &text)?;

    let mut stdout = io::stdout().lock();
    let _ = writeln!(stdout, "{:>11} {:>7} {:>14} {:>10} {:>11}", "variant", "n", "median sup", "envelope", "normalized");
    for &v in &study.variants {
        for (n, med, env) in report.medians(v) {
            let _ = writeln!(stdout, "{:>11} {n:>7} {med:>14.6} {env:>10.6} {:>11.6}", v.label(), med / env);
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Test { input, common, stat } => cmd_test(input, common, stat),
        Command::Simulate {
            common,
            stat,
            models,
            full_scale,
        } => cmd_simulate(common, stat, models, *full_scale),
        Command::Diagnose {
            common,
            n,
            replications,
            h,
            tau,
        } => cmd_diagnose(common, n, *replications, *h, tau),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
