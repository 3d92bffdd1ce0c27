//! Monte Carlo size and power study for the median-derivative monotonicity test.
//!
//! Covariates are `Unif[0, 1]`, errors are `X^4 * N(0, sd^2)` (sd² = 0.1 by default) and outcomes are
//! `Y = m_j(X) + U` for the built-in mean functions. Each replication fits the
//! local linear median-derivative grid, forms the statistic, runs the pair
//! bootstrap once and evaluates every nominal level against the shared draws.

use crate::bootstrap::{run_test, BootstrapError, BootstrapPlan};
use crate::grid::EvalGrid;
use crate::local::{FitConfig, Sample};
use crate::mono_test::{decide, Direction, TestError, TestSpec};
use crate::rng::{stream_id, substream};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Standard deviation of the Gaussian factor in `U = X^4 Z` (variance 0.1).
pub const DEFAULT_NOISE_SD: f64 = 0.316_227_766_016_837_94;

/// Default η for the study, negligible next to the bootstrap mean.
pub const DEFAULT_MC_ETA: f64 = 1e-6;

const TAG_DATA: u64 = 0x6461_7461;
const TAG_BOOT: u64 = 0x626f_6f74;
const TAG_SCATTER: u64 = 0x7363_6174;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error(transparent)]
    Test(#[from] TestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Null,
    Alt1,
    Alt2,
    Alt3,
    Alt4,
    Alt5,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::Null,
        ModelId::Alt1,
        ModelId::Alt2,
        ModelId::Alt3,
        ModelId::Alt4,
        ModelId::Alt5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Null => "null",
            ModelId::Alt1 => "alt1",
            ModelId::Alt2 => "alt2",
            ModelId::Alt3 => "alt3",
            ModelId::Alt4 => "alt4",
            ModelId::Alt5 => "alt5",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown model id `{0}`; valid ids are null, alt1, alt2, alt3, alt4, alt5")]
pub struct UnknownModel(pub String);

impl FromStr for ModelId {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

/// Mean function `m_j(x)` of each model.
pub fn mean_function(model: ModelId, x: f64) -> f64 {
    match model {
        ModelId::Null => 0.0,
        ModelId::Alt1 => x * (1.0 - x),
        ModelId::Alt2 => -0.1 * x,
        ModelId::Alt3 => -0.1 * (-50.0 * (x - 0.5).powi(2)).exp(),
        ModelId::Alt4 => x + 0.6 * (-10.0 * x * x).exp(),
        ModelId::Alt5 => {
            let bump = 2.0 * (-10.0 * (x - 0.5).powi(2)).exp();
            if x < 0.5 {
                10.0 * (x - 0.5).powi(3) - bump
            } else {
                0.1 * (x - 0.5) - bump
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: ModelId,
    pub n: usize,
    pub noise_sd: f64,
}

impl DgpSpec {
    pub fn new(model: ModelId, n: usize) -> Self {
        Self {
            model,
            n,
            noise_sd: DEFAULT_NOISE_SD,
        }
    }
}

/// Draws `Y = m(X) + X^4 Z`, `X ~ Unif[0,1]`, `Z ~ N(0, sd^2)`.
pub fn generate<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Sample {
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        x.push(xi);
        y.push(mean_function(spec.model, xi) + xi.powi(4) * spec.noise_sd * z);
    }
    Sample::scalar(y, x).expect("generated sample is finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub models: Vec<ModelId>,
    pub n: usize,
    pub noise_sd: f64,
    pub null_replications: usize,
    pub alt_replications: usize,
    pub bootstrap_resamples: usize,
    pub bandwidths: Vec<f64>,
    pub alphas: Vec<f64>,
    pub eta: f64,
    pub degree: usize,
    pub seed: u64,
    pub spec: TestSpec,
    pub grid: EvalGrid,
}

impl Default for McConfig {
    /// Desk-scale defaults: 500 null and 100 alternative replications.
    fn default() -> Self {
        Self {
            models: ModelId::ALL.to_vec(),
            n: 200,
            noise_sd: DEFAULT_NOISE_SD,
            null_replications: 500,
            alt_replications: 100,
            bootstrap_resamples: 200,
            bandwidths: vec![0.9, 1.0, 1.1],
            alphas: vec![0.10, 0.05, 0.01],
            eta: DEFAULT_MC_ETA,
            degree: 1,
            seed: 20150801,
            spec: TestSpec::single(2.0, Direction::NonNegative),
            grid: EvalGrid::default(),
        }
    }
}

impl McConfig {
    /// Replication counts of the published study (1000 null, 200 alternative).
    pub fn full_scale(mut self) -> Self {
        self.null_replications = 1000;
        self.alt_replications = 200;
        self
    }

    pub fn replications_for(&self, model: ModelId) -> usize {
        if model == ModelId::Null {
            self.null_replications
        } else {
            self.alt_replications
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidConfig(m.to_string()));
        if self.models.is_empty() || self.bandwidths.is_empty() || self.alphas.is_empty() {
            return bad("models, bandwidths and alphas must be nonempty");
        }
        if self.n == 0 || self.bootstrap_resamples == 0 {
            return bad("n and bootstrap_resamples must be positive");
        }
        if self.null_replications == 0 || self.alt_replications == 0 {
            return bad("replication counts must be positive");
        }
        if self.bandwidths.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return bad("bandwidths must be positive");
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return bad("alphas must lie in (0, 1)");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative");
        }
        if !(self.eta >= 0.0) {
            return bad("eta must be nonnegative");
        }
        if self.degree == 0 {
            return bad("degree must be at least 1");
        }
        self.spec.validate()?;
        Ok(())
    }

    fn fit_config(&self, h: f64) -> FitConfig {
        FitConfig {
            degree: self.degree,
            ..FitConfig::local_linear(h)
        }
    }
}

/// Outcome of one replication at every nominal level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub statistic: f64,
    pub critical_values: Vec<f64>,
    pub rejects: Vec<bool>,
}

/// Runs replication `rep` of cell `(model, h)`.
pub fn run_replication(
    config: &McConfig,
    model: ModelId,
    h: f64,
    rep: usize,
) -> Result<ReplicationOutcome, SimulationError> {
    let keys = [model.code(), h.to_bits(), rep as u64];
    let mut rng = substream(config.seed, &[TAG_DATA, keys[0], keys[1], keys[2]]);
    let dgp = DgpSpec {
        model,
        n: config.n,
        noise_sd: config.noise_sd,
    };
    let sample = generate(&dgp, &mut rng);
    let cfg = config.fit_config(h);
    let plan = BootstrapPlan::new(
        config.bootstrap_resamples,
        config.seed,
        stream_id(&[TAG_BOOT, keys[0], keys[1], keys[2]]),
    );
    let run = run_test(&sample, &config.grid, &cfg, &config.spec, &plan)?;
    decide_levels(run.statistic, &run.draws, &config.alphas, config.eta, h)
}

/// Decisions at every level from one shared draw vector.
pub fn decide_levels(
    statistic: f64,
    draws: &[f64],
    alphas: &[f64],
    eta: f64,
    h: f64,
) -> Result<ReplicationOutcome, SimulationError> {
    let mut critical_values = Vec::with_capacity(alphas.len());
    let mut rejects = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let out = decide(statistic, draws, alpha, eta, h)?;
        critical_values.push(out.critical_value);
        rejects.push(out.reject);
    }
    Ok(ReplicationOutcome {
        statistic,
        critical_values,
        rejects,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub model: ModelId,
    pub bandwidth: f64,
    pub replications: usize,
    /// Rejection counts, one per configured alpha.
    pub rejections: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub error: Option<String>,
}

impl McCell {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub cells: Vec<McCell>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl McReport {
    pub fn cell(&self, model: ModelId, bandwidth: f64) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.bandwidth == bandwidth)
    }

    /// Rejection frequency for `(model, h, alpha)`.
    pub fn frequency(&self, model: ModelId, bandwidth: f64, alpha: f64) -> Option<f64> {
        let ai = self.config.alphas.iter().position(|&a| a == alpha)?;
        let cell = self.cell(model, bandwidth)?;
        if cell.failed() {
            None
        } else {
            Some(cell.frequencies[ai])
        }
    }

    /// Table 1 layout: one row per bandwidth, one column per (model, alpha).
    pub fn table_csv(&self) -> String {
        let mut out = String::from("h");
        for m in &self.config.models {
            for a in &self.config.alphas {
                write!(out, ",{m}_{a}").unwrap();
            }
        }
        out.push('\n');
        for &h in &self.config.bandwidths {
            write!(out, "{h}").unwrap();
            for &m in &self.config.models {
                let cell = self.cell(m, h);
                for ai in 0..self.config.alphas.len() {
                    match cell {
                        Some(c) if !c.failed() => write!(out, ",{}", c.frequencies[ai]).unwrap(),
                        _ => out.push_str(",failed"),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width rendering for terminals, grouped by model.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for &m in &self.config.models {
            writeln!(out, "{m} (replications: {})", self.config.replications_for(m)).unwrap();
            write!(out, "{:>8}", "h").unwrap();
            for a in &self.config.alphas {
                write!(out, "{:>9}", format!("{a:.2}")).unwrap();
            }
            out.push('\n');
            for &h in &self.config.bandwidths {
                write!(out, "{h:>8.2}").unwrap();
                match self.cell(m, h) {
                    Some(c) if !c.failed() => {
                        for f in &c.frequencies {
                            write!(out, "{f:>9.3}").unwrap();
                        }
                    }
                    Some(c) => write!(out, "  failed: {}", c.error.as_deref().unwrap_or("")).unwrap(),
                    None => out.push_str("  missing"),
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

fn run_cell(config: &McConfig, model: ModelId, h: f64) -> McCell {
    let reps = config.replications_for(model);
    let outcomes: Vec<Result<ReplicationOutcome, SimulationError>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_replication(config, model, h, rep))
        .collect();
    let mut rejections = vec![0usize; config.alphas.len()];
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                for (count, r) in rejections.iter_mut().zip(o.rejects) {
                    *count += r as usize;
                }
            }
            Err(e) => {
                return McCell {
                    model,
                    bandwidth: h,
                    replications: reps,
                    rejections: Vec::new(),
                    frequencies: Vec::new(),
                    error: Some(format!("replication {rep}: {e}")),
                }
            }
        }
    }
    let frequencies = rejections.iter().map(|&k| k as f64 / reps as f64).collect();
    McCell {
        model,
        bandwidth: h,
        replications: reps,
        rejections,
        frequencies,
        error: None,
    }
}

/// Runs every `(model, bandwidth)` cell.
pub fn run_mc(config: &McConfig) -> Result<McReport, SimulationError> {
    config.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for &model in &config.models {
        for &h in &config.bandwidths {
            let cell = run_cell(config, model, h);
            if let Some(e) = &cell.error {
                log::error!("cell ({model}, h={h}) failed: {e}");
            }
            cells.push(cell);
        }
    }
    Ok(McReport {
        config: config.clone(),
        cells,
        runtime: start.elapsed(),
    })
}

/// Simulated points `(x, y, m(x))` for plotting a model.
pub fn scatter(model: ModelId, n: usize, noise_sd: f64, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = substream(seed, &[TAG_SCATTER, model.code()]);
    let sample = generate(&DgpSpec { model, n, noise_sd }, &mut rng);
    (0..sample.len())
        .map(|i| {
            let x = sample.covariate(i)[0];
            (x, sample.outcomes(i)[0], mean_function(model, x))
        })
        .collect()
}
