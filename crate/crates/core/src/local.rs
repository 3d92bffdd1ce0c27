//! Local polynomial quantile regression.
//!
//! At an evaluation point `x` the estimator minimizes
//! `sum_i 1{L_i = k} sum_{l <= L_i} l_tau(B_li - g' c((X_i - x)/h)) K((x - X_i)/h)`
//! over `g`. The minimizer lives in bandwidth-scaled units, `H gamma(x)`; fits
//! are reported in derivative units by applying `H^{-1}`, so entry `u` of
//! `gamma_hat` estimates `D^u q_k(tau|x) / u!`.

use crate::basis::{self, BasisError, Kernel, MultiIndexSet, ScaleMatrix};
use crate::grid::EvalGrid;
use crate::solver::{self, SolveError, WeightedQrProblem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("{found} observations in the kernel window, need at least {required}")]
    InsufficientSupport { found: usize, required: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("derivative extraction needs a scalar covariate, sample has dimension {0}")]
    NotUnivariate(usize),
    #[error("fit failed at grid node x={x}, tau={tau}: {source}")]
    AtNode {
        x_index: usize,
        tau_index: usize,
        x: f64,
        tau: f64,
        #[source]
        source: Box<LocalError>,
    },
}

/// Observations `(B_i, X_i, L_i)`. Row `i` of the outcome block has `max_outcomes`
/// slots of which the first `counts[i]` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    outcomes: Vec<f64>,
    max_outcomes: usize,
    covariates: Vec<f64>,
    dim: usize,
    counts: Vec<usize>,
}

impl Sample {
    pub fn new(
        outcomes: Vec<f64>,
        max_outcomes: usize,
        covariates: Vec<f64>,
        dim: usize,
        counts: Vec<usize>,
    ) -> Result<Self, LocalError> {
        let n = counts.len();
        if n == 0 {
            return Err(LocalError::InvalidSample("no observations".into()));
        }
        if max_outcomes == 0 || dim == 0 {
            return Err(LocalError::InvalidSample("zero outcome or covariate width".into()));
        }
        if outcomes.len() != n * max_outcomes || covariates.len() != n * dim {
            return Err(LocalError::InvalidSample(format!(
                "{n} observations but {} outcome and {} covariate entries",
                outcomes.len(),
                covariates.len()
            )));
        }
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 || c > max_outcomes {
                return Err(LocalError::InvalidSample(format!(
                    "observation {i} has outcome count {c}, allowed 1..={max_outcomes}"
                )));
            }
            let used = &outcomes[i * max_outcomes..i * max_outcomes + c];
            let x = &covariates[i * dim..(i + 1) * dim];
            if used.iter().chain(x).any(|v| !v.is_finite()) {
                return Err(LocalError::InvalidSample(format!("observation {i} is not finite")));
            }
        }
        Ok(Self {
            outcomes,
            max_outcomes,
            covariates,
            dim,
            counts,
        })
    }

    /// Scalar outcome, scalar covariate.
    pub fn scalar(y: Vec<f64>, x: Vec<f64>) -> Result<Self, LocalError> {
        let n = y.len();
        if x.len() != n {
            return Err(LocalError::InvalidSample(format!("{n} outcomes but {} covariates", x.len())));
        }
        Self::new(y, 1, x, 1, vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_outcomes(&self) -> usize {
        self.max_outcomes
    }

    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }

    pub fn covariate(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.dim..(i + 1) * self.dim]
    }

    /// The used outcomes `B_{1i}, ..., B_{L_i i}` of observation `i`.
    pub fn outcomes(&self, i: usize) -> &[f64] {
        let start = i * self.max_outcomes;
        &self.outcomes[start..start + self.counts[i]]
    }

    /// First outcome of every observation.
    pub fn first_outcomes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.outcomes[i * self.max_outcomes]).collect()
    }

    /// Rows picked by index, with repetition allowed.
    pub fn select(&self, rows: &[usize]) -> Sample {
        let mut outcomes = Vec::with_capacity(rows.len() * self.max_outcomes);
        let mut covariates = Vec::with_capacity(rows.len() * self.dim);
        let mut counts = Vec::with_capacity(rows.len());
        for &i in rows {
            outcomes.extend_from_slice(&self.outcomes[i * self.max_outcomes..(i + 1) * self.max_outcomes]);
            covariates.extend_from_slice(self.covariate(i));
            counts.push(self.counts[i]);
        }
        Sample {
            outcomes,
            max_outcomes: self.max_outcomes,
            covariates,
            dim: self.dim,
            counts,
        }
    }

    /// Copy with every used outcome mapped through `f`.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Sample {
        let mut out = self.clone();
        for i in 0..self.len() {
            let start = i * self.max_outcomes;
            for v in &mut out.outcomes[start..start + self.counts[i]] {
                *v = f(*v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub degree: usize,
    pub bandwidth: f64,
    #[serde(default)]
    pub kernel: Kernel,
    /// Outcome class `k`, 1-based.
    #[serde(default = "default_class")]
    pub outcome_class: usize,
}

fn default_class() -> usize {
    1
}

impl FitConfig {
    /// Local linear fit with the uniform kernel on class 1.
    pub fn local_linear(bandwidth: f64) -> Self {
        Self {
            degree: 1,
            bandwidth,
            kernel: Kernel::Uniform,
            outcome_class: 1,
        }
    }

    pub fn validate(&self, max_outcomes: usize) -> Result<(), LocalError> {
        if self.degree == 0 {
            return Err(LocalError::InvalidConfig("degree must be at least 1".into()));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(LocalError::InvalidConfig(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.outcome_class == 0 || self.outcome_class > max_outcomes {
            return Err(LocalError::InvalidConfig(format!(
                "outcome class {} outside 1..={max_outcomes}",
                self.outcome_class
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub x: Vec<f64>,
    pub tau: f64,
    /// Coefficients in derivative units; entry 0 is the quantile level.
    pub gamma_hat: Vec<f64>,
    /// Observations with positive kernel weight.
    pub effective_n: usize,
}

/// Reusable fitting context for one sample dimension and configuration.
#[derive(Debug, Clone)]
pub struct LocalFitter {
    cfg: FitConfig,
    set: MultiIndexSet,
    scale: ScaleMatrix,
}

impl LocalFitter {
    pub fn new(dim: usize, cfg: FitConfig) -> Result<Self, LocalError> {
        let set = basis::multi_indices(dim, cfg.degree)?;
        let scale = basis::scale_matrix(&set, cfg.bandwidth)?;
        Ok(Self { cfg, set, scale })
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn scale(&self) -> &ScaleMatrix {
        &self.scale
    }

    /// Assembles the kernel-weighted problem at `(x, tau)`, keeping only rows
    /// with positive weight. Returns the problem and the number of observations.
    pub fn assemble(&self, sample: &Sample, x: &[f64], tau: f64) -> (WeightedQrProblem, usize) {
        let p = self.set.len();
        let h = self.cfg.bandwidth;
        let dim = sample.dim();
        let mut responses = Vec::new();
        let mut design = Vec::new();
        let mut weights = Vec::new();
        let mut t = vec![0.0; dim];
        let mut z = vec![0.0; dim];
        let mut row = vec![0.0; p];
        let mut observations = 0;
        for i in 0..sample.len() {
            if sample.count(i) != self.cfg.outcome_class {
                continue;
            }
            let xi = sample.covariate(i);
            for m in 0..dim {
                t[m] = (x[m] - xi[m]) / h;
            }
            let weight = self.cfg.kernel.eval(&t);
            if weight <= 0.0 {
                continue;
            }
            for m in 0..dim {
                z[m] = (xi[m] - x[m]) / h;
            }
            basis::basis_eval_into(&self.set, &z, &mut row);
            observations += 1;
            for &b in sample.outcomes(i) {
                responses.push(b);
                design.extend_from_slice(&row);
                weights.push(weight);
            }
        }
        (WeightedQrProblem::new(responses, design, p, weights, tau), observations)
    }

    pub fn fit(&self, sample: &Sample, x: &[f64], tau: f64) -> Result<LocalFit, LocalError> {
        if x.len() != sample.dim() {
            return Err(LocalError::InvalidSample(format!(
                "evaluation point has dimension {}, sample {}",
                x.len(),
                sample.dim()
            )));
        }
        self.cfg.validate(sample.max_outcomes())?;
        let (problem, observations) = self.assemble(sample, x, tau);
        if problem.nrows() < self.set.len() {
            return Err(LocalError::InsufficientSupport {
                found: observations,
                required: self.set.len(),
            });
        }
        let solution = solver::solve(&problem)?;
        Ok(LocalFit {
            x: x.to_vec(),
            tau,
            gamma_hat: self.scale.apply_inverse(&solution.coefficients),
            effective_n: observations,
        })
    }
}

/// Local polynomial quantile fit at one `(x, tau)`.
pub fn fit_local(sample: &Sample, x: &[f64], tau: f64, cfg: &FitConfig) -> Result<LocalFit, LocalError> {
    LocalFitter::new(sample.dim(), *cfg)?.fit(sample, x, tau)
}

/// First-derivative estimate `e_2' gamma_hat` of a univariate fit.
pub fn derivative_estimate(fit: &LocalFit) -> Result<f64, LocalError> {
    if fit.x.len() != 1 {
        return Err(LocalError::NotUnivariate(fit.x.len()));
    }
    Ok(fit.gamma_hat[1])
}

/// Fits on every grid node, stored x-major: entry `xi * n_tau + ti`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFits {
    x_nodes: Vec<f64>,
    tau_nodes: Vec<f64>,
    fits: Vec<LocalFit>,
}

impl GridFits {
    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn tau_nodes(&self) -> &[f64] {
        &self.tau_nodes
    }

    pub fn fits(&self) -> &[LocalFit] {
        &self.fits
    }

    pub fn get(&self, x_index: usize, tau_index: usize) -> Option<&LocalFit> {
        if x_index < self.x_nodes.len() && tau_index < self.tau_nodes.len() {
            self.fits.get(x_index * self.tau_nodes.len() + tau_index)
        } else {
            None
        }
    }

    /// Derivative estimates in the same x-major layout.
    pub fn derivatives(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.gamma_hat[1]).collect()
    }
}

/// Fits every node of a univariate grid. Nodes are solved in parallel and
/// assembled by index; the first failing node (in grid order) is reported.
pub fn fit_grid(sample: &Sample, grid: &EvalGrid, cfg: &FitConfig) -> Result<GridFits, LocalError> {
    if sample.dim() != 1 {
        return Err(LocalError::NotUnivariate(sample.dim()));
    }
    let fitter = LocalFitter::new(1, *cfg)?;
    let n_tau = grid.tau_nodes().len();
    let results: Vec<Result<LocalFit, LocalError>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let (xi, ti) = (node / n_tau, node % n_tau);
            let (x, tau) = (grid.x_nodes()[xi], grid.tau_nodes()[ti]);
            fitter.fit(sample, &[x], tau).map_err(|e| LocalError::AtNode {
                x_index: xi,
                tau_index: ti,
                x,
                tau,
                source: Box::new(e),
            })
        })
        .collect();
    let fits = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(GridFits {
        x_nodes: grid.x_nodes().to_vec(),
        tau_nodes: grid.tau_nodes().to_vec(),
        fits,
    })
}
