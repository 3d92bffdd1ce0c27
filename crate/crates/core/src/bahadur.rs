//! Population objects of the uniform Bahadur representation and empirical
//! remainder studies under models with known quantile functions.
//!
//! For an evaluation point `x` and level `tau` the representation compares
//! `sqrt(n h^d) H (gamma_hat - gamma)` with `-M^{-1} psi`, where
//! `psi = -(n h^d)^{-1/2} sum_i 1{L_i = k} sum_l score(resid) c_{h,x,i} K_{h,x,i}`.
//! The minus sign in `psi` makes `-M^{-1} psi` the leading term, so the
//! remainder is `|| sqrt(n h^d) H (gamma_hat - gamma) + M^{-1} (psi - E psi) ||`.

use crate::basis::{basis_eval_into, multi_indices, scale_matrix, BasisError, Kernel, MultiIndexSet};
use crate::bootstrap::resample;
use crate::grid::EvalGrid;
use crate::linalg::Lu;
use crate::local::{FitConfig, LocalError, LocalFitter, Sample};
use crate::quadrature::{integrate_box, QuadratureError};
use crate::rng::{substream, StreamRng};
use crate::solver::psi as score;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::io::Write;
use thiserror::Error;

/// Absolute tolerance for the `M` and `E psi` integrals.
pub const QUAD_TOL: f64 = 1e-8;

const TAG_SAMPLE: u64 = 0x6261_6861;
const TAG_RESAMPLE: u64 = 0x6273_7472;

#[derive(Debug, Error)]
pub enum BahadurError {
    #[error(transparent)]
    Fit(#[from] LocalError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("M matrix is singular at x={x:?}, tau={tau}")]
    SingularM { x: Vec<f64>, tau: f64 },
    #[error("dimension mismatch: model has {model}, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
}

/// A data-generating law with closed-form conditional quantiles.
///
/// Errors are `eps = B - q_k(tau|X)`, sharing one conditional law across the
/// `k` outcomes of a class-`k` observation.
pub trait TrueModel: Sync {
    fn dim(&self) -> usize;

    /// `q_k(tau | x)`.
    fn quantile(&self, tau: f64, x: &[f64], k: usize) -> f64;

    /// `D^u q_k(tau | x) / u!` for every `u` in `set`.
    fn gamma(&self, tau: f64, x: &[f64], k: usize, set: &MultiIndexSet) -> Vec<f64>;

    fn covariate_density(&self, x: &[f64]) -> f64;

    /// Per-coordinate support interval of the covariate.
    fn covariate_support(&self) -> Vec<(f64, f64)>;

    fn class_prob(&self, k: usize, x: &[f64]) -> f64;

    /// `f_{tau,k}(0 | x)`, the density of `eps` at zero.
    fn error_density_at_zero(&self, tau: f64, x: &[f64], k: usize) -> f64;

    /// `P(eps <= e | X = x)`.
    fn error_cdf(&self, e: f64, tau: f64, x: &[f64], k: usize) -> f64;

    fn draw(&self, n: usize, rng: &mut StreamRng) -> Sample;
}

/// `Y = a + b X + (s0 + s1 X) Z` with `X ~ Unif[0, 1]`, `Z ~ N(0, 1)`, one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationScaleModel {
    pub intercept: f64,
    pub slope: f64,
    pub scale0: f64,
    pub scale1: f64,
}

impl Default for LocationScaleModel {
    /// `Y = X + 0.5 Z`.
    fn default() -> Self {
        Self {
            intercept: 0.0,
            slope: 1.0,
            scale0: 0.5,
            scale1: 0.0,
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl LocationScaleModel {
    pub fn validate(&self) -> Result<(), BahadurError> {
        let fields = [self.intercept, self.slope, self.scale0, self.scale1];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(BahadurError::InvalidConfig("model parameters must be finite".into()));
        }
        if self.scale0 <= 0.0 || self.scale0 + self.scale1 <= 0.0 {
            return Err(BahadurError::InvalidConfig(
                "scale must be positive on [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn scale(&self, x: f64) -> f64 {
        self.scale0 + self.scale1 * x
    }

    fn z(tau: f64) -> f64 {
        std_normal().inverse_cdf(tau)
    }
}

impl TrueModel for LocationScaleModel {
    fn dim(&self) -> usize {
        1
    }

    fn quantile(&self, tau: f64, x: &[f64], _k: usize) -> f64 {
        self.intercept + self.slope * x[0] + self.scale(x[0]) * Self::z(tau)
    }

    fn gamma(&self, tau: f64, x: &[f64], k: usize, set: &MultiIndexSet) -> Vec<f64> {
        let slope = self.slope + self.scale1 * Self::z(tau);
        (0..set.len())
            .map(|pos| match set.order(pos) {
                0 => self.quantile(tau, x, k),
                1 => slope,
                _ => 0.0,
            })
            .collect()
    }

    fn covariate_density(&self, x: &[f64]) -> f64 {
        if (0.0..=1.0).contains(&x[0]) {
            1.0
        } else {
            0.0
        }
    }

    fn covariate_support(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0)]
    }

    fn class_prob(&self, k: usize, _x: &[f64]) -> f64 {
        if k == 1 {
            1.0
        } else {
            0.0
        }
    }

    fn error_density_at_zero(&self, tau: f64, x: &[f64], _k: usize) -> f64 {
        std_normal().pdf(Self::z(tau)) / self.scale(x[0])
    }

    fn error_cdf(&self, e: f64, tau: f64, x: &[f64], _k: usize) -> f64 {
        std_normal().cdf(Self::z(tau) + e / self.scale(x[0]))
    }

    fn draw(&self, n: usize, rng: &mut StreamRng) -> Sample {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            xs.push(x);
            ys.push(self.intercept + self.slope * x + self.scale(x) * z);
        }
        Sample::scalar(ys, xs).expect("finite draws")
    }
}

fn check_dims(model: &dyn TrueModel, sample_dim: usize, x: &[f64]) -> Result<(), BahadurError> {
    for input in [sample_dim, x.len()] {
        if input != model.dim() {
            return Err(BahadurError::DimensionMismatch {
                model: model.dim(),
                input,
            });
        }
    }
    Ok(())
}

/// Shared score sum: `-(n h^d)^{-1/2} sum_i 1{L_i=k} sum_l score(resid(i, B_li)) c K`.
fn score_sum(
    sample: &Sample,
    x: &[f64],
    tau: f64,
    cfg: &FitConfig,
    set: &MultiIndexSet,
    mut resid: impl FnMut(&[f64], &[f64], f64) -> f64,
) -> Vec<f64> {
    let d = sample.dim();
    let h = cfg.bandwidth;
    let p = set.len();
    let mut out = vec![0.0; p];
    let mut t = vec![0.0; d];
    let mut c = vec![0.0; p];
    for i in 0..sample.len() {
        if sample.count(i) != cfg.outcome_class {
            continue;
        }
        let xi = sample.covariate(i);
        for m in 0..d {
            t[m] = (xi[m] - x[m]) / h;
        }
        let w = cfg.kernel.eval(&t);
        if w == 0.0 {
            continue;
        }
        basis_eval_into(set, &t, &mut c);
        for &b in sample.outcomes(i) {
            let s = score(resid(xi, &t, b), tau) * w;
            for (o, cj) in out.iter_mut().zip(&c) {
                *o += s * cj;
            }
        }
    }
    let norm = -1.0 / (sample.len() as f64 * h.powi(d as i32)).sqrt();
    out.iter_mut().for_each(|v| *v *= norm);
    out
}

/// Score with residuals `B - gamma(x)' c(X - x)` from the true local polynomial.
pub fn psi(
    sample: &Sample,
    x: &[f64],
    tau: f64,
    cfg: &FitConfig,
    model: &dyn TrueModel,
) -> Result<Vec<f64>, BahadurError> {
    check_dims(model, sample.dim(), x)?;
    cfg.validate(sample.max_outcomes())?;
    let set = multi_indices(sample.dim(), cfg.degree)?;
    let scaled = scale_matrix(&set, cfg.bandwidth)?.apply(&model.gamma(tau, x, cfg.outcome_class, &set));
    let mut c = vec![0.0; set.len()];
    Ok(score_sum(sample, x, tau, cfg, &set, |_, t, b| {
        basis_eval_into(&set, t, &mut c);
        b - scaled.iter().zip(&c).map(|(g, v)| g * v).sum::<f64>()
    }))
}

/// Score with residuals `B - q_k(tau | X)`; conditionally centered given `X`.
pub fn psi_tilde(
    sample: &Sample,
    x: &[f64],
    tau: f64,
    cfg: &FitConfig,
    model: &dyn TrueModel,
) -> Result<Vec<f64>, BahadurError> {
    check_dims(model, sample.dim(), x)?;
    cfg.validate(sample.max_outcomes())?;
    let set = multi_indices(sample.dim(), cfg.degree)?;
    let k = cfg.outcome_class;
    Ok(score_sum(sample, x, tau, cfg, &set, |xi, _, b| b - model.quantile(tau, xi, k)))
}

/// Integration box `[-1/2, 1/2]^d` with breakpoints where `x + t h` leaves the support.
fn window(model: &dyn TrueModel, x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let r = Kernel::SUPPORT_RADIUS;
    let d = model.dim();
    let breaks = model
        .covariate_support()
        .iter()
        .zip(x)
        .map(|(&(lo, hi), &xm)| vec![(lo - xm) / h, (hi - xm) / h])
        .collect();
    (vec![-r; d], vec![r; d], breaks)
}

/// `M = k int P{L=k | x+th} f_tau(0 | x+th) f(x+th) K(t) c(t) c(t)' dt`, row-major.
pub fn m_matrix(x: &[f64], tau: f64, cfg: &FitConfig, model: &dyn TrueModel) -> Result<Vec<f64>, BahadurError> {
    check_dims(model, x.len(), x)?;
    let set = multi_indices(model.dim(), cfg.degree)?;
    let p = set.len();
    let k = cfg.outcome_class;
    let h = cfg.bandwidth;
    let (lo, hi, breaks) = window(model, x, h);
    let tri = p * (p + 1) / 2;
    let upper = integrate_box(
        |t, out| {
            let w = cfg.kernel.eval(t);
            if w == 0.0 {
                return;
            }
            let z: Vec<f64> = x.iter().zip(t).map(|(xm, tm)| xm + tm * h).collect();
            let f = model.covariate_density(&z);
            if f == 0.0 {
                return;
            }
            let scale = k as f64 * model.class_prob(k, &z) * model.error_density_at_zero(tau, &z, k) * f * w;
            let mut c = vec![0.0; p];
            basis_eval_into(&set, t, &mut c);
            let mut idx = 0;
            for a in 0..p {
                for b in a..p {
                    out[idx] = scale * c[a] * c[b];
                    idx += 1;
                }
            }
        },
        &lo,
        &hi,
        &breaks,
        tri,
        QUAD_TOL,
    )?;
    let mut m = vec![0.0; p * p];
    let mut idx = 0;
    for a in 0..p {
        for b in a..p {
            m[a * p + b] = upper[idx];
            m[b * p + a] = upper[idx];
            idx += 1;
        }
    }
    Ok(m)
}

/// `E psi` for sample size `n`, by quadrature over the kernel window.
pub fn psi_mean(
    n: usize,
    x: &[f64],
    tau: f64,
    cfg: &FitConfig,
    model: &dyn TrueModel,
) -> Result<Vec<f64>, BahadurError> {
    check_dims(model, x.len(), x)?;
    let d = model.dim();
    let set = multi_indices(d, cfg.degree)?;
    let p = set.len();
    let k = cfg.outcome_class;
    let h = cfg.bandwidth;
    let scaled = scale_matrix(&set, h)?.apply(&model.gamma(tau, x, k, &set));
    let (lo, hi, breaks) = window(model, x, h);
    let integral = integrate_box(
        |t, out| {
            let w = cfg.kernel.eval(t);
            if w == 0.0 {
                return;
            }
            let z: Vec<f64> = x.iter().zip(t).map(|(xm, tm)| xm + tm * h).collect();
            let f = model.covariate_density(&z);
            if f == 0.0 {
                return;
            }
            let mut c = vec![0.0; p];
            basis_eval_into(&set, t, &mut c);
            let local: f64 = scaled.iter().zip(&c).map(|(g, v)| g * v).sum();
            // E[score(B - local) | z] = tau - P(B <= local | z)
            let gap = tau - model.error_cdf(local - model.quantile(tau, &z, k), tau, &z, k);
            let s = k as f64 * model.class_prob(k, &z) * f * w * gap;
            for (o, cj) in out.iter_mut().zip(&c) {
                *o = s * cj;
            }
        },
        &lo,
        &hi,
        &breaks,
        p,
        QUAD_TOL,
    )?;
    let factor = -(n as f64 * h.powi(d as i32)).sqrt();
    Ok(integral.into_iter().map(|v| v * factor).collect())
}

fn solve_m(m: &[f64], p: usize, v: &[f64], x: &[f64], tau: f64) -> Result<Vec<f64>, BahadurError> {
    let lu = Lu::factor(m, p, 1e-12).ok_or_else(|| BahadurError::SingularM { x: x.to_vec(), tau })?;
    Ok(lu.solve(v))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Remainder `|| lhs + M^{-1} score ||`.
fn remainder(lhs: &[f64], m: &[f64], score: &[f64], x: &[f64], tau: f64) -> Result<f64, BahadurError> {
    let lead = solve_m(m, lhs.len(), score, x, tau)?;
    let diff: Vec<f64> = lhs.iter().zip(&lead).map(|(a, b)| a + b).collect();
    Ok(norm(&diff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemainderVariant {
    /// `psi - E psi` with the true local polynomial residuals.
    Theorem1,
    /// Conditionally centered `psi_tilde`.
    Corollary1,
    /// Bootstrap: `gamma_hat* - gamma_hat` against `psi* - E* psi*`.
    Theorem2,
}

impl RemainderVariant {
    pub fn label(self) -> &'static str {
        match self {
            RemainderVariant::Theorem1 => "theorem1",
            RemainderVariant::Corollary1 => "corollary1",
            RemainderVariant::Theorem2 => "theorem2",
        }
    }
}

/// Bandwidth `h = constant * n^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub constant: f64,
    pub exponent: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        Self {
            constant: 1.0,
            exponent: 0.2,
        }
    }
}

impl BandwidthRule {
    pub fn at(&self, n: usize) -> f64 {
        self.constant * (n as f64).powf(-self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub bandwidth: BandwidthRule,
    pub degree: usize,
    pub grid: EvalGrid,
    pub variants: Vec<RemainderVariant>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let x: Vec<f64> = (0..9).map(|j| 0.2 + 0.075 * j as f64).collect();
        let grid = EvalGrid::new(x, vec![1.0; 9], vec![0.25, 0.5, 0.75], vec![1.0; 3])
            .expect("default study grid is valid");
        Self {
            n_values: vec![500, 2000, 8000],
            replications: 20,
            bandwidth: BandwidthRule::default(),
            degree: 1,
            grid,
            variants: vec![
                RemainderVariant::Theorem1,
                RemainderVariant::Corollary1,
                RemainderVariant::Theorem2,
            ],
            seed: 7,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), BahadurError> {
        let bad = |m: &str| Err(BahadurError::InvalidConfig(m.to_string()));
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n_values must be nonempty and positive");
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be increasing");
        }
        if self.replications == 0 {
            return bad("replications must be positive");
        }
        if !(self.bandwidth.constant > 0.0 && self.bandwidth.exponent.is_finite()) {
            return bad("bandwidth rule must have a positive constant");
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        if self.degree == 0 {
            return bad("degree must be at least 1");
        }
        Ok(())
    }
}

/// Envelope `sqrt(log n) / (n^{1/4} h^{d/4})`.
pub fn envelope(n: usize, h: f64, d: usize) -> f64 {
    (n as f64).ln().sqrt() / ((n as f64).powf(0.25) * h.powf(d as f64 / 4.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub variant: RemainderVariant,
    pub n: usize,
    pub replication: usize,
    pub sup_remainder: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub rows: Vec<RemainderRow>,
}

impl RemainderReport {
    /// Per-n `(n, median sup remainder, envelope)` for one variant.
    pub fn medians(&self, variant: RemainderVariant) -> Vec<(usize, f64, f64)> {
        let mut ns: Vec<usize> = self.rows.iter().filter(|r| r.variant == variant).map(|r| r.n).collect();
        ns.dedup();
        ns.into_iter()
            .map(|n| {
                let mut v: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.variant == variant && r.n == n)
                    .map(|r| r.sup_remainder)
                    .collect();
                let env = self
                    .rows
                    .iter()
                    .find(|r| r.variant == variant && r.n == n)
                    .map(|r| r.envelope)
                    .unwrap_or(f64::NAN);
                (n, median(&mut v), env)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "n", "replication", "sup_remainder", "envelope"])?;
        for r in &self.rows {
            w.write_record([
                r.variant.label().to_string(),
                r.n.to_string(),
                r.replication.to_string(),
                format!("{:e}", r.sup_remainder),
                format!("{:e}", r.envelope),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sup over the grid of each requested remainder for one sample (and one resample).
pub fn sup_remainders(
    sample: &Sample,
    star: Option<&Sample>,
    cfg: &FitConfig,
    grid: &EvalGrid,
    model: &dyn TrueModel,
    variants: &[RemainderVariant],
) -> Result<Vec<f64>, BahadurError> {
    let d = sample.dim();
    let n = sample.len();
    let fitter = LocalFitter::new(d, *cfg)?;
    let root = (n as f64 * cfg.bandwidth.powi(d as i32)).sqrt();
    let k = cfg.outcome_class;
    let mut sups = vec![0.0f64; variants.len()];
    for &x0 in grid.x_nodes() {
        let x = [x0];
        for &tau in grid.tau_nodes() {
            let fit = fitter.fit(sample, &x, tau)?;
            let gamma = model.gamma(tau, &x, k, fitter.basis());
            let diff: Vec<f64> = fit.gamma_hat.iter().zip(&gamma).map(|(a, b)| a - b).collect();
            let lhs: Vec<f64> = fitter.scale().apply(&diff).into_iter().map(|v| v * root).collect();
            let m = m_matrix(&x, tau, cfg, model)?;
            let psi_raw = psi(sample, &x, tau, cfg, model)?;
            for (slot, &variant) in sups.iter_mut().zip(variants) {
                let r = match variant {
                    RemainderVariant::Theorem1 => {
                        let mean = psi_mean(n, &x, tau, cfg, model)?;
                        let centered: Vec<f64> = psi_raw.iter().zip(&mean).map(|(a, b)| a - b).collect();
                        remainder(&lhs, &m, &centered, &x, tau)?
                    }
                    RemainderVariant::Corollary1 => {
                        remainder(&lhs, &m, &psi_tilde(sample, &x, tau, cfg, model)?, &x, tau)?
                    }
                    RemainderVariant::Theorem2 => {
                        let star = star.ok_or_else(|| {
                            BahadurError::InvalidConfig("bootstrap variant needs a resample".into())
                        })?;
                        let fit_star = fitter.fit(star, &x, tau)?;
                        let bdiff: Vec<f64> =
                            fit_star.gamma_hat.iter().zip(&fit.gamma_hat).map(|(a, b)| a - b).collect();
                        let blhs: Vec<f64> = fitter.scale().apply(&bdiff).into_iter().map(|v| v * root).collect();
                        // E* psi* is psi on the original sample
                        let psi_star = psi(star, &x, tau, cfg, model)?;
                        let centered: Vec<f64> = psi_star.iter().zip(&psi_raw).map(|(a, b)| a - b).collect();
                        remainder(&blhs, &m, &centered, &x, tau)?
                    }
                };
                *slot = slot.max(r);
            }
        }
    }
    Ok(sups)
}

/// Runs every `(n, replication)` pair in parallel; rows are ordered by n, replication, variant.
pub fn remainder_study(model: &dyn TrueModel, study: &StudyConfig) -> Result<RemainderReport, BahadurError> {
    study.validate()?;
    if model.dim() != 1 {
        return Err(BahadurError::DimensionMismatch {
            model: model.dim(),
            input: 1,
        });
    }
    let jobs: Vec<(usize, usize)> = study
        .n_values
        .iter()
        .flat_map(|&n| (0..study.replications).map(move |r| (n, r)))
        .collect();
    let wants_star = study.variants.contains(&RemainderVariant::Theorem2);
    let results: Vec<Result<Vec<RemainderRow>, BahadurError>> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let h = study.bandwidth.at(n);
            let cfg = FitConfig {
                degree: study.degree,
                ..FitConfig::local_linear(h)
            };
            let mut rng = substream(study.seed, &[TAG_SAMPLE, n as u64, rep as u64]);
            let sample = model.draw(n, &mut rng);
            let star = wants_star.then(|| {
                let mut rng = substream(study.seed, &[TAG_RESAMPLE, n as u64, rep as u64]);
                resample(&sample, &mut rng)
            });
            let sups = sup_remainders(&sample, star.as_ref(), &cfg, &study.grid, model, &study.variants)?;
            let env = envelope(n, h, model.dim());
            Ok(study
                .variants
                .iter()
                .zip(sups)
                .map(|(&variant, sup)| RemainderRow {
                    variant,
                    n,
                    replication: rep,
                    sup_remainder: sup,
                    envelope: env,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(RemainderReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat;

    // all model functions identically one on the window
    impl TrueModel for Flat {
        fn dim(&self) -> usize {
            1
        }
        fn quantile(&self, _: f64, _: &[f64], _: usize) -> f64 {
            0.0
        }
        fn gamma(&self, _: f64, _: &[f64], _: usize, set: &MultiIndexSet) -> Vec<f64> {
            vec![0.0; set.len()]
        }
        fn covariate_density(&self, _: &[f64]) -> f64 {
            1.0
        }
        fn covariate_support(&self) -> Vec<(f64, f64)> {
            vec![(-10.0, 10.0)]
        }
        fn class_prob(&self, _: usize, _: &[f64]) -> f64 {
            1.0
        }
        fn error_density_at_zero(&self, _: f64, _: &[f64], _: usize) -> f64 {
            1.0
        }
        fn error_cdf(&self, e: f64, _: f64, _: &[f64], _: usize) -> f64 {
            (e + 0.5).clamp(0.0, 1.0)
        }
        fn draw(&self, _: usize, _: &mut StreamRng) -> Sample {
            unimplemented!()
        }
    }

    #[test]
    fn m_matrix_uniform_moments() {
        let m = m_matrix(&[0.0], 0.5, &FitConfig::local_linear(0.3), &Flat).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!(m[1].abs() < 1e-12 && m[2].abs() < 1e-12);
        assert!((m[3] - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn m_matrix_respects_support_edges() {
        // x = 0.05, h = 0.2: window covers t in [-0.25, 0.5] of the unit support
        let model = LocationScaleModel {
            scale0: 1.0,
            slope: 0.0,
            ..LocationScaleModel::default()
        };
        let cfg = FitConfig::local_linear(0.2);
        let m = m_matrix(&[0.05], 0.5, &cfg, &model).unwrap();
        let f0 = std_normal().pdf(0.0);
        let (a, b) = (-0.25f64, 0.5f64);
        assert!((m[0] - f0 * (b - a)).abs() < 1e-10);
        assert!((m[1] - f0 * (b * b - a * a) / 2.0).abs() < 1e-10);
        assert!((m[3] - f0 * (b.powi(3) - a.powi(3)) / 3.0).abs() < 1e-10);
        assert_eq!(m[1], m[2]);
    }

    #[test]
    fn empty_window_scores_vanish() {
        let s = Sample::scalar(vec![1.0, 2.0], vec![0.9, 0.95]).unwrap();
        let cfg = FitConfig::local_linear(0.2);
        let model = LocationScaleModel::default();
        assert_eq!(psi(&s, &[0.1], 0.5, &cfg, &model).unwrap(), vec![0.0, 0.0]);
        assert_eq!(psi_tilde(&s, &[0.1], 0.5, &cfg, &model).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_observation_closed_form() {
        let model = LocationScaleModel::default();
        let cfg = FitConfig::local_linear(0.5);
        let tau = 0.3;
        let q = model.quantile(tau, &[0.4], 1);
        let s = Sample::scalar(vec![q - 1.0], vec![0.4]).unwrap();
        let v = psi_tilde(&s, &[0.4], tau, &cfg, &model).unwrap();
        let expected = -(tau - 1.0) / (0.5f64).sqrt();
        assert!((v[0] - expected).abs() < 1e-14);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn psi_and_psi_tilde_agree_for_linear_quantiles() {
        let model = LocationScaleModel {
            scale1: 0.3,
            ..LocationScaleModel::default()
        };
        let mut rng = substream(4, &[4]);
        let s = model.draw(300, &mut rng);
        let cfg = FitConfig::local_linear(0.4);
        for tau in [0.25, 0.5, 0.8] {
            let a = psi(&s, &[0.5], tau, &cfg, &model).unwrap();
            let b = psi_tilde(&s, &[0.5], tau, &cfg, &model).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
            let mean = psi_mean(300, &[0.5], tau, &cfg, &model).unwrap();
            assert!(mean.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn singleton_grid_sup_is_pointwise() {
        let model = LocationScaleModel::default();
        let study = StudyConfig {
            n_values: vec![500],
            replications: 2,
            grid: EvalGrid::single(0.5, 1.0, 0.5, 1.0).unwrap(),
            variants: vec![RemainderVariant::Corollary1],
            ..StudyConfig::default()
        };
        let report = remainder_study(&model, &study).unwrap();
        assert_eq!(report.rows.len(), 2);
        let mut rng = substream(study.seed, &[TAG_SAMPLE, 500, 0]);
        let sample = model.draw(500, &mut rng);
        let cfg = FitConfig::local_linear(study.bandwidth.at(500));
        let fitter = LocalFitter::new(1, cfg).unwrap();
        let fit = fitter.fit(&sample, &[0.5], 0.5).unwrap();
        let gamma = model.gamma(0.5, &[0.5], 1, fitter.basis());
        let root = (500.0 * cfg.bandwidth).sqrt();
        let lhs: Vec<f64> = fitter
            .scale()
            .apply(&[fit.gamma_hat[0] - gamma[0], fit.gamma_hat[1] - gamma[1]])
            .into_iter()
            .map(|v| v * root)
            .collect();
        let m = m_matrix(&[0.5], 0.5, &cfg, &model).unwrap();
        let pt = psi_tilde(&sample, &[0.5], 0.5, &cfg, &model).unwrap();
        let r = remainder(&lhs, &m, &pt, &[0.5], 0.5).unwrap();
        assert_eq!(report.rows[0].sup_remainder, r);
    }

    #[test]
    fn report_csv_schema() {
        let report = RemainderReport {
            rows: vec![RemainderRow {
                variant: RemainderVariant::Theorem2,
                n: 10,
                replication: 0,
                sup_remainder: 0.5,
                envelope: 1.0,
            }],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "variant,n,replication,sup_remainder,envelope\ntheorem2,10,0,5e-1,1e0\n"
        );
    }
}
