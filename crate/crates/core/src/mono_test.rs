//! One-sided `L_p` monotonicity statistics and the bootstrap decision rule.

use crate::grid::EvalGrid;
use crate::local::GridFits;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error("exponent p must be at least 1, got {0}")]
    InvalidExponent(f64),
    #[error("interquartile levels must satisfy 0 < tau_lo < tau_hi < 1, got ({0}, {1})")]
    InvalidLevels(f64, f64),
    #[error("no fit for grid node {0}")]
    MissingNode(String),
    #[error("bootstrap draw vector is empty")]
    EmptyDraws,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("eta must be nonnegative, got {0}")]
    InvalidEta(f64),
}

/// `(max{a, 0})^p`
pub fn lambda_p(a: f64, p: f64) -> Result<f64, TestError> {
    if !(p >= 1.0) {
        return Err(TestError::InvalidExponent(p));
    }
    Ok(positive_part_pow(a, p))
}

#[inline]
fn positive_part_pow(a: f64, p: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

/// Which sign of the derivative the null hypothesis allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `H0: g <= 0` everywhere; positive estimates count against it.
    NonPositive,
    /// `H0: g >= 0` everywhere; negative estimates count against it.
    NonNegative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::NonPositive => 1.0,
            Direction::NonNegative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Variant {
    /// Integrates over the whole `X x T` grid.
    SingleDerivative,
    /// Integrates `g_{tau_hi}(x) - g_{tau_lo}(x)` over x only.
    InterquartileDelta { tau_lo: f64, tau_hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub p: f64,
    pub direction: Direction,
    pub variant: Variant,
}

impl TestSpec {
    pub fn single(p: f64, direction: Direction) -> Self {
        Self {
            p,
            direction,
            variant: Variant::SingleDerivative,
        }
    }

    pub fn interquartile(p: f64, direction: Direction, tau_lo: f64, tau_hi: f64) -> Self {
        Self {
            p,
            direction,
            variant: Variant::InterquartileDelta { tau_lo, tau_hi },
        }
    }

    pub fn validate(&self) -> Result<(), TestError> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(TestError::InvalidExponent(self.p));
        }
        if let Variant::InterquartileDelta { tau_lo, tau_hi } = self.variant {
            if !(0.0 < tau_lo && tau_lo < tau_hi && tau_hi < 1.0) {
                return Err(TestError::InvalidLevels(tau_lo, tau_hi));
            }
        }
        Ok(())
    }
}

/// Derivative estimates on a grid, x-major (`xi * n_tau + ti`).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeField {
    n_x: usize,
    n_tau: usize,
    values: Vec<f64>,
}

impl DerivativeField {
    pub fn new(n_x: usize, n_tau: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_x * n_tau, "derivative field shape");
        Self { n_x, n_tau, values }
    }

    /// Extracts `g_hat` from grid fits, checking they cover `grid`.
    pub fn from_fits(fits: &GridFits, grid: &EvalGrid) -> Result<Self, TestError> {
        let (n_x, n_tau) = (grid.x_nodes().len(), grid.tau_nodes().len());
        let mut values = Vec::with_capacity(n_x * n_tau);
        for (xi, &x) in grid.x_nodes().iter().enumerate() {
            for (ti, &tau) in grid.tau_nodes().iter().enumerate() {
                let fit = fits
                    .get(xi, ti)
                    .filter(|f| f.x.len() == 1 && f.x[0] == x && f.tau == tau && f.gamma_hat.len() > 1)
                    .ok_or_else(|| TestError::MissingNode(format!("(x={x}, tau={tau})")))?;
                values.push(fit.gamma_hat[1]);
            }
        }
        Ok(Self::new(n_x, n_tau, values))
    }

    pub fn get(&self, xi: usize, ti: usize) -> f64 {
        self.values[xi * self.n_tau + ti]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Elementwise `self - other`.
    pub fn minus(&self, other: &DerivativeField) -> DerivativeField {
        assert_eq!((self.n_x, self.n_tau), (other.n_x, other.n_tau));
        DerivativeField {
            n_x: self.n_x,
            n_tau: self.n_tau,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Signed one-sided `L_p` functional of a derivative field.
pub fn integrate(field: &DerivativeField, grid: &EvalGrid, spec: &TestSpec) -> Result<f64, TestError> {
    spec.validate()?;
    if field.n_x != grid.x_nodes().len() || field.n_tau != grid.tau_nodes().len() {
        return Err(TestError::MissingNode("field does not match grid shape".into()));
    }
    let s = spec.direction.sign();
    let mut total = 0.0;
    match spec.variant {
        Variant::SingleDerivative => {
            for (xi, wx) in grid.x_weights().iter().enumerate() {
                for (ti, wt) in grid.tau_weights().iter().enumerate() {
                    total += positive_part_pow(s * field.get(xi, ti), spec.p) * wx * wt;
                }
            }
        }
        Variant::InterquartileDelta { tau_lo, tau_hi } => {
            let lo = grid
                .tau_index(tau_lo)
                .ok_or_else(|| TestError::MissingNode(format!("tau={tau_lo}")))?;
            let hi = grid
                .tau_index(tau_hi)
                .ok_or_else(|| TestError::MissingNode(format!("tau={tau_hi}")))?;
            for (xi, wx) in grid.x_weights().iter().enumerate() {
                let delta = field.get(xi, hi) - field.get(xi, lo);
                total += positive_part_pow(s * delta, spec.p) * wx;
            }
        }
    }
    Ok(total)
}

/// Test statistic from the fitted grid.
pub fn statistic(fits: &GridFits, grid: &EvalGrid, spec: &TestSpec) -> Result<f64, TestError> {
    integrate(&DerivativeField::from_fits(fits, grid)?, grid, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub bootstrap_draws: Vec<f64>,
    pub c_alpha: f64,
    pub a_hat_star: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub eta: f64,
    pub h: f64,
}

impl fmt::Display for TestOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} H0 at alpha={}: T={:.6e}, critical value={:.6e} (c*={:.6e}, a*={:.6e}, B={})",
            if self.reject { "REJECT" } else { "do not reject" },
            self.alpha,
            self.statistic,
            self.critical_value,
            self.c_alpha,
            self.a_hat_star,
            self.bootstrap_draws.len()
        )
    }
}

/// Empirical `(1 - alpha)` quantile: the order statistic at 1-based rank
/// `ceil((1 - alpha) B)` of the sorted draws.
pub fn bootstrap_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    // the 1e-9 guard keeps e.g. 0.95 * 100 from rounding up to rank 96
    let rank = (((1.0 - alpha) * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(b) - 1]
}

/// Max-adjusted bootstrap critical value and the strict-inequality decision.
pub fn decide(statistic: f64, draws: &[f64], alpha: f64, eta: f64, h: f64) -> Result<TestOutcome, TestError> {
    if draws.is_empty() {
        return Err(TestError::EmptyDraws);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TestError::InvalidAlpha(alpha));
    }
    if !(eta >= 0.0) {
        return Err(TestError::InvalidEta(eta));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let c_alpha = bootstrap_quantile(&sorted, alpha);
    let a_hat_star = draws.iter().sum::<f64>() / draws.len() as f64;
    let critical_value = c_alpha.max(h.sqrt() * eta + a_hat_star);
    Ok(TestOutcome {
        statistic,
        bootstrap_draws: draws.to_vec(),
        c_alpha,
        a_hat_star,
        critical_value,
        reject: statistic > critical_value,
        alpha,
        eta,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_p(-1.0, 2.0).unwrap(), 0.0);
        assert_eq!(lambda_p(3.0, 2.0).unwrap(), 9.0);
        assert_eq!(lambda_p(0.0, 1.0).unwrap(), 0.0);
        assert!((lambda_p(2.0, 1.5).unwrap() - 2f64.powf(1.5)).abs() < 1e-15);
        assert!(lambda_p(1.0, 0.5).is_err());
    }

    #[test]
    fn statistic_examples() {
        let spec = TestSpec::single(2.0, Direction::NonPositive);
        let grid = EvalGrid::single(0.5, 0.9, 0.5, 1.0).unwrap();
        let field = DerivativeField::new(1, 1, vec![2.0]);
        assert!((integrate(&field, &grid, &spec).unwrap() - 3.6).abs() < 1e-12);
        let field = DerivativeField::new(1, 1, vec![-2.0]);
        assert_eq!(integrate(&field, &grid, &spec).unwrap(), 0.0);

        let grid = EvalGrid::default();
        let ones = DerivativeField::new(19, 1, vec![1.0; 19]);
        assert!((integrate(&ones, &grid, &spec).unwrap() - 0.95).abs() < 1e-12);
        // the opposite direction sees nothing
        let spec_nn = TestSpec::single(2.0, Direction::NonNegative);
        assert_eq!(integrate(&ones, &grid, &spec_nn).unwrap(), 0.0);
    }

    #[test]
    fn interquartile_integrand() {
        let grid = EvalGrid::uniform(0.0, 1.0, 2, 0.25)
            .unwrap()
            .with_taus(vec![0.25, 0.75], vec![1.0, 1.0])
            .unwrap();
        // x-major: (x0,.25) (x0,.75) (x1,.25) (x1,.75)
        let field = DerivativeField::new(2, 2, vec![1.0, 3.0, 2.0, 1.0]);
        let spec = TestSpec::interquartile(2.0, Direction::NonPositive, 0.25, 0.75);
        // only x0 has a positive spread derivative (2), weight 0.5
        assert!((integrate(&field, &grid, &spec).unwrap() - 2.0).abs() < 1e-12);
        let missing = TestSpec::interquartile(2.0, Direction::NonPositive, 0.1, 0.75);
        assert!(matches!(integrate(&field, &grid, &missing), Err(TestError::MissingNode(_))));
    }

    #[test]
    fn decide_examples() {
        let out = decide(5.0, &[5.0; 40], 0.05, 0.0, 0.7).unwrap();
        assert_eq!((out.c_alpha, out.a_hat_star, out.critical_value), (5.0, 5.0, 5.0));
        assert!(!out.reject);

        let draws: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        let out = decide(0.0, &draws, 0.05, 0.0, 1.0).unwrap();
        assert_eq!(out.c_alpha, 0.95);
        assert!((out.a_hat_star - 0.505).abs() < 1e-12);

        let out = decide(9.0, &[1e-6; 10], 0.1, 10.0, 1.0).unwrap();
        assert!((out.critical_value - (10.0 + 1e-6)).abs() < 1e-12);
        assert!(!out.reject);

        assert_eq!(decide(1.0, &[], 0.05, 0.0, 1.0), Err(TestError::EmptyDraws));
        assert!(decide(1.0, &[1.0], 1.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn statistic_is_nonnegative_and_monotone(
            values in prop::collection::vec(-3.0f64..3.0, 19),
            bump in 0.0f64..2.0,
            idx in 0usize..19,
        ) {
            let grid = EvalGrid::default();
            for direction in [Direction::NonPositive, Direction::NonNegative] {
                let spec = TestSpec::single(2.0, direction);
                let base = integrate(&DerivativeField::new(19, 1, values.clone()), &grid, &spec).unwrap();
                prop_assert!(base >= 0.0);
                let mut raised = values.clone();
                raised[idx] += direction.sign() * bump;
                let up = integrate(&DerivativeField::new(19, 1, raised), &grid, &spec).unwrap();
                prop_assert!(up >= base);
            }
        }

        #[test]
        fn decide_is_scale_consistent(
            draws in prop::collection::vec(0.0f64..10.0, 1..60),
            stat in 0.0f64..10.0,
            c in 0.01f64..100.0,
            alpha in prop::sample::select(vec![0.01, 0.05, 0.1]),
            eta in 0.0f64..1.0,
        ) {
            let a = decide(stat, &draws, alpha, 0.0, 1.0).unwrap();
            let scaled: Vec<f64> = draws.iter().map(|d| d * c).collect();
            let b = decide(stat * c, &scaled, alpha, 0.0, 1.0).unwrap();
            prop_assert!((b.c_alpha - c * a.c_alpha).abs() <= 1e-9 * b.c_alpha.abs().max(1.0));
            prop_assert!((b.a_hat_star - c * a.a_hat_star).abs() <= 1e-9 * b.a_hat_star.abs().max(1.0));
            prop_assert_eq!(a.reject, b.reject);

            let e = decide(stat, &draws, alpha, eta, 0.81).unwrap();
            prop_assert!(e.critical_value >= e.c_alpha);
            prop_assert!(e.critical_value >= 0.9 * eta + e.a_hat_star);
            prop_assert_eq!(e.reject, e.statistic > e.critical_value);
        }
    }
}
