//! Exact weighted check-loss minimization.
//!
//! The problem `min_beta sum_i w_i * l_tau(y_i - x_i' beta)` is the linear
//! program
//!
//! ```text
//! min  sum_i w_i (tau u_i + (1 - tau) v_i)
//! s.t. X beta + u - v = y,   u, v >= 0,   beta free.
//! ```
//!
//! Its basic feasible solutions are the vertices that interpolate `p`
//! observations. The solver keeps the LP basis in reduced form: the `p`
//! interpolated rows plus, for every other row, which of `u_i` / `v_i` is
//! basic (its residual "side"). Only the `2p` nonbasic slacks of interpolated
//! rows can have negative reduced cost. The entering slack is chosen by
//! Bland's smallest-index rule, and the ratio test walks the sorted residual
//! breakpoints along the edge until the directional derivative turns
//! nonnegative, flipping the sides of the rows it passes.
//!
//! Every choice (initial basis, entering variable, breakpoint ties) is a pure
//! function of the input, so repeated solves agree bit for bit.

use crate::linalg::Lu;
use thiserror::Error;

/// Relative tolerance for rank decisions in the design.
pub const RANK_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("problem has non-finite input")]
    NonFinite,
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("only {positive} rows have positive weight, need at least {required}")]
    Degenerate { positive: usize, required: usize },
    #[error("positively weighted design rows do not span R^{0}")]
    RankDeficient(usize),
    #[error("simplex did not terminate within {0} iterations")]
    NoConvergence(usize),
}

fn check_tau(tau: f64) -> Result<(), SolveError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(SolveError::InvalidTau(tau))
    }
}

#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

#[inline]
pub(crate) fn psi(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// Check (pinball) loss `u (tau - 1{u <= 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64, SolveError> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

/// Score `tau - 1{u <= 0}`, the right derivative of the check loss.
pub fn score(u: f64, tau: f64) -> Result<f64, SolveError> {
    check_tau(tau)?;
    Ok(psi(u, tau))
}

/// A weighted quantile regression problem. The design is stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQrProblem {
    pub responses: Vec<f64>,
    pub design: Vec<f64>,
    pub ncols: usize,
    pub weights: Vec<f64>,
    pub tau: f64,
}

impl WeightedQrProblem {
    pub fn new(
        responses: Vec<f64>,
        design: Vec<f64>,
        ncols: usize,
        weights: Vec<f64>,
        tau: f64,
    ) -> Self {
        Self {
            responses,
            design,
            ncols,
            weights,
            tau,
        }
    }

    /// Unweighted problem built from a list of design rows.
    pub fn from_rows(responses: Vec<f64>, rows: &[Vec<f64>], tau: f64) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let design = rows.iter().flatten().copied().collect();
        let weights = vec![1.0; responses.len()];
        Self::new(responses, design, ncols, weights, tau)
    }

    pub fn nrows(&self) -> usize {
        self.responses.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.ncols..(i + 1) * self.ncols]
    }

    /// `sum_i w_i l_tau(y_i - x_i' beta)`
    pub fn objective(&self, beta: &[f64]) -> f64 {
        (0..self.nrows())
            .filter(|&i| self.weights[i] > 0.0)
            .map(|i| self.weights[i] * rho(self.responses[i] - dot(self.row(i), beta), self.tau))
            .sum()
    }

    fn validate(&self) -> Result<(), SolveError> {
        check_tau(self.tau)?;
        let n = self.nrows();
        if n == 0 || self.ncols == 0 {
            return Err(SolveError::Malformed("empty problem".into()));
        }
        if self.design.len() != n * self.ncols || self.weights.len() != n {
            return Err(SolveError::Malformed(format!(
                "{} responses, {} design entries for {} columns, {} weights",
                n,
                self.design.len(),
                self.ncols,
                self.weights.len()
            )));
        }
        let all_finite = self
            .responses
            .iter()
            .chain(&self.design)
            .chain(&self.weights)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SolveError::NonFinite);
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(SolveError::Malformed("negative weight".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    /// Rows interpolated by the optimal vertex, ascending.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Picks the first `p` rows (in index order) that are linearly independent.
fn initial_basis(problem: &WeightedQrProblem, active: &[usize]) -> Result<Vec<usize>, SolveError> {
    let p = problem.ncols;
    let mut reduced: Vec<(Vec<f64>, usize)> = Vec::with_capacity(p);
    let mut chosen = Vec::with_capacity(p);
    for &i in active {
        let row = problem.row(i);
        let row_scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if row_scale == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for (r, pc) in &reduced {
            let f = v[*pc] / r[*pc];
            if f != 0.0 {
                for (vk, rk) in v.iter_mut().zip(r) {
                    *vk -= f * rk;
                }
            }
        }
        let (pc, pv) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, x)| if x.abs() > best.1 { (k, x.abs()) } else { best });
        if pv > RANK_TOL * row_scale {
            reduced.push((v, pc));
            chosen.push(i);
            if chosen.len() == p {
                return Ok(chosen);
            }
        }
    }
    Err(SolveError::RankDeficient(p))
}

fn basis_lu(problem: &WeightedQrProblem, basis: &[usize]) -> Result<Lu, SolveError> {
    let p = problem.ncols;
    let mut mat = Vec::with_capacity(p * p);
    for &b in basis {
        mat.extend_from_slice(problem.row(b));
    }
    Lu::factor(&mat, p, RANK_TOL).ok_or(SolveError::RankDeficient(p))
}

/// Solves the problem exactly, returning an optimal vertex.
pub fn solve(problem: &WeightedQrProblem) -> Result<QrSolution, SolveError> {
    problem.validate()?;
    let n = problem.nrows();
    let p = problem.ncols;
    let tau = problem.tau;
    let w = &problem.weights;
    let y = &problem.responses;

    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    if active.len() < p {
        return Err(SolveError::Degenerate {
            positive: active.len(),
            required: p,
        });
    }
    let mut basis = initial_basis(problem, &active)?;
    let mut in_basis = vec![false; n];
    for &b in &basis {
        in_basis[b] = true;
    }

    let cost_scale: f64 = active
        .iter()
        .map(|&i| w[i] * problem.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .sum();
    let tol = COST_TOL * cost_scale.max(f64::MIN_POSITIVE);

    let mut residual = vec![0.0; n];
    // +1: residual on the u side (>= 0), -1: v side (<= 0)
    let mut side = vec![1i8; n];
    let mut lu = basis_lu(problem, &basis)?;
    let mut beta = lu.solve(&basis.iter().map(|&b| y[b]).collect::<Vec<_>>());
    for &i in &active {
        if !in_basis[i] && y[i] - dot(problem.row(i), &beta) < 0.0 {
            side[i] = -1;
        }
    }

    let max_iter = 50 * (active.len() + p) + 100;
    let mut breakpoints: Vec<(f64, usize, f64)> = Vec::with_capacity(active.len());
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(SolveError::NoConvergence(max_iter));
        }
        for &i in &active {
            residual[i] = if in_basis[i] { 0.0 } else { y[i] - dot(problem.row(i), &beta) };
        }

        let mut g = vec![0.0; p];
        for &i in &active {
            if in_basis[i] {
                continue;
            }
            let phi = if side[i] > 0 { tau } else { tau - 1.0 };
            let coef = w[i] * phi;
            for (gk, xk) in g.iter_mut().zip(problem.row(i)) {
                *gk += coef * xk;
            }
        }
        let z = lu.solve_transpose(&g);

        // Bland: the interpolated row with the smallest index that has an improving slack
        let mut entering: Option<(usize, f64, f64)> = None;
        for (j, &b) in basis.iter().enumerate() {
            let rc_down = (1.0 - tau) * w[b] - z[j];
            let rc_up = tau * w[b] + z[j];
            let cand = if rc_down < -tol {
                Some((j, 1.0, rc_down))
            } else if rc_up < -tol {
                Some((j, -1.0, rc_up))
            } else {
                None
            };
            if let Some(c) = cand {
                if entering.is_none_or(|(jj, _, _)| b < basis[jj]) {
                    entering = Some(c);
                }
            }
        }
        let Some((j, sigma, reduced_cost)) = entering else {
            break;
        };

        let mut unit = vec![0.0; p];
        unit[j] = sigma;
        // moving beta along `dir` lowers the residual of basis[j] when sigma = +1
        let dir = lu.solve(&unit);

        breakpoints.clear();
        for &i in &active {
            if in_basis[i] {
                continue;
            }
            let a = dot(problem.row(i), &dir);
            let crosses = (side[i] > 0 && a > 0.0) || (side[i] < 0 && a < 0.0);
            if crosses {
                let t = (residual[i] / a).max(0.0);
                breakpoints.push((t, i, w[i] * a.abs()));
            }
        }
        breakpoints.sort_unstable_by(|l, r| l.0.total_cmp(&r.0).then(l.1.cmp(&r.1)));

        let mut slope = reduced_cost;
        let mut stop = None;
        for (pos, &(_, _, inc)) in breakpoints.iter().enumerate() {
            slope += inc;
            if slope >= -tol {
                stop = Some(pos);
                break;
            }
        }
        let stop = match stop {
            Some(pos) => pos,
            // rounding left the final slope marginally negative
            None if !breakpoints.is_empty() => breakpoints.len() - 1,
            None => return Err(SolveError::RankDeficient(p)),
        };
        for &(_, i, _) in &breakpoints[..stop] {
            side[i] = -side[i];
        }
        let entering_row = breakpoints[stop].1;
        let leaving_row = basis[j];
        side[leaving_row] = if sigma > 0.0 { -1 } else { 1 };
        in_basis[leaving_row] = false;
        in_basis[entering_row] = true;
        basis[j] = entering_row;

        lu = basis_lu(problem, &basis)?;
        beta = lu.solve(&basis.iter().map(|&b| y[b]).collect::<Vec<_>>());
        iterations += 1;
    }

    let objective = problem.objective(&beta);
    let mut active_set = basis;
    active_set.sort_unstable();
    Ok(QrSolution {
        coefficients: beta,
        objective,
        active_set,
        iterations,
    })
}

/// Subgradient multipliers `lambda_j` of the interpolated rows at a solution.
///
/// At an optimum `sum_{i not interpolated} w_i score(r_i) x_i + sum_j lambda_j w_j x_j = 0`
/// with every `lambda_j` in `[tau - 1, tau]`.
pub fn subgradient_multipliers(
    problem: &WeightedQrProblem,
    solution: &QrSolution,
) -> Result<Vec<f64>, SolveError> {
    let p = problem.ncols;
    let lu = basis_lu(problem, &solution.active_set)?;
    let mut g = vec![0.0; p];
    for i in 0..problem.nrows() {
        if problem.weights[i] <= 0.0 || solution.active_set.contains(&i) {
            continue;
        }
        let r = problem.responses[i] - dot(problem.row(i), &solution.coefficients);
        let coef = problem.weights[i] * psi(r, problem.tau);
        for (gk, xk) in g.iter_mut().zip(problem.row(i)) {
            *gk += coef * xk;
        }
    }
    let z = lu.solve_transpose(&g);
    Ok(solution
        .active_set
        .iter()
        .zip(z)
        .map(|(&b, zj)| -zj / problem.weights[b])
        .collect())
}
