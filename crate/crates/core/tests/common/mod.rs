#![allow(dead_code)]

use monoqr::solver::WeightedQrProblem;
use rand::Rng;

/// Solves the square system `a x = b` (row-major) by Gaussian elimination
/// with partial pivoting; `None` when a pivot is below `tol * max|a|`.
pub fn dense_solve(a: &[f64], b: &[f64], p: usize, tol: f64) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|r| {
            let mut row = a[r * p..(r + 1) * p].to_vec();
            row.push(b[r]);
            row
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() <= tol * scale {
            return None;
        }
        m.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..p).map(|r| m[r][p] / m[r][r]).collect())
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Minimum objective over every coefficient vector interpolating `p` rows.
pub fn vertex_oracle(problem: &WeightedQrProblem) -> f64 {
    let p = problem.ncols;
    let mut all = Vec::new();
    subsets(problem.nrows(), p, 0, &mut Vec::new(), &mut all);
    let mut best = f64::INFINITY;
    for s in all {
        let a: Vec<f64> = s.iter().flat_map(|&i| problem.row(i).to_vec()).collect();
        let b: Vec<f64> = s.iter().map(|&i| problem.responses[i]).collect();
        if let Some(beta) = dense_solve(&a, &b, p, 1e-10) {
            best = best.min(problem.objective(&beta));
        }
    }
    best
}

/// Random weighted problem with an intercept column and continuous entries.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, p: usize, tau: f64) -> WeightedQrProblem {
    let mut design = Vec::with_capacity(n * p);
    for _ in 0..n {
        design.push(1.0);
        for _ in 1..p {
            design.push(rng.random_range(-2.0..2.0));
        }
    }
    let responses = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    WeightedQrProblem::new(responses, design, p, weights, tau)
}

/// Sample tau-quantile minimizing set `[lo, hi]` of `sum rho_tau(y_i - b)`.
pub fn quantile_set(y: &[f64], tau: f64) -> (f64, f64) {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let k = n * tau;
    if (k - k.round()).abs() < 1e-12 {
        let k = k.round() as usize;
        (s[k - 1], s[k.min(s.len() - 1)])
    } else {
        let k = k.ceil() as usize;
        (s[k - 1], s[k - 1])
    }
}

pub fn check_loss_sum(y: &[f64], b: f64, tau: f64) -> f64 {
    y.iter()
        .map(|&v| {
            let u = v - b;
            u * (tau - if u <= 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}
