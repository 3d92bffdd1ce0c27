//! Multi-index polynomial basis, kernels and bandwidth scaling.
//!
//! Every local fit expands the covariate offset `z` into the monomial vector
//! `c(z) = (z^u)_{u in A_r}`, where `A_r` is the set of multi-indices of total
//! degree at most `r`. The ordering of `A_r` is graded lexicographic and fixed
//! crate-wide, so entry 0 is always the intercept and, for `d = 1`, entry 1 is
//! the first-derivative slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("polynomial degree must be at least 1")]
    ZeroDegree,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
}

/// The set `A_r` of `d`-dimensional multi-indices with total degree `<= r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
}

impl MultiIndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    /// Total degree `[u]` of the multi-index at position `pos`.
    pub fn order(&self, pos: usize) -> usize {
        self.indices[pos].iter().sum()
    }

    /// Position of a given multi-index, if present.
    pub fn position(&self, u: &[usize]) -> Option<usize> {
        self.indices.iter().position(|v| v.as_slice() == u)
    }

    /// `u_1! * ... * u_d!` for the multi-index at `pos`.
    pub fn factorial(&self, pos: usize) -> f64 {
        self.indices[pos]
            .iter()
            .map(|&k| (1..=k).map(|j| j as f64).product::<f64>())
            .product()
    }
}

/// Enumerates `A_r` in graded lexicographic order.
///
/// Within a total degree the order is lexicographically descending in the
/// exponent vector, so for `d = 2, r = 1` the result is `(0,0), (1,0), (0,1)`.
pub fn multi_indices(dim: usize, degree: usize) -> Result<MultiIndexSet, BasisError> {
    if dim == 0 {
        return Err(BasisError::ZeroDimension);
    }
    if degree == 0 {
        return Err(BasisError::ZeroDegree);
    }
    let mut indices = Vec::new();
    for total in 0..=degree {
        let mut current = vec![0usize; dim];
        compositions(total, 0, &mut current, &mut indices);
    }
    Ok(MultiIndexSet {
        dim,
        degree,
        indices,
    })
}

// Pushes all vectors with the given remaining total, first coordinate largest first.
fn compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let dim = current.len();
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Evaluates `c(z) = (z^u)_{u in A}`.
pub fn basis_eval(set: &MultiIndexSet, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    basis_eval_into(set, z, &mut out);
    out
}

/// In-place variant of [`basis_eval`]; `out` must have length `set.len()`.
pub fn basis_eval_into(set: &MultiIndexSet, z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), set.dim);
    debug_assert_eq!(out.len(), set.len());
    if set.dim == 1 {
        // powers of a scalar in increasing order
        let mut acc = 1.0;
        for slot in out.iter_mut() {
            *slot = acc;
            acc *= z[0];
        }
        return;
    }
    for (slot, u) in out.iter_mut().zip(&set.indices) {
        *slot = u
            .iter()
            .zip(z)
            .map(|(&e, &zm)| zm.powi(e as i32))
            .product();
    }
}

/// Kernel functions with compact support on `[-1/2, 1/2]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Uniform,
}

impl Kernel {
    pub const SUPPORT_RADIUS: f64 = 0.5;

    pub fn eval(self, t: &[f64]) -> f64 {
        kernel_eval(self, t)
    }
}

/// Product kernel evaluated at `t`. The support box is closed.
pub fn kernel_eval(kernel: Kernel, t: &[f64]) -> f64 {
    match kernel {
        Kernel::Uniform => {
            if t.iter().all(|v| v.abs() <= Kernel::SUPPORT_RADIUS) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Diagonal bandwidth scaling `H = diag(h^{[u]})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    h: f64,
    diagonal: Vec<f64>,
}

impl ScaleMatrix {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `H v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diagonal).map(|(a, s)| a * s).collect()
    }

    /// `H^{-1} v`
    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diagonal).map(|(a, s)| a / s).collect()
    }
}

pub fn scale_matrix(set: &MultiIndexSet, h: f64) -> Result<ScaleMatrix, BasisError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(BasisError::InvalidBandwidth(h));
    }
    let diagonal = (0..set.len()).map(|pos| h.powi(set.order(pos) as i32)).collect();
    Ok(ScaleMatrix { h, diagonal })
}
