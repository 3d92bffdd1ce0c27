//! Evaluation grids over covariate values and quantile levels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid has no {0} nodes")]
    Empty(&'static str),
    #[error("{0} nodes must be strictly increasing and finite")]
    NotIncreasing(&'static str),
    #[error("{0} weights must be positive, one per node")]
    BadWeights(&'static str),
    #[error("quantile level {0} outside (0, 1)")]
    TauOutOfRange(f64),
    #[error("invalid interval [{0}, {1}] with {2} nodes")]
    BadInterval(f64, f64, usize),
}

/// Nodes and quadrature weights over `X x T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    x_nodes: Vec<f64>,
    x_weights: Vec<f64>,
    tau_nodes: Vec<f64>,
    tau_weights: Vec<f64>,
}

fn check_axis(nodes: &[f64], weights: &[f64], name: &'static str) -> Result<(), GridError> {
    if nodes.is_empty() {
        return Err(GridError::Empty(name));
    }
    if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GridError::NotIncreasing(name));
    }
    if weights.len() != nodes.len() || weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
        return Err(GridError::BadWeights(name));
    }
    Ok(())
}

impl EvalGrid {
    pub fn new(
        x_nodes: Vec<f64>,
        x_weights: Vec<f64>,
        tau_nodes: Vec<f64>,
        tau_weights: Vec<f64>,
    ) -> Result<Self, GridError> {
        check_axis(&x_nodes, &x_weights, "x")?;
        check_axis(&tau_nodes, &tau_weights, "tau")?;
        if let Some(&t) = tau_nodes.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(GridError::TauOutOfRange(t));
        }
        Ok(Self {
            x_nodes,
            x_weights,
            tau_nodes,
            tau_weights,
        })
    }

    /// `m` equally spaced x nodes from `a` to `b` inclusive, each carrying
    /// weight `(b - a) / m`, paired with a single quantile level of weight 1.
    ///
    /// `uniform(0.05, 0.95, 19, 0.5)` gives nodes `0.05, 0.10, ..., 0.95`.
    pub fn uniform(a: f64, b: f64, m: usize, tau: f64) -> Result<Self, GridError> {
        if !(a.is_finite() && b.is_finite() && a < b) || m == 0 {
            return Err(GridError::BadInterval(a, b, m));
        }
        let nodes = if m == 1 {
            vec![0.5 * (a + b)]
        } else {
            (0..m).map(|j| a + (b - a) * j as f64 / (m - 1) as f64).collect()
        };
        let weight = (b - a) / m as f64;
        Self::new(nodes, vec![weight; m], vec![tau], vec![1.0])
    }

    /// Midpoint rule: `m` cells of width `(b - a) / m`, nodes at cell centres.
    pub fn midpoint(a: f64, b: f64, m: usize, tau: f64) -> Result<Self, GridError> {
        if !(a.is_finite() && b.is_finite() && a < b) || m == 0 {
            return Err(GridError::BadInterval(a, b, m));
        }
        let width = (b - a) / m as f64;
        let nodes = (0..m).map(|j| a + (j as f64 + 0.5) * width).collect();
        Self::new(nodes, vec![width; m], vec![tau], vec![1.0])
    }

    /// Replaces the quantile axis, keeping the x axis.
    pub fn with_taus(self, tau_nodes: Vec<f64>, tau_weights: Vec<f64>) -> Result<Self, GridError> {
        Self::new(self.x_nodes, self.x_weights, tau_nodes, tau_weights)
    }

    /// Single node at `(x, tau)` with the given weights.
    pub fn single(x: f64, x_weight: f64, tau: f64, tau_weight: f64) -> Result<Self, GridError> {
        Self::new(vec![x], vec![x_weight], vec![tau], vec![tau_weight])
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn x_weights(&self) -> &[f64] {
        &self.x_weights
    }

    pub fn tau_nodes(&self) -> &[f64] {
        &self.tau_nodes
    }

    pub fn tau_weights(&self) -> &[f64] {
        &self.tau_weights
    }

    pub fn len(&self) -> usize {
        self.x_nodes.len() * self.tau_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of a quantile level on the grid, matched to 1e-12.
    pub fn tau_index(&self, tau: f64) -> Option<usize> {
        self.tau_nodes.iter().position(|&t| (t - tau).abs() <= 1e-12)
    }
}

impl Default for EvalGrid {
    /// 19 midpoint cells of width 0.05 with nodes 0.05, 0.10, ..., 0.95; median only.
    fn default() -> Self {
        Self::midpoint(0.025, 0.975, 19, 0.5).expect("default grid is valid")
    }
}
