//! JSON run configuration with embedded defaults.
//!
//! Every section and field is optional; omitted values take the defaults
//! below, so an empty object `{}` is a complete configuration.

use crate::bahadur::{BandwidthRule, LocationScaleModel, RemainderVariant, StudyConfig};
use crate::bootstrap::FailurePolicy;
use crate::grid::{EvalGrid, GridError};
use crate::local::FitConfig;
use crate::mono_test::{Direction, TestSpec};
use crate::simulation::{McConfig, ModelId, DEFAULT_MC_ETA, DEFAULT_NOISE_SD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 20150801;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Evaluation points in x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum XGrid {
    /// `cells` cells of equal width with nodes at the centres.
    Midpoint { lower: f64, upper: f64, cells: usize },
    /// Explicit nodes; weights default to 1.
    Explicit {
        nodes: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x: XGrid,
    pub tau_nodes: Vec<f64>,
    /// Defaults to 1 per level.
    #[serde(default)]
    pub tau_weights: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x: XGrid::Midpoint {
                lower: 0.025,
                upper: 0.975,
                cells: 19,
            },
            tau_nodes: vec![0.5],
            tau_weights: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<EvalGrid, ConfigError> {
        let tau_weights = self
            .tau_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.tau_nodes.len()]);
        let grid = match &self.x {
            XGrid::Midpoint { lower, upper, cells } => {
                EvalGrid::midpoint(*lower, *upper, *cells, 0.5)?.with_taus(self.tau_nodes.clone(), tau_weights)?
            }
            XGrid::Explicit { nodes, weights } => {
                let w = weights.clone().unwrap_or_else(|| vec![1.0; nodes.len()]);
                EvalGrid::new(nodes.clone(), w, self.tau_nodes.clone(), tau_weights)?
            }
        };
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub fit: FitConfig,
    pub grid: GridConfig,
    pub spec: TestSpec,
    pub bootstrap_resamples: usize,
    pub alpha: f64,
    pub eta: f64,
    pub failure_policy: FailurePolicy,
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            fit: FitConfig::local_linear(1.0),
            grid: GridConfig::default(),
            spec: TestSpec::single(2.0, Direction::NonNegative),
            bootstrap_resamples: 200,
            alpha: 0.05,
            eta: 1e-3,
            failure_policy: FailurePolicy::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
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
    pub spec: TestSpec,
    pub grid: GridConfig,
    /// Points per scatter file; 0 disables scatter output.
    pub scatter_n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let mc = McConfig::default();
        Self {
            models: mc.models,
            n: mc.n,
            noise_sd: DEFAULT_NOISE_SD,
            null_replications: mc.null_replications,
            alt_replications: mc.alt_replications,
            bootstrap_resamples: mc.bootstrap_resamples,
            bandwidths: mc.bandwidths,
            alphas: mc.alphas,
            eta: DEFAULT_MC_ETA,
            degree: mc.degree,
            spec: mc.spec,
            grid: GridConfig::default(),
            scatter_n: 100,
        }
    }
}

impl SimulateSection {
    pub fn to_mc(&self, seed: u64) -> Result<McConfig, ConfigError> {
        let mc = McConfig {
            models: self.models.clone(),
            n: self.n,
            noise_sd: self.noise_sd,
            null_replications: self.null_replications,
            alt_replications: self.alt_replications,
            bootstrap_resamples: self.bootstrap_resamples,
            bandwidths: self.bandwidths.clone(),
            alphas: self.alphas.clone(),
            eta: self.eta,
            degree: self.degree,
            seed,
            spec: self.spec,
            grid: self.grid.build()?,
        };
        mc.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(mc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub model: LocationScaleModel,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub bandwidth: BandwidthRule,
    pub degree: usize,
    pub grid: GridConfig,
    pub variants: Vec<RemainderVariant>,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        let study = StudyConfig::default();
        Self {
            model: LocationScaleModel::default(),
            n_values: study.n_values,
            replications: study.replications,
            bandwidth: study.bandwidth,
            degree: study.degree,
            grid: GridConfig {
                x: XGrid::Explicit {
                    nodes: study.grid.x_nodes().to_vec(),
                    weights: None,
                },
                tau_nodes: study.grid.tau_nodes().to_vec(),
                tau_weights: None,
            },
            variants: study.variants,
        }
    }
}

impl DiagnoseSection {
    pub fn to_study(&self, seed: u64) -> Result<StudyConfig, ConfigError> {
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let study = StudyConfig {
            n_values: self.n_values.clone(),
            replications: self.replications,
            bandwidth: self.bandwidth,
            degree: self.degree,
            grid: self.grid.build()?,
            variants: self.variants.clone(),
            seed,
        };
        study.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub test: TestSection,
    pub simulate: SimulateSection,
    pub diagnose: DiagnoseSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            test: TestSection::default(),
            simulate: SimulateSection::default(),
            diagnose: DiagnoseSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON form. Worker count and output paths are
    /// not part of the configuration, so they never change the hash.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }
}
