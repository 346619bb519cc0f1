//! Run configuration: one TOML file, overridable by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::features::{CptParams, FeatureConfig};
use crate::pipeline::{AdjustConfig, Grid, KernelConfig, PipelineConfig};
use crate::svr::SvrParams;

pub const MIN_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    /// Random problems drawn to fit the feature scalers.
    pub samples: usize,
    pub data: Option<PathBuf>,
    pub bundle: PathBuf,
    pub out: Option<PathBuf>,
    pub checks: Option<PathBuf>,
    pub svr: SvrParams,
    pub kernel: KernelConfig,
    pub cpt: CptParams,
    pub scpt_theta: f64,
    pub adjust: AdjustConfig,
    pub grid: Grid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            folds: 10,
            samples: 100_000,
            data: None,
            bundle: PathBuf::from("bundle"),
            out: None,
            checks: None,
            svr: SvrParams::default(),
            kernel: KernelConfig::default(),
            cpt: CptParams::default(),
            scpt_theta: 1.0,
            adjust: AdjustConfig::default(),
            grid: Grid::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.folds < 2 {
            return Err(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.samples < MIN_SAMPLES {
            return Err(format!("samples must be at least {MIN_SAMPLES}, got {}", self.samples));
        }
        self.pipeline().validate().map_err(|e| e.to_string())?;
        if self.grid.c.is_empty() || self.grid.epsilon.is_empty() {
            return Err("grid.c and grid.epsilon must be non-empty".into());
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            svr: self.svr,
            kernel: self.kernel,
            features: FeatureConfig {
                cpt: self.cpt,
                scpt_theta: self.scpt_theta,
            },
            adjust: self.adjust,
        }
    }
}
