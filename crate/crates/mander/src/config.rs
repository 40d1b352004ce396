//! Run configuration: everything needed to reproduce an ensemble.

use crate::anneal::{AnnealSchedule, ScheduleError};
use crate::chain::{ChainKind, StatKind};
use crate::score::{ChainParams, ParamError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("n_plans must be >= 1")]
    ZeroPlans,
    #[error("n_chains must be >= 1 when given")]
    ZeroChains,
    #[error("steps_per_plan is required for flip and single_vertex runs")]
    MissingStepsPerPlan,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// A reproducible run: chain kind, parameters, schedule, and plan counts.
///
/// The flip/single-vertex kinds sample one plan every `steps_per_plan`
/// accepted steps along each chain; the anneal kind runs one full schedule
/// per plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub kind: ChainKind,
    pub params: ChainParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AnnealSchedule>,
    pub n_plans: u64,
    /// Worker/chain count. Omitted: one chain per logical core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_chains: Option<u64>,
    /// Accepted steps between samples (Nsims); flip/single_vertex only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_plan: Option<u64>,
    /// Run seed; overrides `params.rng_seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub stat: StatKind,
}

fn default_version() -> u32 {
    crate::io::FORMAT_VERSION
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != crate::io::FORMAT_VERSION {
            return Err(ConfigError::FormatVersion(self.format_version));
        }
        if self.n_plans == 0 {
            return Err(ConfigError::ZeroPlans);
        }
        if self.n_chains == Some(0) {
            return Err(ConfigError::ZeroChains);
        }
        self.params.validate()?;
        match self.kind {
            ChainKind::Anneal => self.effective_schedule().validate()?,
            ChainKind::Flip | ChainKind::SingleVertex => {
                if self.steps_per_plan.unwrap_or(0) == 0 {
                    return Err(ConfigError::MissingStepsPerPlan);
                }
            }
        }
        Ok(())
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.params.rng_seed)
    }

    /// The schedule for anneal runs; defaults apply when omitted.
    pub fn effective_schedule(&self) -> AnnealSchedule {
        self.schedule.clone().unwrap_or_default()
    }

    /// Tolerance the initial plan must satisfy for this run.
    pub fn starting_tolerance(&self) -> f64 {
        match self.kind {
            ChainKind::Anneal => self.effective_schedule().pop_tol_start,
            _ => self.params.pop_tolerance,
        }
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let file = std::fs::File::open(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let config: RunConfig = serde_json::from_reader(std::io::BufReader::new(file))?;
    config.validate()?;
    Ok(config)
}
