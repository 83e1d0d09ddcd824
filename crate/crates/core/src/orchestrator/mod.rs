//! Episode loop, validation, adaptation, persistence and metrics export.

mod metrics;
mod runner;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::profile::ProfileConfig;

pub use metrics::{export_metrics, training_curve, trend_slope, write_training_curve, Metrics};
pub use runner::{
    mode_reward, new_session, Checkpoint, EpisodeOutcome, EpisodeRow, OutputDir, Policy, RunSummary, Runner,
    CHECKPOINT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Measure,
    Train,
    Adapt,
    Validate,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Measure => "measure",
            RunMode::Train => "train",
            RunMode::Adapt => "adapt",
            RunMode::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub cycles_per_episode: usize,
    pub train_episodes: u64,
    pub adapt_episodes: u64,
    /// Validate after every this many training episodes; 0 disables.
    pub validation_every: u64,
    pub validation_cycles: usize,
    pub profile: ProfileConfig,
    pub adapt_sigma: f64,
    pub adapt_ethanol_target: f64,
    /// Pass states, rewards and actions through 32-bit floats in-process.
    pub quantize: bool,
    /// Cycles per group in the exported training curve.
    pub curve_group: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            cycles_per_episode: 1000,
            train_episodes: 60,
            adapt_episodes: 120,
            validation_every: 10,
            validation_cycles: 1000,
            profile: ProfileConfig::default(),
            adapt_sigma: 0.3,
            adapt_ethanol_target: 0.5,
            quantize: false,
            curve_group: 1000,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self, setpoint_range: (f64, f64)) -> Result<()> {
        if self.cycles_per_episode == 0 || self.validation_cycles == 0 {
            return Err(LabError::Config("episodes need at least one cycle".into()));
        }
        if !(self.adapt_sigma >= 0.0) || !(0.0..=1.0).contains(&self.adapt_ethanol_target) {
            return Err(LabError::Config("invalid adaptation settings".into()));
        }
        if self.curve_group == 0 {
            return Err(LabError::Config("curve_group must be positive".into()));
        }
        self.profile.validate(setpoint_range)
    }
}
