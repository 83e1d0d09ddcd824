//! Load setpoint profiles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Random step profiles: hold a setpoint for a uniformly drawn dwell, then
/// jump to a different one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    /// bar
    pub setpoints: Vec<f64>,
    /// cycles
    pub dwell_min: usize,
    /// cycles
    pub dwell_max: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            setpoints: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            dwell_min: 20,
            dwell_max: 100,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self, setpoint_range: (f64, f64)) -> Result<()> {
        if self.setpoints.is_empty() {
            return Err(LabError::Config("profile needs at least one setpoint".into()));
        }
        if self
            .setpoints
            .iter()
            .any(|s| !(*s >= setpoint_range.0 && *s <= setpoint_range.1))
        {
            return Err(LabError::Config(format!(
                "profile setpoints must lie in [{}, {}]",
                setpoint_range.0, setpoint_range.1
            )));
        }
        if self.dwell_min == 0 || self.dwell_min > self.dwell_max {
            return Err(LabError::Config("dwell bounds must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }
}

/// `len` setpoints drawn from `cfg`.
pub fn random_profile<R: Rng + ?Sized>(cfg: &ProfileConfig, len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut current = cfg.setpoints[rng.random_range(0..cfg.setpoints.len())];
    while out.len() < len {
        let dwell = rng.random_range(cfg.dwell_min..=cfg.dwell_max);
        out.extend(std::iter::repeat_n(current, dwell.min(len - out.len())));
        if cfg.setpoints.len() > 1 {
            let others: Vec<f64> = cfg.setpoints.iter().copied().filter(|s| *s != current).collect();
            current = others[rng.random_range(0..others.len())];
        }
    }
    out
}
