//! The single JSON configuration file and seed derivation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{default_start_points, ActionBounds, StartPoint, ACTION_DIM};
use crate::classifier::ClassifierConfig;
use crate::constants::EngineConstants;
use crate::ddpg::AgentConfig;
use crate::directions::DirectionSet;
use crate::engine::{CylinderGeometry, EngineSimConfig};
use crate::error::{LabError, Result};
use crate::measurement::MeasurementConfig;
use crate::orchestrator::PlanConfig;
use crate::reward::RewardParams;
use crate::safety::SafetyConfig;
use crate::state::StateRanges;

/// Actuator range section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub min: [f64; ACTION_DIM],
    pub max: [f64; ACTION_DIM],
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let b = ActionBounds::default();
        BoundsConfig { min: b.min, max: b.max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UdpConfig {
    /// Environment-side reply deadline, ms.
    pub deadline_ms: u64,
    /// Deadline for the end-of-episode message, which waits for training, ms.
    pub episode_end_deadline_ms: u64,
}

impl Default for UdpConfig {
    fn default() -> Self {
        UdpConfig {
            deadline_ms: 9,
            episode_end_deadline_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub seed: u64,
    pub bounds: BoundsConfig,
    pub start_points: Vec<StartPoint>,
    pub classifier: ClassifierConfig,
    pub directions: DirectionSet,
    pub engine_constants: EngineConstants,
    pub state_ranges: StateRanges,
    pub reward: RewardParams,
    pub safety: SafetyConfig,
    pub measurement: MeasurementConfig,
    pub engine_sim: EngineSimConfig,
    pub geometry: CylinderGeometry,
    pub agent: AgentConfig,
    pub plan: PlanConfig,
    pub udp: UdpConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            seed: 42,
            bounds: BoundsConfig::default(),
            start_points: default_start_points(),
            classifier: ClassifierConfig::default(),
            directions: DirectionSet::default(),
            engine_constants: EngineConstants::default(),
            state_ranges: StateRanges::default(),
            reward: RewardParams::default(),
            safety: SafetyConfig::default(),
            measurement: MeasurementConfig::default(),
            engine_sim: EngineSimConfig::default(),
            geometry: CylinderGeometry::default(),
            agent: AgentConfig::default(),
            plan: PlanConfig::default(),
            udp: UdpConfig::default(),
        }
    }
}

impl LabConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: LabConfig =
            serde_json::from_str(text).map_err(|e| LabError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn action_bounds(&self) -> Result<ActionBounds> {
        ActionBounds::new(self.bounds.min, self.bounds.max, self.start_points.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = self.action_bounds()?;
        self.classifier.validate()?;
        self.engine_constants.validate()?;
        self.state_ranges.validate()?;
        self.reward.validate()?;
        self.safety.validate(self.directions.len())?;
        self.measurement.validate()?;
        self.engine_sim.validate()?;
        self.geometry.validate()?;
        self.agent.validate()?;
        self.plan.validate(bounds.setpoint_range())?;
        if self.safety.dpmax_limit != self.engine_constants.dpmax_limit
            || self.safety.misfire_tolerance != self.engine_constants.misfire_tolerance
        {
            return Err(LabError::Config(
                "safety limits must agree with engine_constants".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 over everything that shapes a run except the run budgets.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.plan.train_episodes = 0;
        c.plan.adapt_episodes = 0;
        c.measurement.cycles = 0;
        let text = serde_json::to_string(&c).expect("plain data serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Seed for a named random stream.
    pub fn stream_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, name)
    }
}

/// First eight bytes of `SHA-256(master ‖ name)`.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
