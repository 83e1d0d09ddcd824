//! The per-cycle observation handed to the agent.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Number of observation components.
pub const STATE_DIM: usize = 8;

/// Observation for one combustion cycle: integral features of the previous
/// cycle plus the previous and current load setpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    /// Combustion phasing of the previous cycle, °CA.
    pub alpha50_prev: f64,
    /// Heat release of the previous cycle, J.
    pub q_prev: f64,
    /// IMEP of the previous cycle, bar.
    pub pmi_prev: f64,
    /// Maximum pressure rise rate of the previous cycle, bar/°CA.
    pub dpmax_prev: f64,
    /// Ion-current peak of the previous cycle (arbitrary units).
    pub ion_max_prev: f64,
    /// Ion-current integral of the previous cycle (arbitrary units).
    pub ion_int_prev: f64,
    /// Setpoint that applied to the previous cycle, bar.
    pub pmi_sp_prev: f64,
    /// Setpoint for the upcoming cycle, bar.
    pub pmi_sp: f64,
}

impl CycleState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.alpha50_prev,
            self.q_prev,
            self.pmi_prev,
            self.dpmax_prev,
            self.ion_max_prev,
            self.ion_int_prev,
            self.pmi_sp_prev,
            self.pmi_sp,
        ]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        CycleState {
            alpha50_prev: a[0],
            q_prev: a[1],
            pmi_prev: a[2],
            dpmax_prev: a[3],
            ion_max_prev: a[4],
            ion_int_prev: a[5],
            pmi_sp_prev: a[6],
            pmi_sp: a[7],
        }
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let a: [f64; STATE_DIM] = s.try_into().map_err(|_| LabError::Dimension {
            expected: STATE_DIM,
            got: s.len(),
        })?;
        Ok(Self::from_array(a))
    }

    /// Round every component through `f32`, as happens on the wire.
    pub fn quantized(&self) -> Self {
        Self::from_array(self.to_array().map(|v| v as f32 as f64))
    }

    /// Checks finiteness, non-negative ion features and the setpoint range.
    pub fn validate(&self, setpoint_range: (f64, f64)) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(LabError::Contract("non-finite state component".into()));
        }
        if self.ion_max_prev < 0.0 || self.ion_int_prev < 0.0 {
            return Err(LabError::Contract("negative ion feature".into()));
        }
        let (lo, hi) = setpoint_range;
        for sp in [self.pmi_sp_prev, self.pmi_sp] {
            if sp < lo || sp > hi {
                return Err(LabError::Contract(format!(
                    "setpoint {sp} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Per-component min/max used to scale observations into [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateRanges {
    pub min: [f64; STATE_DIM],
    pub max: [f64; STATE_DIM],
}

impl Default for StateRanges {
    fn default() -> Self {
        StateRanges {
            min: [-10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0],
            max: [30.0, 1000.0, 6.0, 12.0, 20.0, 150.0, 4.0, 4.0],
        }
    }
}

impl StateRanges {
    pub fn validate(&self) -> Result<()> {
        for j in 0..STATE_DIM {
            if !(self.min[j] < self.max[j]) {
                return Err(LabError::Config(format!(
                    "state range {j}: min {} must be below max {}",
                    self.min[j], self.max[j]
                )));
            }
        }
        Ok(())
    }

    /// Min-max scaling of each component to [-1, 1]. Values outside the
    /// configured range extrapolate linearly.
    pub fn normalize(&self, s: &CycleState) -> [f64; STATE_DIM] {
        let a = s.to_array();
        let mut out = [0.0; STATE_DIM];
        for j in 0..STATE_DIM {
            out[j] = 2.0 * (a[j] - self.min[j]) / (self.max[j] - self.min[j]) - 1.0;
        }
        out
    }
}
