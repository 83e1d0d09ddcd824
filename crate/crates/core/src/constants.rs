use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Physical constants of the test engine and its fuels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConstants {
    /// Displaced volume, m³.
    pub displacement_m3: f64,
    /// Lower calorific value of gasoline, MJ/kg (numerically J/mg).
    pub lcv_gasoline: f64,
    /// Lower calorific value of ethanol, MJ/kg.
    pub lcv_ethanol: f64,
    /// Pressure rise rate limit, bar/°CA.
    pub dpmax_limit: f64,
    /// Tolerated IMEP shortfall below the setpoint, bar.
    pub misfire_tolerance: f64,
    /// Ethanol injector minimum opening time, ms.
    pub ethanol_min_opening_ms: f64,
}

impl Default for EngineConstants {
    fn default() -> Self {
        EngineConstants {
            displacement_m3: 0.5e-3,
            lcv_gasoline: 44.3,
            lcv_ethanol: 26.8,
            dpmax_limit: 5.0,
            misfire_tolerance: 0.3,
            ethanol_min_opening_ms: 0.08,
        }
    }
}

impl EngineConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.displacement_m3,
            self.lcv_gasoline,
            self.lcv_ethanol,
            self.dpmax_limit,
            self.misfire_tolerance,
            self.ethanol_min_opening_ms,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(LabError::Config("engine constants must be strictly positive".into()))
        }
    }

    /// Fuel energy of the injected masses (mg), J.
    pub fn fuel_energy(&self, m_g: f64, m_e: f64) -> f64 {
        m_g * self.lcv_gasoline + m_e * self.lcv_ethanol
    }

    /// Indicated work of one cycle at the given IMEP, J.
    pub fn indicated_work(&self, pmi_bar: f64) -> f64 {
        pmi_bar * 1e5 * self.displacement_m3
    }
}
