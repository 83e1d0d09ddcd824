//! Clamped-tanh reward components and their sum.
//!
//! Every objective is scored with
//! `min(tanh(c1·f + c2)·c3 + c4·f + c5, 0)` on its own metric `f`, so each
//! component, and therefore the total, is non-positive.

use serde::{Deserialize, Serialize};

use crate::constants::EngineConstants;
use crate::error::{LabError, Result};

/// Component order used in breakdowns, logs and sums.
pub const COMPONENTS: [&str; 6] = ["load", "stability", "gradient", "safety", "efficiency", "ethanol"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub c: [f64; 5],
    pub enabled: bool,
}

impl RewardRow {
    pub const fn new(c: [f64; 5], enabled: bool) -> Self {
        RewardRow { c, enabled }
    }

    pub fn eval(&self, f: f64) -> f64 {
        reward_term(f, &self.c)
    }
}

/// How the efficiency metric enters its row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencySign {
    /// f = η with the tabulated constants; higher efficiency scores worse.
    Verbatim,
    /// f = −η so that higher efficiency scores better.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub load: RewardRow,
    pub stability: RewardRow,
    pub gradient: RewardRow,
    pub safety: RewardRow,
    pub efficiency: RewardRow,
    pub ethanol: RewardRow,
    /// Target ethanol energy share in [0, 1].
    pub ethanol_target: f64,
    pub efficiency_sign: EfficiencySign,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            load: RewardRow::new([3.0, 0.0, -1.5, -0.1, 0.0], true),
            stability: RewardRow::new([0.015, 0.0, -0.5, -5e-4, 0.0], true),
            gradient: RewardRow::new([20.0, -2.0, -0.25, -1.0, -0.241], true),
            safety: RewardRow::new([-7.0, -2.0, -0.25, 0.4, -0.241], true),
            efficiency: RewardRow::new([0.0, 0.0, 0.0, -5e-3, -0.2], true),
            ethanol: RewardRow::new([100.0, 0.0, -0.75, -10.0, 0.0], false),
            ethanol_target: 0.5,
            efficiency_sign: EfficiencySign::Corrected,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ethanol_target) {
            return Err(LabError::Config("ethanol target must lie in [0, 1]".into()));
        }
        if self.rows().iter().any(|r| r.c.iter().any(|c| !c.is_finite())) {
            return Err(LabError::Config("reward constants must be finite".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> [&RewardRow; 6] {
        [
            &self.load,
            &self.stability,
            &self.gradient,
            &self.safety,
            &self.efficiency,
            &self.ethanol,
        ]
    }
}

/// `min(tanh(c1·f + c2)·c3 + c4·f + c5, 0)`
pub fn reward_term(f: f64, c: &[f64; 5]) -> f64 {
    ((c[0] * f + c[1]).tanh() * c[2] + c[3] * f + c[4]).min(0.0)
}

/// Indicated efficiency `pmi·V_H / (m_g·LCV_g + m_e·LCV_e)` with masses in mg.
pub fn efficiency(pmi: f64, m_g: f64, m_e: f64, constants: &EngineConstants) -> Result<f64> {
    let fuel = constants.fuel_energy(m_g, m_e);
    if !(fuel > 0.0) {
        return Err(LabError::Undefined("efficiency without injected fuel"));
    }
    Ok(constants.indicated_work(pmi) / fuel)
}

/// Share of fuel energy supplied by ethanol.
pub fn ethanol_energy_share(m_g: f64, m_e: f64, constants: &EngineConstants) -> Result<f64> {
    let fuel = constants.fuel_energy(m_g, m_e);
    if !(fuel > 0.0) {
        return Err(LabError::Undefined("ethanol share without injected fuel"));
    }
    Ok(m_e * constants.lcv_ethanol / fuel)
}

/// Physical quantities of one cycle that the reward is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub pmi: f64,
    pub pmi_sp: f64,
    pub alpha50: f64,
    pub alpha50_prev: f64,
    pub dpmax: f64,
    pub dpmax_limit: f64,
    /// Safety monitor distance Δr_SF, ≤ 0.
    pub dr_sf: f64,
    /// Efficiency as a fraction; 0 for misfires.
    pub eta: f64,
    pub ethanol_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Metric fed to each row, in [`COMPONENTS`] order.
    pub metrics: [f64; 6],
    /// Component values; disabled components are 0.
    pub components: [f64; 6],
    pub total: f64,
}

impl RewardBreakdown {
    /// Sum of the components in order. Equals `total` bit for bit.
    pub fn recompute_total(components: &[f64; 6]) -> f64 {
        components.iter().fold(0.0, |acc, c| acc + c)
    }
}

pub fn total_reward(inputs: &RewardInputs, params: &RewardParams) -> RewardBreakdown {
    let eff_metric = match params.efficiency_sign {
        EfficiencySign::Verbatim => inputs.eta,
        EfficiencySign::Corrected => -inputs.eta,
    };
    let d_pmi = inputs.pmi - inputs.pmi_sp;
    let d_alpha = inputs.alpha50 - inputs.alpha50_prev;
    let d_x = inputs.ethanol_share - params.ethanol_target;
    let metrics = [
        d_pmi * d_pmi,
        d_alpha * d_alpha,
        inputs.dpmax - inputs.dpmax_limit,
        inputs.dr_sf,
        eff_metric,
        d_x * d_x,
    ];
    let rows = params.rows();
    let components: [f64; 6] =
        std::array::from_fn(|i| if rows[i].enabled { rows[i].eval(metrics[i]) } else { 0.0 });
    RewardBreakdown {
        metrics,
        components,
        total: RewardBreakdown::recompute_total(&components),
    }
}
