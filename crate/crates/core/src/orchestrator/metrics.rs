use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cycle_log::CycleRecord;
use crate::error::{LabError, Result};

/// Aggregate quality metrics of a stretch of cycles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub cycles: usize,
    /// Root mean square IMEP tracking error, bar.
    pub rmse_pmi: f64,
    /// √Σ(Δα50)² over consecutive cycles, °CA.
    pub stability: f64,
    /// Cycles with dpmax above the limit.
    pub violations: usize,
    /// Mean excess over the limit among violating cycles, bar/°CA.
    pub mean_overshoot: f64,
    pub mean_eta: f64,
    /// Root mean square deviation of the ethanol energy share from target.
    pub ethanol_rmse: f64,
    pub mean_ethanol_share: f64,
    pub total_reward: f64,
    pub replaced: usize,
    pub fallbacks: usize,
    pub misfires: usize,
}

pub fn export_metrics(records: &[CycleRecord], dpmax_limit: f64, ethanol_target: f64) -> Result<Metrics> {
    if records.is_empty() {
        return Err(LabError::EmptyLog("no cycles to aggregate"));
    }
    let n = records.len() as f64;
    let sq_pmi: f64 = records.iter().map(|r| (r.pmi - r.s_pmi_sp).powi(2)).sum();
    let stability = records
        .windows(2)
        .map(|w| (w[1].alpha50 - w[0].alpha50).powi(2))
        .sum::<f64>()
        .sqrt();
    let over: Vec<f64> = records
        .iter()
        .filter(|r| r.dpmax > dpmax_limit)
        .map(|r| r.dpmax - dpmax_limit)
        .collect();
    let mean_overshoot = if over.is_empty() {
        0.0
    } else {
        over.iter().sum::<f64>() / over.len() as f64
    };
    let sq_eth: f64 = records.iter().map(|r| (r.ethanol_share - ethanol_target).powi(2)).sum();
    Ok(Metrics {
        cycles: records.len(),
        rmse_pmi: (sq_pmi / n).sqrt(),
        stability,
        violations: over.len(),
        mean_overshoot,
        mean_eta: records.iter().map(|r| r.eta).sum::<f64>() / n,
        ethanol_rmse: (sq_eth / n).sqrt(),
        mean_ethanol_share: records.iter().map(|r| r.ethanol_share).sum::<f64>() / n,
        total_reward: records.iter().map(|r| r.reward).sum(),
        replaced: records.iter().filter(|r| r.replaced).count(),
        fallbacks: records.iter().filter(|r| r.fallback).count(),
        misfires: records.iter().filter(|r| r.misfire).count(),
    })
}

/// Cumulative reward of each complete group of `group` consecutive cycles.
pub fn training_curve(rewards: &[f64], group: usize) -> Vec<f64> {
    if group == 0 {
        return Vec::new();
    }
    rewards.chunks_exact(group).map(|c| c.iter().sum()).collect()
}

pub fn write_training_curve(path: &Path, curve: &[f64], group: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::csv(path, e))?;
    w.write_record(["group", "first_cycle", "cycles", "cumulative_reward"])
        .map_err(|e| LabError::csv(path, e))?;
    for (i, r) in curve.iter().enumerate() {
        w.write_record([
            i.to_string(),
            (i * group).to_string(),
            group.to_string(),
            r.to_string(),
        ])
        .map_err(|e| LabError::csv(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Least-squares slope of `y` against its index.
pub fn trend_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_groups() {
        let r: Vec<f64> = (0..2500).map(|i| -(i as f64 % 3.0)).collect();
        let c = training_curve(&r, 1000);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], r[..1000].iter().sum::<f64>());
    }

    #[test]
    fn slope() {
        assert!((trend_slope(&[1.0, 2.0, 3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(trend_slope(&[2.0, 2.0, 2.0]), 0.0);
        assert!(trend_slope(&[3.0, 1.0]) < 0.0);
    }
}
