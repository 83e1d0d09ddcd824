use serde::{Deserialize, Serialize};

use super::limits::LimitationMatrices;
use crate::action::{denormalize_action, dot, norm, normalize_action, ActionBounds, ActionVector, RawAction, ACTION_DIM};
use crate::classifier::classify_state;
use crate::error::{LabError, Result};
use crate::state::CycleState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    /// Tolerance Δr_tol added to the interpolated safe radius.
    pub tolerance: f64,
    /// Number of neighboring directions used for interpolation.
    pub n_neighbors: usize,
    /// bar/°CA
    pub dpmax_limit: f64,
    /// bar below setpoint
    pub misfire_tolerance: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            tolerance: 0.15,
            n_neighbors: 3,
            dpmax_limit: 5.0,
            misfire_tolerance: 0.3,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self, n_directions: usize) -> Result<()> {
        if !(self.tolerance >= 0.0) {
            return Err(LabError::Config("safety tolerance must be non-negative".into()));
        }
        if self.n_neighbors == 0 || self.n_neighbors > n_directions {
            return Err(LabError::Config(format!(
                "n_neighbors must lie in [1, {n_directions}]"
            )));
        }
        Ok(())
    }
}

/// `u_min + (tanh(u_raw) + 1)/2 · (u_max − u_min)` per component.
pub fn map_raw_action(u_raw: &RawAction, bounds: &ActionBounds) -> ActionVector {
    ActionVector::from_array(std::array::from_fn(|j| {
        bounds.min[j] + (u_raw.0[j].tanh() + 1.0) / 2.0 * (bounds.max[j] - bounds.min[j])
    }))
}

/// Distance from `u_norm` to the line spanned by `v`.
pub fn perpendicular_distance(u_norm: &[f64; ACTION_DIM], v: &[f64; ACTION_DIM]) -> f64 {
    let s = dot(u_norm, v) / dot(v, v);
    let resid: [f64; ACTION_DIM] = std::array::from_fn(|j| u_norm[j] - s * v[j]);
    norm(&resid)
}

/// The neighborhood chosen for one query: direction indices, distances and
/// normalized weights, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub directions: Vec<usize>,
    pub distances: Vec<f64>,
    /// Normalized weights; empty when no neighbor carries information.
    pub weights: Vec<f64>,
}

pub fn neighborhood(
    u_norm: &[f64; ACTION_DIM],
    class: usize,
    mats: &LimitationMatrices,
    n_neighbors: usize,
) -> Neighborhood {
    let mut cand: Vec<(f64, usize)> = mats
        .directions()
        .iter()
        .enumerate()
        .filter(|(_, v)| dot(v, u_norm) > 0.0)
        .map(|(l, v)| (perpendicular_distance(u_norm, v), l))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(n_neighbors);

    let directions: Vec<usize> = cand.iter().map(|c| c.1).collect();
    let distances: Vec<f64> = cand.iter().map(|c| c.0).collect();
    if cand.is_empty() {
        return Neighborhood { directions, distances, weights: Vec::new() };
    }
    let d_min = distances[0];
    let d_max = distances[distances.len() - 1];
    let spread = d_max - d_min;
    let raw: Vec<f64> = cand
        .iter()
        .map(|&(d, l)| {
            let z = mats.z_lim(class, l) as f64;
            if spread <= 1e-12 {
                z
            } else {
                (d_max - d) / spread * z
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        Vec::new()
    };
    Neighborhood { directions, distances, weights }
}

/// Maximum allowed distance from the start point along `u_norm` for `class`.
pub fn safe_radius(
    u_norm: &[f64; ACTION_DIM],
    class: usize,
    mats: &LimitationMatrices,
    cfg: &SafetyConfig,
) -> f64 {
    let nb = neighborhood(u_norm, class, mats, cfg.n_neighbors);
    cfg.tolerance
        + nb
            .weights
            .iter()
            .zip(&nb.directions)
            .map(|(w, &l)| w * mats.r_lim(class, l))
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutcome {
    /// Action passed to the engine.
    pub action: ActionVector,
    /// The agent's action after range mapping.
    pub mapped: ActionVector,
    pub class: usize,
    /// Norm of the agent's normalized action.
    pub norm: f64,
    pub r_safe: f64,
    /// min(r_safe − ‖u_norm‖, 0)
    pub dr_sf: f64,
    pub replaced: bool,
}

/// Maps the raw action, checks it against the class-dependent safe radius
/// and pulls it back onto the safe sphere along the same ray if it lies
/// outside.
pub fn filter_action(
    u_raw: &RawAction,
    state: &CycleState,
    mats: &LimitationMatrices,
    cfg: &SafetyConfig,
    bounds: &ActionBounds,
) -> Result<FilterOutcome> {
    let mapped = map_raw_action(u_raw, bounds);
    let start = bounds.start_point(state.pmi_sp);
    let class = classify_state(state, mats.classifier());
    let u_norm = normalize_action(&mapped, &start, bounds)?;
    let n = norm(&u_norm);
    if n == 0.0 {
        return Ok(FilterOutcome {
            action: mapped,
            mapped,
            class,
            norm: 0.0,
            r_safe: cfg.tolerance,
            dr_sf: 0.0,
            replaced: false,
        });
    }
    let r_safe = safe_radius(&u_norm, class, mats, cfg);
    if n > r_safe {
        let scale = r_safe / n;
        let safe = u_norm.map(|x| x * scale);
        let action = denormalize_action(&safe, &start, bounds)?;
        Ok(FilterOutcome {
            action,
            mapped,
            class,
            norm: n,
            r_safe,
            dr_sf: (r_safe - n).min(0.0),
            replaced: true,
        })
    } else {
        Ok(FilterOutcome {
            action: mapped,
            mapped,
            class,
            norm: n,
            r_safe,
            dr_sf: 0.0,
            replaced: false,
        })
    }
}
