//! Actuator commands and the normalized action space around a load-dependent
//! start point.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Number of actuators.
pub const ACTION_DIM: usize = 3;

/// Physical actuator commands for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    /// NVO duration, °CA.
    pub alpha_nvo: f64,
    /// Gasoline injection duration, ms.
    pub t_inj_g: f64,
    /// Ethanol injection duration, ms.
    pub t_inj_e: f64,
}

impl ActionVector {
    pub const fn new(alpha_nvo: f64, t_inj_g: f64, t_inj_e: f64) -> Self {
        ActionVector {
            alpha_nvo,
            t_inj_g,
            t_inj_e,
        }
    }

    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        [self.alpha_nvo, self.t_inj_g, self.t_inj_e]
    }

    pub fn from_array(a: [f64; ACTION_DIM]) -> Self {
        ActionVector::new(a[0], a[1], a[2])
    }
}

/// Unbounded actor output, before the tanh range mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAction(pub [f64; ACTION_DIM]);

impl RawAction {
    pub fn new(values: [f64; ACTION_DIM]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Contract("raw action must be finite".into()));
        }
        Ok(RawAction(values))
    }

    pub fn quantized(&self) -> Self {
        RawAction(self.0.map(|v| v as f32 as f64))
    }
}

/// One row of the load-indexed start-point table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    /// Load setpoint, bar.
    pub setpoint: f64,
    pub action: ActionVector,
}

/// Actuator bounds and the start point table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub min: [f64; ACTION_DIM],
    pub max: [f64; ACTION_DIM],
    pub start_points: Vec<StartPoint>,
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            min: [170.0, 0.25, 0.0],
            max: [210.0, 1.0, 0.4],
            start_points: default_start_points(),
        }
    }
}

/// Start points at 2.0, 2.5, ..., 4.0 bar.
pub fn default_start_points() -> Vec<StartPoint> {
    [2.0, 2.5, 3.0, 3.5, 4.0]
        .into_iter()
        .map(|s: f64| StartPoint {
            setpoint: s,
            action: ActionVector::new(
                200.0 - 6.0 * (s - 2.0),
                0.40 + 0.14 * (s - 2.0),
                0.04 + 0.03 * (s - 2.0),
            ),
        })
        .collect()
}

impl ActionBounds {
    pub fn new(
        min: [f64; ACTION_DIM],
        max: [f64; ACTION_DIM],
        start_points: Vec<StartPoint>,
    ) -> Result<Self> {
        let b = ActionBounds {
            min,
            max,
            start_points,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..ACTION_DIM {
            if !(self.min[j] < self.max[j]) {
                return Err(LabError::Config(format!(
                    "action {j}: u_min {} must be below u_max {}",
                    self.min[j], self.max[j]
                )));
            }
        }
        if self.start_points.is_empty() {
            return Err(LabError::Config("start point table is empty".into()));
        }
        for w in self.start_points.windows(2) {
            if !(w[0].setpoint < w[1].setpoint) {
                return Err(LabError::Config(
                    "start point setpoints must be strictly increasing".into(),
                ));
            }
        }
        for sp in &self.start_points {
            if !self.strictly_inside(&sp.action) {
                return Err(LabError::Config(format!(
                    "start point for {} bar is not strictly inside the bounds",
                    sp.setpoint
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, u: &ActionVector) -> bool {
        u.to_array()
            .iter()
            .enumerate()
            .all(|(j, v)| *v >= self.min[j] && *v <= self.max[j])
    }

    fn strictly_inside(&self, u: &ActionVector) -> bool {
        u.to_array()
            .iter()
            .enumerate()
            .all(|(j, v)| *v > self.min[j] && *v < self.max[j])
    }

    pub fn clip(&self, u: &ActionVector) -> ActionVector {
        let a = u.to_array();
        ActionVector::from_array(std::array::from_fn(|j| a[j].clamp(self.min[j], self.max[j])))
    }

    /// Start point for a setpoint: piecewise-linear in the table, clamped to
    /// the end rows outside it.
    pub fn start_point(&self, setpoint: f64) -> ActionVector {
        let table = &self.start_points;
        let first = &table[0];
        let last = &table[table.len() - 1];
        if setpoint <= first.setpoint {
            return first.action;
        }
        if setpoint >= last.setpoint {
            return last.action;
        }
        let i = table
            .windows(2)
            .position(|w| setpoint <= w[1].setpoint)
            .unwrap_or(table.len() - 2);
        let (a, b) = (&table[i], &table[i + 1]);
        let t = (setpoint - a.setpoint) / (b.setpoint - a.setpoint);
        let (ua, ub) = (a.action.to_array(), b.action.to_array());
        ActionVector::from_array(std::array::from_fn(|j| ua[j] + t * (ub[j] - ua[j])))
    }

    /// Setpoint range covered by the start point table.
    pub fn setpoint_range(&self) -> (f64, f64) {
        (
            self.start_points[0].setpoint,
            self.start_points[self.start_points.len() - 1].setpoint,
        )
    }

    /// Inverse of the tanh range mapping. Components at a bound are pulled
    /// in by `1e-9` of the tanh range so the result stays finite.
    pub fn raw_from_action(&self, u: &ActionVector) -> RawAction {
        let a = u.to_array();
        RawAction(std::array::from_fn(|j| {
            let y = 2.0 * (a[j] - self.min[j]) / (self.max[j] - self.min[j]) - 1.0;
            y.clamp(-1.0 + 1e-9, 1.0 - 1e-9).atanh()
        }))
    }
}

/// Normalized coordinates of `u` relative to `u_start`: each component is
/// scaled by the distance from the start point to the bound it moves toward.
pub fn normalize_action(
    u: &ActionVector,
    u_start: &ActionVector,
    bounds: &ActionBounds,
) -> Result<[f64; ACTION_DIM]> {
    if !bounds.contains(u) {
        return Err(LabError::OutOfBounds(format!("{u:?}")));
    }
    let (a, s) = (u.to_array(), u_start.to_array());
    let mut out = [0.0; ACTION_DIM];
    for j in 0..ACTION_DIM {
        out[j] = if a[j] >= s[j] {
            (a[j] - s[j]) / (bounds.max[j] - s[j])
        } else {
            -(a[j] - s[j]) / (bounds.min[j] - s[j])
        };
    }
    Ok(out)
}

/// Inverse of [`normalize_action`].
pub fn denormalize_action(
    u_norm: &[f64; ACTION_DIM],
    u_start: &ActionVector,
    bounds: &ActionBounds,
) -> Result<ActionVector> {
    if u_norm.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(LabError::Contract(format!(
            "normalized action {u_norm:?} outside [-1, 1]"
        )));
    }
    let s = u_start.to_array();
    Ok(ActionVector::from_array(std::array::from_fn(|j| {
        if u_norm[j] >= 0.0 {
            s[j] + u_norm[j] * (bounds.max[j] - s[j])
        } else {
            s[j] - u_norm[j] * (bounds.min[j] - s[j])
        }
    })))
}

pub fn norm(v: &[f64; ACTION_DIM]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64; ACTION_DIM], b: &[f64; ACTION_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds() -> ActionBounds {
        ActionBounds::default()
    }

    #[test]
    fn start_point_normalizes_to_zero() {
        let b = bounds();
        let s = ActionVector::new(190.0, 0.6, 0.1);
        assert_eq!(normalize_action(&s, &s, &b).unwrap(), [0.0; 3]);
    }

    #[test]
    fn nvo_example() {
        let b = bounds();
        let s = ActionVector::new(190.0, 0.6, 0.1);
        let u = ActionVector::new(205.0, 0.6, 0.1);
        let n = normalize_action(&u, &s, &b).unwrap();
        assert_eq!(n, [0.75, 0.0, 0.0]);
        let back = denormalize_action(&n, &s, &b).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn lower_bound_maps_to_minus_one() {
        let b = bounds();
        let s = ActionVector::new(190.0, 0.6, 0.1);
        let u = ActionVector::from_array(b.min);
        assert_eq!(normalize_action(&u, &s, &b).unwrap(), [-1.0; 3]);
        let back = denormalize_action(&[-1.0; 3], &s, &b).unwrap();
        assert_eq!(back.to_array(), b.min);
        assert_eq!(denormalize_action(&[0.0; 3], &s, &b).unwrap(), s);
    }

    #[test]
    fn out_of_range_inputs_rejected() {
        let b = bounds();
        let s = ActionVector::new(190.0, 0.6, 0.1);
        assert!(denormalize_action(&[1.01, 0.0, 0.0], &s, &b).is_err());
        assert!(normalize_action(&ActionVector::new(220.0, 0.6, 0.1), &s, &b).is_err());
    }

    #[test]
    fn bounds_validation() {
        let mut b = bounds();
        b.start_points[1].setpoint = 1.0;
        assert!(b.validate().is_err());
        let mut b = bounds();
        b.start_points[0].action.alpha_nvo = 170.0;
        assert!(b.validate().is_err());
        let mut b = bounds();
        b.min[1] = 1.0;
        assert!(b.validate().is_err());
        assert!(bounds().validate().is_ok());
    }

    #[test]
    fn start_point_interpolates_and_clamps() {
        let b = bounds();
        assert_eq!(b.start_point(1.0), b.start_points[0].action);
        assert_eq!(b.start_point(9.0), b.start_points[4].action);
        let mid = b.start_point(2.25);
        let (lo, hi) = (b.start_points[0].action, b.start_points[1].action);
        assert!((mid.alpha_nvo - 0.5 * (lo.alpha_nvo + hi.alpha_nvo)).abs() < 1e-12);
        assert!((mid.t_inj_g - 0.5 * (lo.t_inj_g + hi.t_inj_g)).abs() < 1e-12);
    }

    #[test]
    fn raw_inverse_of_tanh_mapping() {
        let b = bounds();
        let u = ActionVector::new(195.0, 0.5, 0.2);
        let raw = b.raw_from_action(&u);
        for j in 0..3 {
            let back = b.min[j] + (raw.0[j].tanh() + 1.0) / 2.0 * (b.max[j] - b.min[j]);
            assert!((back - u.to_array()[j]).abs() < 1e-9);
        }
        assert!(b.raw_from_action(&ActionVector::from_array(b.max)).0.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn normalize_denormalize_round_trip(
            a in -1.0f64..=1.0, c in -1.0f64..=1.0, e in -1.0f64..=1.0, sp in 1.5f64..4.5,
        ) {
            let b = bounds();
            let s = b.start_point(sp);
            let n = [a, c, e];
            let u = denormalize_action(&n, &s, &b).unwrap();
            let back = normalize_action(&u, &s, &b).unwrap();
            for j in 0..3 {
                prop_assert!((back[j] - n[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn interpolated_start_points_inside_bounds(sp in 0.0f64..6.0) {
            let b = bounds();
            let s = b.start_point(sp).to_array();
            for j in 0..3 {
                prop_assert!(s[j] > b.min[j] && s[j] < b.max[j]);
            }
        }
    }
}
