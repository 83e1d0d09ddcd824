use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Crank-slider cylinder geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderGeometry {
    /// m
    pub bore: f64,
    /// m
    pub stroke: f64,
    pub compression_ratio: f64,
    /// Displaced volume, m³.
    pub displacement: f64,
    /// Connecting-rod length over crank radius.
    pub conrod_ratio: f64,
}

impl Default for CylinderGeometry {
    fn default() -> Self {
        CylinderGeometry {
            bore: 0.084,
            stroke: 0.090,
            compression_ratio: 12.0,
            displacement: 499e-6,
            conrod_ratio: 3.5,
        }
    }
}

impl CylinderGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.bore > 0.0 && self.stroke > 0.0 && self.displacement > 0.0) {
            return Err(LabError::Config("geometry dimensions must be positive".into()));
        }
        if !(self.compression_ratio > 1.0) {
            return Err(LabError::Config("compression ratio must exceed 1".into()));
        }
        if !(self.conrod_ratio > 1.0) {
            return Err(LabError::Config("conrod ratio must exceed 1".into()));
        }
        Ok(())
    }

    /// Clearance volume V_H/(CR − 1), m³.
    pub fn v_min(&self) -> f64 {
        self.displacement / (self.compression_ratio - 1.0)
    }

    pub fn v_max(&self) -> f64 {
        self.v_min() + self.displacement
    }

    /// Piston displacement from TDC as a fraction of the stroke.
    fn stroke_fraction(&self, theta_deg: f64) -> f64 {
        let t = theta_deg.to_radians();
        let lam = self.conrod_ratio;
        let s = t.sin();
        0.5 * (1.0 - t.cos() + lam - (lam * lam - s * s).sqrt())
    }

    /// dV/dθ in m³ per °CA.
    pub fn volume_derivative(&self, theta_deg: f64) -> f64 {
        let t = theta_deg.to_radians();
        let lam = self.conrod_ratio;
        let (s, c) = t.sin_cos();
        let dx = 0.5 * (s + s * c / (lam * lam - s * s).sqrt());
        self.displacement * dx * std::f64::consts::PI / 180.0
    }
}

/// Cylinder volume in m³ at crank angle `theta` (°CA, 0 = firing TDC).
pub fn cylinder_volume(theta_deg: f64, geom: &CylinderGeometry) -> f64 {
    geom.v_min() + geom.displacement * geom.stroke_fraction(theta_deg)
}

/// Maximum quadrature step, °CA.
const STEP_DEG: f64 = 0.1;

/// Partial IMEP in bar contributed by an isentropic expansion from
/// `theta_from` to BDC, starting at pressure `p50` bar.
///
/// Integrates `p50·(V(θ_from)/V(θ))^κ · dV/dθ` with composite Simpson and
/// divides by the displacement.
pub fn predict_expansion_imep(
    p50: f64,
    theta_from: f64,
    kappa: f64,
    geom: &CylinderGeometry,
) -> Result<f64> {
    if !(p50 >= 0.0) {
        return Err(LabError::Contract(format!("p50 must be non-negative, got {p50}")));
    }
    if !(kappa > 1.0 && kappa <= 1.7) {
        return Err(LabError::Contract(format!("kappa must lie in (1, 1.7], got {kappa}")));
    }
    if !(0.0..180.0).contains(&theta_from) {
        return Err(LabError::Contract(format!("theta_from must lie in [0, 180), got {theta_from}")));
    }
    if p50 == 0.0 {
        return Ok(0.0);
    }
    let span = 180.0 - theta_from;
    let mut n = (span / STEP_DEG).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let h = span / n as f64;
    let v0 = cylinder_volume(theta_from, geom);
    let f = |theta: f64| {
        let v = cylinder_volume(theta, geom);
        p50 * (v0 / v).powf(kappa) * geom.volume_derivative(theta)
    };
    let mut sum = f(theta_from) + f(180.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(theta_from + i as f64 * h);
    }
    Ok(sum * h / 3.0 / geom.displacement)
}
