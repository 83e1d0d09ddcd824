//! k-nearest-neighbor action monitor over the learned limitation matrices.

mod limits;
mod monitor;

pub use limits::{fingerprint, sidecar_path, Cell, LimitationMatrices, LIMITS_FORMAT_VERSION};
pub use monitor::{
    filter_action, map_raw_action, neighborhood, perpendicular_distance, safe_radius,
    FilterOutcome, Neighborhood, SafetyConfig,
};
