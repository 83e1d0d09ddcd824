//! HCCI cycle surrogate and cylinder geometry utilities.

mod geometry;
mod sim;

pub use geometry::{cylinder_volume, predict_expansion_imep, CylinderGeometry};
pub use sim::{
    CombustionEnv, CombustionModel, CycleOutputs, EngineSim, EngineSimConfig, FuelPath, NoiseConfig,
    SimMemory,
};
