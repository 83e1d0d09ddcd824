//! Safe DDPG control of a stochastic HCCI engine surrogate.
//!
//! The crate bundles the pieces of a cycle-synchronous control loop: a
//! small feed-forward network library, the actor-critic agent, the
//! multi-objective reward, a k-nearest-neighbor action monitor with its
//! boundary measurement procedure, the engine surrogate, an optional UDP
//! split between environment and agent, and the orchestration that ties
//! them into measure / train / adapt / validate runs.

pub mod action;
pub mod classifier;
pub mod config;
pub mod constants;
pub mod cycle_log;
pub mod ddpg;
pub mod directions;
pub mod engine;
pub mod error;
pub mod measurement;
pub mod nn;
pub mod orchestrator;
pub mod profile;
pub mod reward;
pub mod safety;
pub mod session;
pub mod state;
pub mod udp;

pub use action::{ActionBounds, ActionVector, RawAction, StartPoint};
pub use classifier::{classify_state, ClassifierConfig};
pub use config::LabConfig;
pub use constants::EngineConstants;
pub use directions::{default_direction_set, DirectionSet};
pub use error::{LabError, Result};
pub use state::{CycleState, StateRanges};
