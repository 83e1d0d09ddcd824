//! Deep deterministic policy gradient agent and its replay buffer.

mod agent;
mod buffer;

pub use agent::{decay_sigma, discounted_return, polyak, Agent, AgentConfig, Critic, TrainingReport};
pub use buffer::{sample_indices, Experience, ReplayBuffer};
