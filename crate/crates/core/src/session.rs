//! Agent-side bookkeeping shared by in-process and UDP execution.

use serde::{Deserialize, Serialize};

use crate::action::RawAction;
use crate::ddpg::{Agent, Experience, ReplayBuffer, TrainingReport};
use crate::error::Result;
use crate::state::CycleState;

/// Whether an episode trains the agent or only evaluates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Validation,
}

/// Turns the per-cycle stream `(state, reward of the previous action, done)`
/// into actions and experiences, and trains at episode end.
///
/// The first message of an episode carries no transition. The terminal
/// message (`done`) carries the state after the last action; it completes
/// the final experience, triggers end-of-episode training and is answered
/// with a zero action that the environment ignores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSession {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub replay_batches: usize,
    /// Round actions through 32-bit floats, as the wire does.
    pub quantize: bool,
    pending: Option<(CycleState, RawAction)>,
    episode: Vec<Experience>,
    phase: Option<Phase>,
    pub reports: Vec<TrainingReport>,
}

impl AgentSession {
    pub fn new(agent: Agent, buffer: ReplayBuffer, replay_batches: usize, quantize: bool) -> Self {
        AgentSession {
            agent,
            buffer,
            replay_batches,
            quantize,
            pending: None,
            episode: Vec::new(),
            phase: None,
            reports: Vec::new(),
        }
    }

    pub fn in_episode(&self) -> bool {
        self.phase.is_some()
    }

    pub fn step(&mut self, phase: Phase, state: &CycleState, prev_reward: f64, done: bool) -> Result<RawAction> {
        let phase = *self.phase.get_or_insert(phase);
        if let Some((s_prev, u)) = self.pending.take() {
            if phase == Phase::Train {
                let e = Experience {
                    s_prev,
                    u,
                    s_next: *state,
                    reward: prev_reward,
                    done,
                };
                self.buffer.push(e);
                self.episode.push(e);
            }
        }
        if done {
            self.phase = None;
            if phase == Phase::Train {
                let episode = std::mem::take(&mut self.episode);
                let report = self
                    .agent
                    .end_of_episode_training(&mut self.buffer, &episode, self.replay_batches)?;
                self.reports.push(report);
            }
            self.episode.clear();
            return Ok(RawAction([0.0; 3]));
        }
        let sigma = match phase {
            Phase::Train => self.agent.sigma,
            Phase::Validation => 0.0,
        };
        let mut u = self.agent.act_with_sigma(state, sigma)?;
        if self.quantize {
            u = u.quantized();
        }
        self.pending = Some((*state, u));
        Ok(u)
    }

    /// Buffers logged experiences, e.g. from a measurement run.
    pub fn prefill(&mut self, experiences: impl IntoIterator<Item = Experience>) {
        for e in experiences {
            self.buffer.push(e);
        }
    }
}
