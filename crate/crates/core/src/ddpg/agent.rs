use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{Experience, ReplayBuffer};
use crate::action::{RawAction, ACTION_DIM};
use crate::error::{LabError, Result};
use crate::nn::{Gradients, Mlp, OptimizerKind, OptimizerState};
use crate::state::{CycleState, StateRanges, STATE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Polyak factor ρ.
    pub polyak: f64,
    pub buffer_capacity: usize,
    /// Whole-buffer batches trained after the most-recent-episode batch.
    pub replay_batches: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Scale applied to the initial weights of the last actor layer.
    pub actor_output_scale: f64,
    pub optimizer: OptimizerKind,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            sigma0: 0.5,
            sigma_decay: 0.95,
            batch_size: 64,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            polyak: 1e-3,
            buffer_capacity: 50_000,
            replay_batches: 4,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            actor_output_scale: 1e-3,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(LabError::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(LabError::Config("polyak factor must lie in (0, 1]".into()));
        }
        if !(self.sigma0 >= 0.0 && self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(LabError::Config("need sigma0 >= 0 and 0 < sigma_decay <= 1".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(LabError::Config("batch size and buffer capacity must be positive".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(LabError::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn actor_topology(&self) -> Vec<usize> {
        let mut t = vec![STATE_DIM];
        t.extend(&self.actor_hidden);
        t.push(ACTION_DIM);
        t
    }

    pub fn critic_topology(&self) -> Vec<usize> {
        let mut t = vec![STATE_DIM + ACTION_DIM];
        t.extend(&self.critic_hidden);
        t.push(1);
        t
    }
}

/// A state-action value function the actor can climb.
pub trait Critic {
    fn value(&self, x: &[f64], u: &[f64]) -> Result<f64>;
    /// Value and its gradient with respect to `u`.
    fn action_gradient(&self, x: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Critic for Mlp {
    fn value(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let input: Vec<f64> = x.iter().chain(u).copied().collect();
        Ok(self.forward(&input)?[0])
    }

    fn action_gradient(&self, x: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let input: Vec<f64> = x.iter().chain(u).copied().collect();
        let cache = self.forward_cached(&input)?;
        let q = cache.output()[0];
        let mut scratch = Gradients::zeros_like(self);
        let g = self.backward_into(&cache, &[1.0], &mut scratch)?;
        Ok((q, g[x.len()..].to_vec()))
    }
}

/// Summary of one end-of-episode training pass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub batches: usize,
    pub mean_critic_loss: f64,
    pub mean_actor_q: f64,
}

/// Actor, critic, their targets and optimizers, exploration σ and the
/// noise stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub ranges: StateRanges,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub sigma: f64,
    noise_rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(cfg: AgentConfig, ranges: StateRanges, init_seed: u64, noise_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(init_seed);
        let mut actor = Mlp::new(&cfg.actor_topology(), &mut init)?;
        let critic = Mlp::new(&cfg.critic_topology(), &mut init)?;
        if let Some(last) = actor.layers_mut().last_mut() {
            last.weights.iter_mut().for_each(|w| *w *= cfg.actor_output_scale);
            last.bias.iter_mut().for_each(|b| *b *= cfg.actor_output_scale);
        }
        Ok(Self::from_parts(cfg, ranges, actor, critic, noise_seed))
    }

    /// Agent around given networks; targets start as exact copies.
    pub fn from_parts(cfg: AgentConfig, ranges: StateRanges, actor: Mlp, critic: Mlp, noise_seed: u64) -> Self {
        let actor_opt = OptimizerState::new(&actor, cfg.optimizer, cfg.actor_lr);
        let critic_opt = OptimizerState::new(&critic, cfg.optimizer, cfg.critic_lr);
        Agent {
            sigma: cfg.sigma0,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            cfg,
            ranges,
            noise_rng: ChaCha8Rng::seed_from_u64(noise_seed),
        }
    }

    pub fn input(&self, s: &CycleState) -> [f64; STATE_DIM] {
        self.ranges.normalize(s)
    }

    /// Deterministic policy μ(s) in raw action space.
    pub fn policy(&self, s: &CycleState) -> Result<RawAction> {
        let out = self.actor.forward(&self.input(s))?;
        RawAction::new([out[0], out[1], out[2]])
    }

    /// μ(s) plus Gaussian noise of standard deviation `sigma` per component.
    /// With `sigma = 0` no noise is drawn.
    pub fn act_with_sigma(&mut self, s: &CycleState, sigma: f64) -> Result<RawAction> {
        let mut u = self.policy(s)?;
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).map_err(|e| LabError::Config(e.to_string()))?;
            for v in &mut u.0 {
                *v += n.sample(&mut self.noise_rng);
            }
        }
        Ok(u)
    }

    pub fn act(&mut self, s: &CycleState) -> Result<RawAction> {
        let sigma = self.sigma;
        self.act_with_sigma(s, sigma)
    }

    pub fn decay_sigma(&mut self) {
        self.sigma = decay_sigma(self.sigma, self.cfg.sigma_decay);
    }

    /// `y = R + γ·(1 − d)·Q'(s', μ'(s'))`
    pub fn critic_target(&self, e: &Experience) -> Result<f64> {
        if e.done {
            return Ok(e.reward);
        }
        let x = self.input(&e.s_next);
        let u = self.actor_target.forward(&x)?;
        let q = self.critic_target.value(&x, &u)?;
        Ok(e.reward + self.cfg.gamma * q)
    }

    /// One optimizer step on the critic's mean squared Bellman residual.
    /// Returns the loss before the step.
    pub fn train_critic(&mut self, batch: &[Experience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(LabError::Contract("empty training batch".into()));
        }
        let targets = batch
            .iter()
            .map(|e| self.critic_target(e))
            .collect::<Result<Vec<_>>>()?;
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = 0.0;
        for (e, y) in batch.iter().zip(&targets) {
            let input: Vec<f64> = self.input(&e.s_prev).iter().chain(&e.u.0).copied().collect();
            let cache = self.critic.forward_cached(&input)?;
            let resid = cache.output()[0] - y;
            loss += resid * resid;
            self.critic.backward_into(&cache, &[2.0 * resid / n], &mut grads)?;
        }
        self.critic_opt.apply(&mut self.critic, &grads)?;
        Ok(loss / n)
    }

    /// One ascent step on the actor along the gradient of the agent's own
    /// critic. Returns the mean critic value before the step.
    pub fn train_actor(&mut self, batch: &[Experience]) -> Result<f64> {
        let critic = self.critic.clone();
        self.train_actor_with(&critic, batch)
    }

    /// Ascent step on the actor against an arbitrary critic.
    pub fn train_actor_with<C: Critic + ?Sized>(&mut self, critic: &C, batch: &[Experience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(LabError::Contract("empty training batch".into()));
        }
        let (grads, mean_q) = self.actor_gradient(critic, batch)?;
        self.actor_opt.apply(&mut self.actor, &grads)?;
        Ok(mean_q)
    }

    /// Gradient of `−mean Q(s, μ(s))` with respect to the actor parameters,
    /// and the mean value.
    pub fn actor_gradient<C: Critic + ?Sized>(&self, critic: &C, batch: &[Experience]) -> Result<(Gradients, f64)> {
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut total_q = 0.0;
        for e in batch {
            let x = self.input(&e.s_prev);
            let cache = self.actor.forward_cached(&x)?;
            let (q, dq_du) = critic.action_gradient(&x, cache.output())?;
            total_q += q;
            let upstream: Vec<f64> = dq_du.iter().map(|g| -g / n).collect();
            self.actor.backward_into(&cache, &upstream, &mut grads)?;
        }
        Ok((grads, total_q / n))
    }

    /// `θ' ← ρθ + (1 − ρ)θ'` for both target networks.
    pub fn polyak_update(&mut self) {
        let rho = self.cfg.polyak;
        polyak(&mut self.actor_target, &self.actor, rho);
        polyak(&mut self.critic_target, &self.critic, rho);
    }

    /// One batch from the most recent episode, then `replay_batches` from
    /// the whole buffer; each batch runs critic, actor and Polyak updates.
    /// Finishes by decaying σ.
    pub fn end_of_episode_training(
        &mut self,
        buffer: &mut ReplayBuffer,
        last_episode: &[Experience],
        replay_batches: usize,
    ) -> Result<TrainingReport> {
        let mut report = TrainingReport::default();
        if !last_episode.is_empty() {
            let batch = buffer.sample_from(last_episode, self.cfg.batch_size);
            self.train_triple(&batch, &mut report)?;
        }
        if !buffer.is_empty() {
            for _ in 0..replay_batches {
                let batch = buffer.sample(self.cfg.batch_size);
                self.train_triple(&batch, &mut report)?;
            }
        }
        if report.batches > 0 {
            report.mean_critic_loss /= report.batches as f64;
            report.mean_actor_q /= report.batches as f64;
        }
        self.decay_sigma();
        Ok(report)
    }

    fn train_triple(&mut self, batch: &[Experience], report: &mut TrainingReport) -> Result<()> {
        report.mean_critic_loss += self.train_critic(batch)?;
        report.mean_actor_q += self.train_actor(batch)?;
        self.polyak_update();
        report.batches += 1;
        Ok(())
    }
}

pub fn polyak(target: &mut Mlp, source: &Mlp, rho: f64) {
    for (t, s) in target.flat_mut().zip(source.flat()) {
        *t = rho * s + (1.0 - rho) * *t;
    }
}

pub fn decay_sigma(sigma: f64, lambda: f64) -> f64 {
    sigma * lambda
}

/// `Σ γ^k R_k`
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
