use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{export_metrics, training_curve, write_training_curve, Metrics};
use super::{PlanConfig, RunMode};
use crate::action::{normalize_action, norm, ActionBounds, RawAction};
use crate::classifier::classify_state;
use crate::config::LabConfig;
use crate::cycle_log::{next_state, score_cycle, CycleIndex, CycleLogWriter, CycleRecord, MonitorTrace};
use crate::ddpg::{Agent, ReplayBuffer, TrainingReport};
use crate::engine::{CombustionEnv, EngineSim};
use crate::error::{LabError, Result};
use crate::profile::random_profile;
use crate::reward::RewardParams;
use crate::safety::{filter_action, map_raw_action, LimitationMatrices};
use crate::session::{AgentSession, Phase};
use crate::state::CycleState;
use crate::udp::{EnvLink, Reply, StateKind};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where actions come from.
pub enum Policy {
    Local(Box<AgentSession>),
    Remote(EnvLink),
}

/// One finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub phase: Phase,
    pub episode: u64,
    pub records: Vec<CycleRecord>,
    pub metrics: Metrics,
    pub report: Option<TrainingReport>,
    pub sigma: f64,
}

/// Row of `episodes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub mode: String,
    pub episode: u64,
    pub validation: bool,
    pub cycles: usize,
    pub total_reward: f64,
    pub rmse_pmi: f64,
    pub stability: f64,
    pub violations: usize,
    pub mean_overshoot: f64,
    pub mean_eta: f64,
    pub ethanol_rmse: f64,
    pub mean_ethanol_share: f64,
    pub replaced: usize,
    pub fallbacks: usize,
    pub misfires: usize,
    pub sigma: f64,
    pub critic_loss: f64,
    pub actor_q: f64,
}

impl EpisodeRow {
    fn new(mode: RunMode, o: &EpisodeOutcome) -> Self {
        let m = &o.metrics;
        EpisodeRow {
            mode: mode.as_str().into(),
            episode: o.episode,
            validation: o.phase == Phase::Validation,
            cycles: m.cycles,
            total_reward: m.total_reward,
            rmse_pmi: m.rmse_pmi,
            stability: m.stability,
            violations: m.violations,
            mean_overshoot: m.mean_overshoot,
            mean_eta: m.mean_eta,
            ethanol_rmse: m.ethanol_rmse,
            mean_ethanol_share: m.mean_ethanol_share,
            replaced: m.replaced,
            fallbacks: m.fallbacks,
            misfires: m.misfires,
            sigma: o.sigma,
            critic_loss: o.report.map_or(f64::NAN, |r| r.mean_critic_loss),
            actor_q: o.report.map_or(f64::NAN, |r| r.mean_actor_q),
        }
    }
}

/// Resumable state of a run, written after every training episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub mode: RunMode,
    pub episode: u64,
    pub cycle: u64,
    pub session: AgentSession,
    pub env: EngineSim,
    pub profile_rng: ChaCha8Rng,
    pub train_rewards: Vec<f64>,
}

impl Checkpoint {
    pub const FILE: &'static str = "checkpoint.json";
    pub const BUFFER_FILE: &'static str = "buffer.bin";

    /// Writes `checkpoint.json` and the buffer snapshot into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let text = serde_json::to_string(self).map_err(|e| LabError::json(&path, e))?;
        let tmp = dir.join(format!("{}.tmp", Self::FILE));
        fs::write(&tmp, text).map_err(|e| LabError::io(&tmp, e))?;
        self.session.buffer.write_snapshot(&dir.join(Self::BUFFER_FILE))?;
        fs::rename(&tmp, &path).map_err(|e| LabError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        let mut ck: Checkpoint = serde_json::from_str(&text).map_err(|e| LabError::json(&path, e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(LabError::Checkpoint(format!("unsupported checkpoint version {}", ck.version)));
        }
        ck.session.buffer.read_snapshot(&dir.join(Self::BUFFER_FILE))?;
        Ok(ck)
    }
}

/// Output locations of a run.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn cycles(&self) -> PathBuf {
        self.root.join("cycles.csv")
    }

    pub fn episodes(&self) -> PathBuf {
        self.root.join("episodes.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn curve(&self) -> PathBuf {
        self.root.join("training_curve.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
}

/// Run summary written as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub episodes: u64,
    pub cycles: u64,
    pub training: Option<Metrics>,
    pub validations: Vec<(u64, Metrics)>,
    pub training_curve: Vec<f64>,
}

/// Episode loop over an engine surrogate.
pub struct Runner {
    cfg: LabConfig,
    bounds: ActionBounds,
    mode: RunMode,
    reward: RewardParams,
    monitor: Option<LimitationMatrices>,
    policy: Policy,
    env: EngineSim,
    validation_env: EngineSim,
    validation_profile: Vec<f64>,
    profile_rng: ChaCha8Rng,
    episode: u64,
    cycle: u64,
    wire_cycle: u32,
    train_rewards: Vec<f64>,
    output: Option<OutputDir>,
    cycle_log: Option<CycleLogWriter>,
    episode_rows: Vec<EpisodeRow>,
    validations: Vec<(u64, Metrics)>,
    train_metrics: Vec<Metrics>,
}

fn new_sim(cfg: &LabConfig, bounds: &ActionBounds, stream: &str) -> Result<EngineSim> {
    EngineSim::new(
        cfg.engine_sim.clone(),
        cfg.engine_constants.clone(),
        bounds.clone(),
        cfg.stream_seed(stream),
    )
}

/// Fresh agent session seeded from the configuration.
pub fn new_session(cfg: &LabConfig) -> Result<AgentSession> {
    let agent = Agent::new(
        cfg.agent.clone(),
        cfg.state_ranges.clone(),
        cfg.stream_seed("init"),
        cfg.stream_seed("noise"),
    )?;
    let buffer = ReplayBuffer::new(cfg.agent.buffer_capacity, cfg.stream_seed("sampling"))?;
    Ok(AgentSession::new(agent, buffer, cfg.agent.replay_batches, cfg.plan.quantize))
}

/// Reward parameters in effect for a mode.
pub fn mode_reward(cfg: &LabConfig, mode: RunMode) -> RewardParams {
    let mut r = cfg.reward.clone();
    if mode == RunMode::Adapt {
        r.safety.enabled = false;
        r.ethanol.enabled = true;
        r.ethanol_target = cfg.plan.adapt_ethanol_target;
    }
    r
}

impl Runner {
    /// Fresh run. Training needs limitation matrices; adaptation needs a
    /// pre-trained policy and is started with [`Runner::adapt`].
    pub fn new(cfg: LabConfig, mode: RunMode, monitor: Option<LimitationMatrices>, policy: Policy) -> Result<Self> {
        cfg.validate()?;
        let bounds = cfg.action_bounds()?;
        match mode {
            RunMode::Train if monitor.is_none() => {
                return Err(LabError::SafetyPrecondition(
                    "training requires measured limitation matrices".into(),
                ))
            }
            RunMode::Measure => {
                return Err(LabError::Config("measurement runs use run_measurement".into()))
            }
            _ => {}
        }
        if let Some(m) = &monitor {
            if m.classifier() != &cfg.classifier || m.directions() != &cfg.directions {
                return Err(LabError::SafetyPrecondition(
                    "limitation matrices do not match the configured classifier and directions".into(),
                ));
            }
        }
        let env = new_sim(&cfg, &bounds, "environment")?;
        let validation_env = new_sim(&cfg, &bounds, "validation-environment")?;
        let validation_profile = random_profile(
            &cfg.plan.profile,
            cfg.plan.validation_cycles + 1,
            &mut ChaCha8Rng::seed_from_u64(cfg.stream_seed("validation-profile")),
        );
        let profile_rng = ChaCha8Rng::seed_from_u64(cfg.stream_seed("profiles"));
        let reward = mode_reward(&cfg, mode);
        Ok(Runner {
            bounds,
            mode,
            reward,
            monitor: if mode == RunMode::Adapt { None } else { monitor },
            policy,
            env,
            validation_env,
            validation_profile,
            profile_rng,
            episode: 0,
            cycle: 0,
            wire_cycle: 0,
            train_rewards: Vec::new(),
            output: None,
            cycle_log: None,
            episode_rows: Vec::new(),
            validations: Vec::new(),
            train_metrics: Vec::new(),
            cfg,
        })
    }

    /// Adaptation run continuing a trained checkpoint: σ is reset to the
    /// adaptation value, the monitor is off, ethanol tracking is rewarded and
    /// the safety component is zeroed.
    pub fn adapt(cfg: LabConfig, checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.config_hash != cfg.hash() {
            return Err(LabError::Checkpoint("checkpoint was written under a different configuration".into()));
        }
        let mut session = checkpoint.session;
        session.agent.sigma = cfg.plan.adapt_sigma;
        session.quantize = cfg.plan.quantize;
        let mut r = Runner::new(cfg, RunMode::Adapt, None, Policy::Local(Box::new(session)))?;
        r.env = checkpoint.env;
        r.profile_rng = checkpoint.profile_rng;
        r.cycle = checkpoint.cycle;
        Ok(r)
    }

    /// Continues a run from its checkpoint.
    pub fn resume(cfg: LabConfig, monitor: Option<LimitationMatrices>, checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.config_hash != cfg.hash() {
            return Err(LabError::Checkpoint("checkpoint was written under a different configuration".into()));
        }
        let mut r = Runner::new(cfg, checkpoint.mode, monitor, Policy::Local(Box::new(checkpoint.session)))?;
        r.env = checkpoint.env;
        r.profile_rng = checkpoint.profile_rng;
        r.episode = checkpoint.episode;
        r.cycle = checkpoint.cycle;
        r.train_rewards = checkpoint.train_rewards;
        Ok(r)
    }

    /// Streams logs into `dir`, appending when the files exist.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        let out = OutputDir::create(dir)?;
        self.cycle_log = Some(CycleLogWriter::append(&out.cycles())?);
        self.output = Some(out);
        Ok(self)
    }

    pub fn config(&self) -> &LabConfig {
        &self.cfg
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn session(&self) -> Option<&AgentSession> {
        match &self.policy {
            Policy::Local(s) => Some(s),
            Policy::Remote(_) => None,
        }
    }

    pub fn session_mut(&mut self) -> Option<&mut AgentSession> {
        match &mut self.policy {
            Policy::Local(s) => Some(s),
            Policy::Remote(_) => None,
        }
    }

    pub fn env(&self) -> &EngineSim {
        &self.env
    }

    pub fn train_rewards(&self) -> &[f64] {
        &self.train_rewards
    }

    pub fn validations(&self) -> &[(u64, Metrics)] {
        &self.validations
    }

    pub fn episode_rows(&self) -> &[EpisodeRow] {
        &self.episode_rows
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.reward
    }

    fn plan(&self) -> &PlanConfig {
        &self.cfg.plan
    }

    fn request(&mut self, phase: Phase, state: &CycleState, reward: f64, done: bool) -> Result<Option<RawAction>> {
        let idx = self.wire_cycle;
        self.wire_cycle = self.wire_cycle.wrapping_add(1);
        match &mut self.policy {
            Policy::Local(session) => {
                let (s, r) = if session.quantize {
                    (state.quantized(), reward as f32 as f64)
                } else {
                    (*state, reward)
                };
                Ok(Some(session.step(phase, &s, r, done)?))
            }
            Policy::Remote(link) => {
                let kind = match phase {
                    Phase::Train => StateKind::Train,
                    Phase::Validation => StateKind::Validation,
                };
                let deadline = if done {
                    Duration::from_millis(self.cfg.udp.episode_end_deadline_ms)
                } else {
                    link.deadline
                };
                match link.exchange_within(kind, idx, state, reward, done, deadline)? {
                    Reply::Action(u) if u.0.iter().all(|v| v.is_finite()) => Ok(Some(u)),
                    _ => Ok(None),
                }
            }
        }
    }

    fn episode_loop(&mut self, env: &mut EngineSim, phase: Phase, profile: &[f64]) -> Result<Vec<CycleRecord>> {
        let n = profile.len() - 1;
        let sp0 = profile[0];
        let warm = env.step(&self.bounds.start_point(sp0), sp0)?;
        let mut state = next_state(&warm, sp0, sp0);
        let mut prev_reward = 0.0;
        let mut records = Vec::with_capacity(n);
        let mode = match phase {
            Phase::Train => self.mode.as_str().to_string(),
            Phase::Validation => "validate".to_string(),
        };
        for t in 0..n {
            let sp = profile[t];
            let start = self.bounds.start_point(sp);
            let reply = self.request(phase, &state, prev_reward, false)?;
            let (raw, action, trace) = match reply {
                None => {
                    let trace = MonitorTrace {
                        class: classify_state(&state, &self.cfg.classifier),
                        mapped: start,
                        norm: 0.0,
                        r_safe: f64::INFINITY,
                        dr_sf: 0.0,
                        replaced: false,
                        fallback: true,
                    };
                    (self.bounds.raw_from_action(&start), start, trace)
                }
                Some(raw) => match &self.monitor {
                    Some(mats) => {
                        let f = filter_action(&raw, &state, mats, &self.cfg.safety, &self.bounds)?;
                        let trace = MonitorTrace {
                            class: f.class,
                            mapped: f.mapped,
                            norm: f.norm,
                            r_safe: f.r_safe,
                            dr_sf: f.dr_sf,
                            replaced: f.replaced,
                            fallback: false,
                        };
                        (raw, f.action, trace)
                    }
                    None => {
                        let mapped = map_raw_action(&raw, &self.bounds);
                        let u_norm = normalize_action(&mapped, &start, &self.bounds)?;
                        let trace = MonitorTrace {
                            class: classify_state(&state, &self.cfg.classifier),
                            mapped,
                            norm: norm(&u_norm),
                            r_safe: f64::INFINITY,
                            dr_sf: 0.0,
                            replaced: false,
                            fallback: false,
                        };
                        (raw, mapped, trace)
                    }
                },
            };
            let out = env.step(&action, sp)?;
            let score = score_cycle(
                &state,
                &out,
                trace.dr_sf,
                self.cfg.engine_constants.dpmax_limit,
                &self.reward,
                &self.cfg.engine_constants,
            );
            let next = next_state(&out, sp, profile[t + 1]);
            let index = CycleIndex {
                mode: mode.clone(),
                episode: self.episode,
                step: t as u64,
                cycle: self.cycle,
                validation: phase == Phase::Validation,
            };
            self.cycle += 1;
            let rec = CycleRecord::new(index, &state, &raw, &action, &trace, &out, &score, &next, t + 1 == n);
            if let Some(w) = &mut self.cycle_log {
                w.write(&rec)?;
            }
            records.push(rec);
            prev_reward = score.breakdown.total;
            state = next;
        }
        self.request(phase, &state, prev_reward, true)?;
        if let Some(w) = &mut self.cycle_log {
            w.flush()?;
        }
        Ok(records)
    }

    fn ethanol_target(&self) -> f64 {
        self.reward.ethanol_target
    }

    fn outcome(&self, phase: Phase, records: Vec<CycleRecord>) -> Result<EpisodeOutcome> {
        let metrics = export_metrics(&records, self.cfg.engine_constants.dpmax_limit, self.ethanol_target())?;
        let (report, sigma) = match (&self.policy, phase) {
            (Policy::Local(s), Phase::Train) => (s.reports.last().copied(), s.agent.sigma),
            (Policy::Local(s), Phase::Validation) => (None, s.agent.sigma),
            _ => (None, f64::NAN),
        };
        Ok(EpisodeOutcome {
            phase,
            episode: self.episode,
            records,
            metrics,
            report,
            sigma,
        })
    }

    /// One exploring episode on a fresh random profile, followed by
    /// end-of-episode training.
    pub fn train_episode(&mut self) -> Result<EpisodeOutcome> {
        let profile = random_profile(
            &self.cfg.plan.profile,
            self.cfg.plan.cycles_per_episode + 1,
            &mut self.profile_rng,
        );
        let mut env = self.env.clone();
        let records = self.episode_loop(&mut env, Phase::Train, &profile);
        self.env = env;
        let records = records?;
        self.episode += 1;
        self.train_rewards.extend(records.iter().map(|r| r.reward));
        let outcome = self.outcome(Phase::Train, records)?;
        self.train_metrics.push(outcome.metrics);
        self.episode_rows.push(EpisodeRow::new(self.mode, &outcome));
        info!(
            "{} episode {}: reward {:.1}, rmse {:.3}, violations {}, sigma {:.3}",
            self.mode.as_str(),
            self.episode,
            outcome.metrics.total_reward,
            outcome.metrics.rmse_pmi,
            outcome.metrics.violations,
            outcome.sigma
        );
        Ok(outcome)
    }

    /// Noise-free episode on the fixed validation profile, run against a
    /// fresh copy of the validation environment. Leaves the agent and the
    /// buffer untouched.
    pub fn validate(&mut self) -> Result<EpisodeOutcome> {
        let profile = self.validation_profile.clone();
        let mut env = self.validation_env.clone();
        let records = self.episode_loop(&mut env, Phase::Validation, &profile)?;
        let outcome = self.outcome(Phase::Validation, records)?;
        self.validations.push((self.episode, outcome.metrics));
        self.episode_rows.push(EpisodeRow::new(self.mode, &outcome));
        info!(
            "validation after episode {}: rmse {:.3}, violations {}, ethanol rmse {:.3}",
            self.episode, outcome.metrics.rmse_pmi, outcome.metrics.violations, outcome.metrics.ethanol_rmse
        );
        Ok(outcome)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let Policy::Local(session) = &self.policy else {
            return Err(LabError::Checkpoint("agent runs remotely; it checkpoints itself".into()));
        };
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: self.cfg.hash(),
            mode: self.mode,
            episode: self.episode,
            cycle: self.cycle,
            session: (**session).clone(),
            env: self.env.clone(),
            profile_rng: self.profile_rng.clone(),
            train_rewards: self.train_rewards.clone(),
        })
    }

    /// Runs `episodes` exploring episodes with periodic validation,
    /// checkpointing after each one when an output directory is set.
    pub fn run(&mut self, episodes: u64) -> Result<RunSummary> {
        let every = self.plan().validation_every;
        for _ in 0..episodes {
            self.train_episode()?;
            if every > 0 && self.episode % every == 0 {
                self.validate()?;
            }
            if let (Some(out), Policy::Local(_)) = (&self.output, &self.policy) {
                self.checkpoint()?.write(&out.checkpoints())?;
            }
        }
        self.finish()
    }

    /// Writes episodes, curve and summary files and returns the summary.
    pub fn finish(&mut self) -> Result<RunSummary> {
        let group = self.plan().curve_group;
        let summary = RunSummary {
            mode: self.mode,
            episodes: self.episode,
            cycles: self.cycle,
            training: aggregate(&self.train_metrics),
            validations: self.validations.clone(),
            training_curve: training_curve(&self.train_rewards, group),
        };
        if let Some(out) = &self.output {
            let path = out.episodes();
            let exists = path.exists();
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| LabError::io(&path, e))?;
            let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
            for row in &self.episode_rows {
                w.serialize(row).map_err(|e| LabError::csv(&path, e))?;
            }
            w.flush().map_err(|e| LabError::io(&path, e))?;
            self.episode_rows.clear();
            write_training_curve(&out.curve(), &summary.training_curve, group)?;
            let sp = out.summary();
            let text = serde_json::to_string_pretty(&summary).map_err(|e| LabError::json(&sp, e))?;
            fs::write(&sp, text).map_err(|e| LabError::io(&sp, e))?;
        }
        if let Policy::Remote(link) = &mut self.policy {
            let state = CycleState::from_array([0.0; 8]);
            link.exchange_within(StateKind::Shutdown, self.wire_cycle, &state, 0.0, false, Duration::from_millis(500))?;
        }
        self.train_metrics.clear();
        Ok(summary)
    }
}

fn aggregate(ms: &[Metrics]) -> Option<Metrics> {
    if ms.is_empty() {
        return None;
    }
    let n: usize = ms.iter().map(|m| m.cycles).sum();
    let w = |f: fn(&Metrics) -> f64| ms.iter().map(|m| f(m) * m.cycles as f64).sum::<f64>() / n as f64;
    let violations: usize = ms.iter().map(|m| m.violations).sum();
    Some(Metrics {
        cycles: n,
        rmse_pmi: w(|m| m.rmse_pmi * m.rmse_pmi).sqrt(),
        stability: ms.iter().map(|m| m.stability * m.stability).sum::<f64>().sqrt(),
        violations,
        mean_overshoot: if violations == 0 {
            0.0
        } else {
            ms.iter().map(|m| m.mean_overshoot * m.violations as f64).sum::<f64>() / violations as f64
        },
        mean_eta: w(|m| m.mean_eta),
        ethanol_rmse: w(|m| m.ethanol_rmse * m.ethanol_rmse).sqrt(),
        mean_ethanol_share: w(|m| m.mean_ethanol_share),
        total_reward: ms.iter().map(|m| m.total_reward).sum(),
        replaced: ms.iter().map(|m| m.replaced).sum(),
        fallbacks: ms.iter().map(|m| m.fallbacks).sum(),
        misfires: ms.iter().map(|m| m.misfires).sum(),
    })
}
