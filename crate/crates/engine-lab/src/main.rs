use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use engine_lab_core::cycle_log::{read_cycle_log, write_cycle_log};
use engine_lab_core::engine::EngineSim;
use engine_lab_core::error::{LabError, Result};
use engine_lab_core::measurement::{run_measurement, MeasurementSetup};
use engine_lab_core::orchestrator::{export_metrics, new_session, Checkpoint, Policy, RunMode, Runner};
use engine_lab_core::safety::LimitationMatrices;
use engine_lab_core::udp::{AgentServer, EnvLink};
use engine_lab_core::LabConfig;

#[derive(Parser)]
#[command(name = "engine-lab", version, about = "Safe reinforcement learning on an HCCI engine surrogate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct UdpArgs {
    /// Local address of this endpoint.
    #[arg(long)]
    udp_listen: Option<SocketAddr>,
    /// Address of the agent endpoint.
    #[arg(long)]
    udp_peer: Option<SocketAddr>,
    /// Reply deadline in milliseconds.
    #[arg(long)]
    deadline_ms: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the limitation matrices by boundary exploration.
    Measure {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cycles: Option<u64>,
        /// Limitation matrices file; a JSON sidecar is written next to it.
        #[arg(long, default_value = "mats.csv")]
        out: PathBuf,
        /// Cycle log in the training log format.
        #[arg(long, default_value = "cycles.csv")]
        log: PathBuf,
    },
    /// Train the agent behind the safety monitor.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        udp: UdpArgs,
        #[arg(long)]
        mats: PathBuf,
        #[arg(long)]
        episodes: Option<u64>,
        /// Continue from <out>/checkpoints.
        #[arg(long)]
        resume: bool,
        /// Pre-fill the replay buffer from a measurement log.
        #[arg(long)]
        prefill: Option<PathBuf>,
    },
    /// Adapt a trained policy to ethanol tracking with the monitor off.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory of a training run.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Run noise-free validation episodes.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Apply the safety monitor with these matrices.
        #[arg(long)]
        mats: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
    },
    /// Aggregate a cycle log into summary metrics.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
    },
    /// Serve the agent over UDP for a remote environment.
    Agent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        udp_listen: SocketAddr,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after this many seconds without traffic.
        #[arg(long)]
        idle_secs: Option<u64>,
    },
}

fn load_config(common: &Common) -> Result<LabConfig> {
    let mut cfg = match &common.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_mats(path: &Path, cfg: &LabConfig) -> Result<LimitationMatrices> {
    if !path.exists() {
        return Err(LabError::SafetyPrecondition(format!(
            "limitation matrices {} not found; run `engine-lab measure` first",
            path.display()
        )));
    }
    let (mats, partial) = LimitationMatrices::read(path, &cfg.classifier, &cfg.directions, &cfg.action_bounds()?)?;
    if partial {
        log::warn!("{} holds a partial measurement", path.display());
    }
    Ok(mats)
}

fn udp_policy(cfg: &mut LabConfig, udp: &UdpArgs) -> Result<Option<Policy>> {
    if let Some(d) = udp.deadline_ms {
        cfg.udp.deadline_ms = d;
    }
    match (udp.udp_listen, udp.udp_peer) {
        (Some(listen), Some(peer)) => {
            let link = EnvLink::bind(listen, peer, Duration::from_millis(cfg.udp.deadline_ms))?;
            Ok(Some(Policy::Remote(link)))
        }
        (None, None) => Ok(None),
        _ => Err(LabError::Config("--udp-listen and --udp-peer go together".into())),
    }
}

fn measure(common: &Common, cycles: Option<u64>, mats_path: &Path, log_path: &Path) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(c) = cycles {
        cfg.measurement.cycles = c;
    }
    for p in [mats_path, log_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LabError::Io { path: dir.to_path_buf(), source: e })?;
        }
    }
    let bounds = cfg.action_bounds()?;
    let mut env = EngineSim::new(
        cfg.engine_sim.clone(),
        cfg.engine_constants.clone(),
        bounds.clone(),
        cfg.stream_seed("measurement-environment"),
    )?;
    env.check_unsafe_region_reachable(cfg.engine_constants.dpmax_limit)?;
    let setup = MeasurementSetup {
        bounds: &bounds,
        safety: &cfg.safety,
        measurement: &cfg.measurement,
        profile: &cfg.plan.profile,
        reward: &cfg.reward,
        constants: &cfg.engine_constants,
    };
    let mats = LimitationMatrices::new(cfg.classifier.clone(), cfg.directions.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream_seed("measurement"));
    let outcome = run_measurement(&mut env, mats, &setup, &mut rng);
    outcome.mats.write(mats_path, &bounds, outcome.partial)?;
    write_cycle_log(log_path, &outcome.log)?;
    info!(
        "measured {} cycles ({} clipped probes) into {}",
        outcome.cycles_run,
        outcome.clipped_probes,
        mats_path.display()
    );
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn train(
    common: &Common,
    udp: &UdpArgs,
    mats_path: &Path,
    episodes: Option<u64>,
    resume: bool,
    prefill: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    let mats = read_mats(mats_path, &cfg)?;
    let episodes = episodes.unwrap_or(cfg.plan.train_episodes);
    let remote = udp_policy(&mut cfg, udp)?;
    let ckdir = common.out.join("checkpoints");
    let mut runner = if resume {
        if remote.is_some() {
            return Err(LabError::Config("resume is only available in-process".into()));
        }
        Runner::resume(cfg, Some(mats), Checkpoint::read(&ckdir)?)?
    } else {
        let policy = match remote {
            Some(p) => p,
            None => {
                let mut session = new_session(&cfg)?;
                if let Some(p) = prefill {
                    let log = read_cycle_log(&p)?;
                    info!("pre-filling the buffer with {} logged cycles", log.len());
                    session.prefill(log.iter().map(|r| r.experience()));
                }
                Policy::Local(Box::new(session))
            }
        };
        Runner::new(cfg, RunMode::Train, Some(mats), policy)?
    };
    runner = runner.with_output(&common.out)?;
    let summary = runner.run(episodes)?;
    info!("trained {} episodes, {} cycles", summary.episodes, summary.cycles);
    Ok(())
}

fn adapt(common: &Common, checkpoint: &Path, episodes: Option<u64>) -> Result<()> {
    let cfg = load_config(common)?;
    let episodes = episodes.unwrap_or(cfg.plan.adapt_episodes);
    let ck = Checkpoint::read(checkpoint)?;
    let mut runner = Runner::adapt(cfg, ck)?.with_output(&common.out)?;
    runner.validate()?;
    runner.run(episodes)?;
    Ok(())
}

fn validate(common: &Common, checkpoint: Option<PathBuf>, mats: Option<PathBuf>, episodes: u64) -> Result<()> {
    let cfg = load_config(common)?;
    let monitor = mats.map(|p| read_mats(&p, &cfg)).transpose()?;
    let session = match checkpoint {
        Some(dir) => Checkpoint::read(&dir)?.session,
        None => new_session(&cfg)?,
    };
    let mut runner = Runner::new(cfg, RunMode::Validate, monitor, Policy::Local(Box::new(session)))?
        .with_output(&common.out)?;
    for _ in 0..episodes {
        runner.validate()?;
    }
    runner.finish()?;
    Ok(())
}

fn export(common: &Common, log_path: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let records = read_cycle_log(log_path)?;
    let target = if records.iter().any(|r| r.mode == "adapt") {
        cfg.plan.adapt_ethanol_target
    } else {
        cfg.reward.ethanol_target
    };
    let metrics = export_metrics(&records, cfg.engine_constants.dpmax_limit, target)?;
    std::fs::create_dir_all(&common.out).map_err(|e| LabError::Io { path: common.out.clone(), source: e })?;
    let path = common.out.join("summary.json");
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| LabError::Config(e.to_string()))?;
    std::fs::write(&path, &text).map_err(|e| LabError::Io { path: path.clone(), source: e })?;
    println!("{text}");
    Ok(())
}

fn agent(common: &Common, listen: SocketAddr, checkpoint: Option<PathBuf>, idle: Option<u64>) -> Result<()> {
    let cfg = load_config(common)?;
    let mut session = match &checkpoint {
        Some(dir) => Checkpoint::read(dir)?.session,
        None => new_session(&cfg)?,
    };
    session.quantize = true;
    let mut server = AgentServer::bind(listen, session)?;
    info!("agent listening on {}", server.local_addr()?);
    server.serve(idle.map(Duration::from_secs))?;
    let dir = common.out.join("agent");
    std::fs::create_dir_all(&dir).map_err(|e| LabError::Io { path: dir.clone(), source: e })?;
    server.session.buffer.write_snapshot(&dir.join("buffer.bin"))?;
    let path = dir.join("session.json");
    let text = serde_json::to_string(&server.session).map_err(|e| LabError::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| LabError::Io { path, source: e })?;
    info!("agent counters: {:?}", server.counters);
    Ok(())
}

fn exit_code(e: &LabError) -> u8 {
    match e {
        LabError::Config(_) | LabError::Json { .. } => 2,
        LabError::SafetyPrecondition(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Measure {
            config,
            seed,
            cycles,
            out,
            log,
        } => {
            let common = Common {
                config: config.clone(),
                seed: *seed,
                out: out.clone(),
            };
            measure(&common, *cycles, out, log)
        }
        Command::Train {
            common,
            udp,
            mats,
            episodes,
            resume,
            prefill,
        } => train(common, udp, mats, *episodes, *resume, prefill.clone()),
        Command::Adapt {
            common,
            checkpoint,
            episodes,
        } => adapt(common, checkpoint, *episodes),
        Command::Validate {
            common,
            checkpoint,
            mats,
            episodes,
        } => validate(common, checkpoint.clone(), mats.clone(), *episodes),
        Command::Export { common, log } => export(common, log),
        Command::Agent {
            common,
            udp_listen,
            checkpoint,
            idle_secs,
        } => agent(common, *udp_listen, checkpoint.clone(), *idle_secs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
