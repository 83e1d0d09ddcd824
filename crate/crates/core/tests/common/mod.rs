#![allow(dead_code)]

use engine_lab_core::ddpg::{Agent, Critic, Experience};
use engine_lab_core::nn::{Gradients, Mlp};
use engine_lab_core::{CycleState, RawAction};
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;

/// Norm-wise relative error `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub fn flat_grads(g: &Gradients) -> Vec<f64> {
    g.flat().copied().collect()
}

fn set_param(net: &mut Mlp, i: usize, v: f64) {
    *net.flat_mut().nth(i).unwrap() = v;
}

/// Central differences of `f(net)` with respect to every parameter.
pub fn fd_params(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base: Vec<f64> = net.flat().copied().collect();
    let mut probe = net.clone();
    base.iter()
        .enumerate()
        .map(|(i, &p)| {
            set_param(&mut probe, i, p + FD_STEP);
            let up = f(&probe);
            set_param(&mut probe, i, p - FD_STEP);
            let down = f(&probe);
            set_param(&mut probe, i, p);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central differences of `f(x)` with respect to every input.
pub fn fd_input(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn weighted_output(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(w).map(|(o, w)| o * w).sum()
}

pub fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> CycleState {
    CycleState::from_array([
        rng.random_range(0.0..16.0),
        rng.random_range(200.0..700.0),
        rng.random_range(1.0..5.0),
        rng.random_range(0.0..8.0),
        rng.random_range(0.0..15.0),
        rng.random_range(0.0..100.0),
        rng.random_range(2.0..4.0),
        rng.random_range(2.0..4.0),
    ])
}

pub fn random_experience<R: Rng + ?Sized>(rng: &mut R, done: bool) -> Experience {
    Experience {
        s_prev: random_state(rng),
        u: RawAction([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
        s_next: random_state(rng),
        reward: rng.random_range(-6.0..0.0),
        done,
    }
}

/// Mean critic value of the actor's actions over a batch, the quantity the
/// actor update climbs.
pub fn mean_q<C: Critic + ?Sized>(agent: &Agent, actor: &Mlp, critic: &C, batch: &[Experience]) -> f64 {
    batch
        .iter()
        .map(|e| {
            let x = agent.input(&e.s_prev);
            let u = actor.forward(&x).unwrap();
            critic.value(&x, &u).unwrap()
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Environment whose only unsafe region lies beyond a normalized radius
/// `rho` around the start point. With a positive `band`, the violation
/// probability rises linearly from 0 to 1 across `[rho − band/2, rho + band/2]`.
pub struct BoundaryEnv {
    pub bounds: engine_lab_core::ActionBounds,
    pub rho: f64,
    pub band: f64,
    pub rng: rand_chacha::ChaCha8Rng,
    pub probes: Vec<f64>,
}

impl BoundaryEnv {
    pub fn new(rho: f64, band: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        BoundaryEnv {
            bounds: engine_lab_core::ActionBounds::default(),
            rho,
            band,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
            probes: Vec::new(),
        }
    }
}

impl engine_lab_core::engine::CombustionEnv for BoundaryEnv {
    fn step(
        &mut self,
        u: &engine_lab_core::ActionVector,
        pmi_sp: f64,
    ) -> engine_lab_core::Result<engine_lab_core::engine::CycleOutputs> {
        let start = self.bounds.start_point(pmi_sp);
        let r = engine_lab_core::action::norm(&engine_lab_core::action::normalize_action(u, &start, &self.bounds)?);
        self.probes.push(r);
        let unsafe_cycle = if self.band > 0.0 {
            let p = ((r - (self.rho - self.band / 2.0)) / self.band).clamp(0.0, 1.0);
            self.rng.random_bool(p)
        } else {
            r > self.rho + 1e-9
        };
        Ok(engine_lab_core::engine::CycleOutputs {
            alpha50: 8.0,
            q: 450.0,
            pmi: pmi_sp,
            dpmax: if unsafe_cycle { 7.0 } else { 3.0 },
            ion_max: 9.0,
            ion_int: 60.0,
            misfire: false,
            m_g: 10.0,
            m_e: 0.0,
        })
    }
}

pub fn measure_boundary(
    env: &mut BoundaryEnv,
    directions: engine_lab_core::DirectionSet,
    cycles: u64,
    keep_log: bool,
    seed: u64,
) -> engine_lab_core::measurement::MeasurementOutcome {
    use engine_lab_core::measurement::{run_measurement, MeasurementConfig, MeasurementSetup};
    use engine_lab_core::safety::LimitationMatrices;
    use rand::SeedableRng;
    let cfg = engine_lab_core::LabConfig::default();
    let measurement = MeasurementConfig {
        cycles,
        keep_log,
        ..MeasurementConfig::default()
    };
    let bounds = env.bounds.clone();
    let setup = MeasurementSetup {
        bounds: &bounds,
        safety: &cfg.safety,
        measurement: &measurement,
        profile: &cfg.plan.profile,
        reward: &cfg.reward,
        constants: &cfg.engine_constants,
    };
    let mats = LimitationMatrices::new(cfg.classifier.clone(), directions);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    run_measurement(env, mats, &setup, &mut rng)
}

pub type AgentThread = std::thread::JoinHandle<engine_lab_core::Result<engine_lab_core::udp::AgentServer>>;

/// Starts an agent endpoint on an ephemeral loopback port. The thread ends
/// on a shutdown datagram or after `idle` without traffic and hands the
/// server back.
pub fn spawn_agent(
    session: engine_lab_core::session::AgentSession,
    stall: Option<engine_lab_core::udp::StallFn>,
    idle: std::time::Duration,
) -> (std::net::SocketAddr, AgentThread) {
    let mut server =
        engine_lab_core::udp::AgentServer::bind("127.0.0.1:0".parse().unwrap(), session).unwrap();
    if let Some(stall) = stall {
        server = server.with_stall(stall);
    }
    let addr = server.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        server.serve(Some(idle))?;
        Ok(server)
    });
    (addr, handle)
}

pub fn loopback_link(peer: std::net::SocketAddr, deadline: std::time::Duration) -> engine_lab_core::udp::EnvLink {
    engine_lab_core::udp::EnvLink::bind("127.0.0.1:0".parse().unwrap(), peer, deadline).unwrap()
}

pub fn percentile(samples: &mut [f64], q: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((samples.len() as f64 * q).ceil() as usize).clamp(1, samples.len()) - 1;
    samples[idx]
}
