mod common;

use common::{fd_params, flat_grads, mean_q, random_experience, rel_err};
use engine_lab_core::ddpg::{
    decay_sigma, discounted_return, polyak, Agent, AgentConfig, Critic, Experience, ReplayBuffer,
};
use engine_lab_core::nn::{Mlp, OptimizerKind};
use engine_lab_core::{CycleState, RawAction, Result, StateRanges};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> AgentConfig {
    AgentConfig {
        actor_hidden: vec![8, 8],
        critic_hidden: vec![8, 8],
        batch_size: 8,
        ..AgentConfig::default()
    }
}

fn agent(seed: u64) -> Agent {
    Agent::new(small_config(), StateRanges::default(), seed, seed + 1).unwrap()
}

fn batch(seed: u64, n: usize) -> Vec<Experience> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| random_experience(&mut rng, i == n - 1)).collect()
}

/// Critic whose value is `−(u₀ − 3)²`, independent of the state.
struct Quadratic;

impl Critic for Quadratic {
    fn value(&self, _x: &[f64], u: &[f64]) -> Result<f64> {
        Ok(-(u[0] - 3.0).powi(2))
    }

    fn action_gradient(&self, x: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x, u)?, vec![-2.0 * (u[0] - 3.0), 0.0, 0.0]))
    }
}

fn critic_loss(agent: &Agent, critic: &Mlp, batch: &[Experience]) -> f64 {
    batch
        .iter()
        .map(|e| {
            let y = agent.critic_target(e).unwrap();
            let x = agent.input(&e.s_prev);
            (critic.value(&x, &e.u.0).unwrap() - y).powi(2)
        })
        .sum::<f64>()
        / batch.len() as f64
}

#[test]
fn decay_examples() {
    assert_eq!(decay_sigma(0.5, 0.95), 0.475);
    assert_eq!(decay_sigma(0.3, 1.0), 0.3);
    let mut s = 0.5;
    for _ in 0..20 {
        s = decay_sigma(s, 0.95);
    }
    assert!((s - 0.5 * 0.95f64.powi(20)).abs() < 1e-15);
    assert!((s - 0.1792).abs() < 1e-4);
}

#[test]
fn discounted_return_examples() {
    assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
    assert_eq!(discounted_return(&[-2.0, 5.0, 7.0], 0.0), -2.0);
    assert_eq!(discounted_return(&[0.0; 10], 0.9), 0.0);
}

#[test]
fn zero_sigma_is_the_actor_forward_pass() {
    let mut a = agent(1);
    let s = batch(2, 1)[0].s_prev;
    let x = a.input(&s);
    let expected = a.actor.forward(&x).unwrap();
    let u = a.act_with_sigma(&s, 0.0).unwrap();
    assert_eq!(u.0.to_vec(), expected);
    assert_eq!(a.act_with_sigma(&s, 0.0).unwrap(), u);
}

#[test]
fn noise_is_reproducible_per_seed() {
    let s = batch(3, 1)[0].s_prev;
    let draw = |seed| {
        let mut a = Agent::new(small_config(), StateRanges::default(), 7, seed).unwrap();
        (0..50).map(|_| a.act(&s).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(11), draw(11));
    assert_ne!(draw(11), draw(12));
}

#[test]
fn empirical_noise_deviation_matches_sigma() {
    let cfg = AgentConfig {
        actor_hidden: vec![4],
        ..AgentConfig::default()
    };
    let mut a = Agent::new(cfg.clone(), StateRanges::default(), 5, 6).unwrap();
    let actor = Mlp::zeros(&cfg.actor_topology()).unwrap();
    a.actor = actor;
    let s = CycleState::from_array([8.0, 450.0, 3.0, 2.0, 5.0, 50.0, 3.0, 3.0]);
    let n = 100_000 / 3 + 1;
    let mut samples = Vec::with_capacity(3 * n);
    for _ in 0..n {
        samples.extend(a.act_with_sigma(&s, 0.5).unwrap().0);
    }
    let m = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    assert!((var.sqrt() - 0.5).abs() < 0.005, "sigma hat {}", var.sqrt());
}

#[test]
fn critic_target_terminal_and_zero_nets() {
    let mut a = agent(4);
    let mut e = batch(5, 1)[0].clone();
    e.reward = -1.25;
    e.done = true;
    assert_eq!(a.critic_target(&e).unwrap(), -1.25);
    e.done = false;
    a.critic_target = Mlp::zeros(&small_config().critic_topology()).unwrap();
    assert_eq!(a.critic_target(&e).unwrap(), -1.25);
}

#[test]
fn critic_target_with_stub_value() {
    let mut a = agent(6);
    let mut stub = Mlp::zeros(&small_config().critic_topology()).unwrap();
    stub.layers_mut().last_mut().unwrap().bias[0] = -2.0;
    a.critic_target = stub;
    let mut e = batch(7, 1)[0].clone();
    e.reward = -1.0;
    e.done = false;
    assert!((a.critic_target(&e).unwrap() - (-2.8)).abs() < 1e-15);
}

#[test]
fn critic_loss_matches_independent_oracle() {
    let mut a = agent(8);
    let b = batch(9, 16);
    let oracle = critic_loss(&a, &a.critic.clone(), &b);
    let loss = a.train_critic(&b).unwrap();
    assert!((loss - oracle).abs() <= 1e-12 * oracle.max(1.0));
}

#[test]
fn critic_gradient_matches_finite_differences() {
    for seed in 0..10u64 {
        let cfg = AgentConfig {
            optimizer: OptimizerKind::Plain,
            critic_lr: 1.0,
            ..small_config()
        };
        let mut a = Agent::new(cfg, StateRanges::default(), 20 + seed, 0).unwrap();
        let b = batch(40 + seed, 8);
        let before = a.critic.clone();
        let frozen = a.clone();
        let numeric = fd_params(&before, |c| critic_loss(&frozen, c, &b));
        a.train_critic(&b).unwrap();
        let analytic: Vec<f64> = before.flat().zip(a.critic.flat()).map(|(p, q)| p - q).collect();
        let err = rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn critic_fixed_point_leaves_parameters_unchanged() {
    let cfg = AgentConfig {
        optimizer: OptimizerKind::Plain,
        ..small_config()
    };
    let mut a = Agent::new(cfg.clone(), StateRanges::default(), 1, 2).unwrap();
    a.critic = Mlp::zeros(&cfg.critic_topology()).unwrap();
    a.critic_target = a.critic.clone();
    let mut b = batch(3, 4);
    for e in &mut b {
        e.reward = 0.0;
    }
    let before = a.critic.clone();
    assert_eq!(a.train_critic(&b).unwrap(), 0.0);
    assert_eq!(a.critic, before);
}

#[test]
fn single_sample_plain_step_descends() {
    let cfg = AgentConfig {
        optimizer: OptimizerKind::Plain,
        critic_lr: 1e-3,
        ..small_config()
    };
    let mut a = Agent::new(cfg, StateRanges::default(), 12, 13).unwrap();
    let b = batch(14, 1);
    let pre = a.train_critic(&b).unwrap();
    let post = critic_loss(&a, &a.critic, &b);
    assert!(pre > 0.0);
    assert!(post < pre, "{post} >= {pre}");
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let mut a = agent(15);
    let zero = Mlp::zeros(&small_config().critic_topology()).unwrap();
    let before = a.actor.clone();
    let q = a.train_actor_with(&zero, &batch(16, 8)).unwrap();
    assert_eq!(q, 0.0);
    assert_eq!(a.actor, before);
}

#[test]
fn train_actor_leaves_critic_untouched() {
    let mut a = agent(17);
    let critic = a.critic.clone();
    let target = a.critic_target.clone();
    a.train_actor(&batch(18, 8)).unwrap();
    assert_eq!(a.critic, critic);
    assert_eq!(a.critic_target, target);
}

#[test]
fn quadratic_critic_drives_policy_to_optimum() {
    let cfg = AgentConfig {
        actor_lr: 1e-2,
        ..small_config()
    };
    let mut a = Agent::new(cfg, StateRanges::default(), 19, 20).unwrap();
    let b = batch(21, 32);
    let start = a.policy(&b[0].s_prev).unwrap().0[0];
    for _ in 0..3000 {
        a.train_actor_with(&Quadratic, &b).unwrap();
    }
    assert!((start - 3.0).abs() > 2.5);
    for e in &b {
        let u = a.policy(&e.s_prev).unwrap().0[0];
        assert!((u - 3.0).abs() < 0.05, "{u}");
    }
}

#[test]
fn actor_gradient_matches_finite_differences() {
    for seed in 0..10u64 {
        let a = Agent::new(small_config(), StateRanges::default(), 60 + seed, 0).unwrap();
        let b = batch(80 + seed, 8);
        let (grads, mean) = a.actor_gradient(&a.critic, &b).unwrap();
        assert!((mean - mean_q(&a, &a.actor, &a.critic, &b)).abs() < 1e-12);
        let numeric = fd_params(&a.actor, |actor| -mean_q(&a, actor, &a.critic, &b));
        let err = rel_err(&flat_grads(&grads), &numeric);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn polyak_examples() {
    let mut target = Mlp::zeros(&[1, 1]).unwrap();
    let mut source = Mlp::zeros(&[1, 1]).unwrap();
    source.flat_mut().for_each(|p| *p = 1.0);
    polyak(&mut target, &source, 1e-3);
    assert!(target.flat().all(|p| *p == 0.001));
    let mut same = source.clone();
    polyak(&mut same, &source, 1e-3);
    assert_eq!(same, source);
    let mut full = Mlp::zeros(&[1, 1]).unwrap();
    polyak(&mut full, &source, 1.0);
    assert_eq!(full, source);
}

#[test]
fn polyak_is_exact_elementwise() {
    let mut a = agent(22);
    a.train_critic(&batch(23, 8)).unwrap();
    a.train_actor(&batch(24, 8)).unwrap();
    let rho = a.cfg.polyak;
    let old_actor = a.actor_target.clone();
    let old_critic = a.critic_target.clone();
    a.polyak_update();
    let pairs = [(&a.actor, &old_actor, &a.actor_target), (&a.critic, &old_critic, &a.critic_target)];
    for (src, old, new) in pairs {
        let dev = src
            .flat()
            .zip(old.flat())
            .zip(new.flat())
            .map(|((s, o), n)| (n - (rho * s + (1.0 - rho) * o)).abs())
            .fold(0.0, f64::max);
        assert_eq!(dev, 0.0);
    }
}

#[test]
fn targets_start_as_exact_copies() {
    let a = agent(25);
    assert_eq!(a.actor, a.actor_target);
    assert_eq!(a.critic, a.critic_target);
    let last = a.actor.layers().last().unwrap();
    let bound = 1e-3 / (last.inputs as f64).sqrt();
    assert!(last.weights.iter().chain(&last.bias).all(|w| w.abs() <= bound));
}

#[test]
fn end_of_episode_training_counts_batches_and_decays() {
    let mut a = agent(26);
    let mut buffer = ReplayBuffer::new(100, 27).unwrap();
    let episode = batch(28, 20);
    episode.iter().cloned().for_each(|e| buffer.push(e));
    let report = a.end_of_episode_training(&mut buffer, &episode, 0).unwrap();
    assert_eq!(report.batches, 1);
    assert_eq!(a.sigma, 0.475);
    let report = a.end_of_episode_training(&mut buffer, &episode, 4).unwrap();
    assert_eq!(report.batches, 5);
}

#[test]
fn end_of_episode_training_is_deterministic() {
    let run = || {
        let mut a = agent(29);
        let mut buffer = ReplayBuffer::new(100, 30).unwrap();
        let episode = batch(31, 20);
        episode.iter().cloned().for_each(|e| buffer.push(e));
        a.end_of_episode_training(&mut buffer, &episode, 3).unwrap();
        (a.actor, a.critic, a.actor_target)
    };
    assert_eq!(run(), run());
}

#[test]
fn buffer_keeps_oldest_until_full() {
    let mut buffer = ReplayBuffer::new(10, 0).unwrap();
    let items = batch(32, 15);
    for e in items.iter().take(7).cloned() {
        buffer.push(e);
    }
    assert_eq!(buffer.get(0), Some(&items[0]));
    for e in items.iter().skip(7).cloned() {
        buffer.push(e);
    }
    assert_eq!(buffer.len(), 10);
    assert_eq!(buffer.get(0), Some(&items[5]));
    assert_eq!(buffer.get(9), Some(&items[14]));
}

#[test]
fn buffer_sampling_is_reproducible_and_distinct() {
    let fill = || {
        let mut buffer = ReplayBuffer::new(200, 33).unwrap();
        for (i, mut e) in batch(34, 100).into_iter().enumerate() {
            e.reward = -(i as f64);
            buffer.push(e);
        }
        buffer
    };
    let mut a = fill();
    let mut b = fill();
    let sa = a.sample(64);
    assert_eq!(sa, b.sample(64));
    let mut rewards: Vec<i64> = sa.iter().map(|e| e.reward as i64).collect();
    rewards.sort_unstable();
    rewards.dedup();
    assert_eq!(rewards.len(), 64);
    assert_eq!(a.sample(300).len(), 300);
}

#[test]
fn buffer_snapshot_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("buffer.bin");
    let mut buffer = ReplayBuffer::new(50, 35).unwrap();
    batch(36, 30).into_iter().for_each(|e| buffer.push(e));
    buffer.write_snapshot(&path).unwrap();
    let mut back = ReplayBuffer::new(50, 35).unwrap();
    back.read_snapshot(&path).unwrap();
    assert!(buffer.iter().eq(back.iter()));
}

#[test]
fn agent_serialization_round_trips() {
    let mut a = agent(37);
    a.train_critic(&batch(38, 8)).unwrap();
    let text = serde_json::to_string(&a).unwrap();
    let mut back: Agent = serde_json::from_str(&text).unwrap();
    assert_eq!(back.actor, a.actor);
    assert_eq!(back.critic_opt, a.critic_opt);
    let s = batch(39, 1)[0].s_prev;
    assert_eq!(back.act(&s).unwrap(), a.act(&s).unwrap());
}

proptest! {
    #[test]
    fn buffer_never_exceeds_capacity(cap in 1usize..40, pushes in 0usize..120) {
        let mut buffer = ReplayBuffer::new(cap, 0).unwrap();
        let e = batch(40, 1)[0].clone();
        for i in 0..pushes {
            let mut x = e.clone();
            x.reward = -(i as f64);
            buffer.push(x);
            prop_assert!(buffer.len() <= cap);
        }
        prop_assert_eq!(buffer.len(), pushes.min(cap));
        if pushes > 0 {
            let newest = buffer.get(buffer.len() - 1).unwrap().reward;
            prop_assert_eq!(newest, -((pushes - 1) as f64));
            let oldest = buffer.get(0).unwrap().reward;
            prop_assert_eq!(oldest, -((pushes - pushes.min(cap)) as f64));
        }
    }

    #[test]
    fn deterministic_policy_is_pure(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_state(&mut rng);
        let mut a = agent(41);
        let p = a.policy(&s).unwrap();
        a.act(&s).unwrap();
        prop_assert_eq!(a.policy(&s).unwrap(), p);
        prop_assert_eq!(a.act_with_sigma(&s, 0.0).unwrap(), p);
    }

    #[test]
    fn raw_actions_reject_non_finite(v in prop::num::f64::ANY) {
        let r = RawAction::new([v, 0.0, 0.0]);
        prop_assert_eq!(r.is_ok(), v.is_finite());
    }
}

