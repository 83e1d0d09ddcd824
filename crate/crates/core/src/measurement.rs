//! Dynamic boundary measurement: radial exploration per (class, direction)
//! with running-average estimates of the safe radius.

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{denormalize_action, ActionBounds, ActionVector};
use crate::classifier::classify_state;
use crate::constants::EngineConstants;
use crate::cycle_log::{next_state, score_cycle, CycleIndex, CycleRecord, MonitorTrace};
use crate::engine::{CombustionEnv, CycleOutputs};
use crate::error::{LabError, Result};
use crate::profile::{random_profile, ProfileConfig};
use crate::reward::RewardParams;
use crate::safety::{Cell, LimitationMatrices, SafetyConfig};
use crate::state::CycleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// Uniform random direction every cycle.
    Random,
    /// Cycle through the directions in order.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementConfig {
    /// Radial step Δr_expl.
    pub dr_expl: f64,
    pub r_max: f64,
    pub direction_policy: DirectionPolicy,
    /// Fraction of `r_max` the misfire class may explore.
    pub misfire_radius_factor: f64,
    /// Cycle budget.
    pub cycles: u64,
    /// Stop early once every cell of every visited class reached this count.
    pub min_z: Option<u64>,
    /// Keep the per-cycle log; long convergence runs can switch it off.
    pub keep_log: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            dr_expl: 0.02,
            r_max: 1.0,
            direction_policy: DirectionPolicy::Random,
            misfire_radius_factor: 0.5,
            cycles: 50_000,
            min_z: None,
            keep_log: true,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dr_expl > 0.0 && self.dr_expl <= self.r_max && self.r_max <= 1.0) {
            return Err(LabError::Config("need 0 < dr_expl <= r_max <= 1".into()));
        }
        if !(self.misfire_radius_factor > 0.0 && self.misfire_radius_factor <= 1.0) {
            return Err(LabError::Config("misfire_radius_factor must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Largest radius explored in class `k`.
    pub fn class_r_max(&self, mats: &LimitationMatrices, k: usize) -> f64 {
        if k == mats.classifier().misfire_class() {
            self.r_max * self.misfire_radius_factor
        } else {
            self.r_max
        }
    }
}

/// A cycle is safe when the pressure rise rate stays within the limit and
/// the load does not fall more than the misfire tolerance below setpoint.
pub fn is_safe(out: &CycleOutputs, pmi_sp: f64, cfg: &SafetyConfig) -> bool {
    out.dpmax <= cfg.dpmax_limit && out.pmi >= pmi_sp - cfg.misfire_tolerance
}

/// `r_lim ← (z·r_lim + r)/(z + 1)`, `z ← z + 1`.
fn accept(cell: &mut Cell, r: f64) {
    let z = cell.z_lim as f64;
    cell.r_lim = (z * cell.r_lim + r) / (z + 1.0);
    cell.z_lim += 1;
}

/// Applies the observation made at the cell's current radius, then moves
/// the radius one step along its orientation.
pub fn measurement_step(
    mats: &mut LimitationMatrices,
    k: usize,
    l: usize,
    observed_safe: bool,
    cfg: &MeasurementConfig,
) {
    let mut c = mats.cell(k, l);
    let r = c.r;
    if observed_safe {
        if r > c.r_lim {
            accept(&mut c, r);
        }
    } else {
        c.orientation = -1;
        if r < c.r_lim {
            accept(&mut c, r);
        }
    }
    let r_max = cfg.class_r_max(mats, k);
    let next = r + f64::from(c.orientation) * cfg.dr_expl;
    if next <= 0.0 {
        c.r = 0.0;
        c.orientation = 1;
    } else if next >= r_max {
        c.r = r_max;
        c.orientation = -1;
    } else {
        c.r = next;
    }
    mats.set_cell(k, l, c);
}

/// Probe action for the cell of class `k` along direction `l`: the current
/// radius times the direction, denormalized around the setpoint's start
/// point and clipped to the bounds. The flag reports whether clipping
/// changed the action.
pub fn next_probe_action(
    mats: &LimitationMatrices,
    k: usize,
    l: usize,
    pmi_sp: f64,
    bounds: &ActionBounds,
) -> Result<(ActionVector, bool)> {
    let r = mats.cell(k, l).r;
    let v = mats.directions().get(l);
    let u_norm = v.map(|x| (r * x).clamp(-1.0, 1.0));
    let start = bounds.start_point(pmi_sp);
    let u = denormalize_action(&u_norm, &start, bounds)?;
    let clipped = bounds.clip(&u);
    let changed = clipped != u;
    if changed {
        debug!("probe ({k}, {l}) at r = {r} clipped to bounds");
    }
    Ok((clipped, changed))
}

/// Everything one measurement run needs besides the environment.
#[derive(Debug, Clone)]
pub struct MeasurementSetup<'a> {
    pub bounds: &'a ActionBounds,
    pub safety: &'a SafetyConfig,
    pub measurement: &'a MeasurementConfig,
    pub profile: &'a ProfileConfig,
    pub reward: &'a RewardParams,
    pub constants: &'a EngineConstants,
}

#[derive(Debug)]
pub struct MeasurementOutcome {
    pub mats: LimitationMatrices,
    pub log: Vec<CycleRecord>,
    /// Set when the environment failed before the budget was used up.
    pub partial: bool,
    pub error: Option<LabError>,
    pub cycles_run: u64,
    pub clipped_probes: u64,
}

fn choose_direction<R: Rng + ?Sized>(policy: DirectionPolicy, n: usize, t: u64, rng: &mut R) -> usize {
    match policy {
        DirectionPolicy::Random => rng.random_range(0..n),
        DirectionPolicy::RoundRobin => (t % n as u64) as usize,
    }
}

fn stop_early(mats: &LimitationMatrices, visited: &[bool], min_z: Option<u64>) -> bool {
    let Some(min_z) = min_z else { return false };
    visited.iter().any(|v| *v)
        && visited
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .all(|(k, _)| (0..mats.n_directions()).all(|l| mats.z_lim(k, l) >= min_z))
}

/// Runs the measurement loop for up to `setup.measurement.cycles` cycles.
///
/// The environment is first driven once at the start point of the first
/// setpoint to obtain an initial state. Each cycle then probes the class
/// the previous cycle falls into along a chosen direction, observes the
/// outcome and updates the matrices. An environment error ends the run and
/// is returned alongside the partial matrices.
pub fn run_measurement<R: Rng + ?Sized>(
    env: &mut dyn CombustionEnv,
    mut mats: LimitationMatrices,
    setup: &MeasurementSetup<'_>,
    rng: &mut R,
) -> MeasurementOutcome {
    let cfg = setup.measurement;
    let budget = cfg.cycles;
    let mut log = Vec::new();
    let mut clipped_probes = 0;
    if budget == 0 {
        return MeasurementOutcome {
            mats,
            log,
            partial: false,
            error: None,
            cycles_run: 0,
            clipped_probes,
        };
    }
    let profile = random_profile(setup.profile, budget as usize + 1, rng);
    let mut visited = vec![false; mats.n_classes()];
    let fail = |mats, log, error, t, clipped_probes| MeasurementOutcome {
        mats,
        log,
        partial: true,
        error: Some(error),
        cycles_run: t,
        clipped_probes,
    };

    let sp0 = profile[0];
    let warm = match env.step(&setup.bounds.start_point(sp0), sp0) {
        Ok(o) => o,
        Err(e) => return fail(mats, log, e, 0, clipped_probes),
    };
    let mut state: CycleState = next_state(&warm, sp0, sp0);

    for t in 0..budget {
        let sp = profile[t as usize];
        let k = classify_state(&state, mats.classifier());
        visited[k] = true;
        let l = choose_direction(cfg.direction_policy, mats.n_directions(), t, rng);
        let (u, clipped) = match next_probe_action(&mats, k, l, sp, setup.bounds) {
            Ok(p) => p,
            Err(e) => return fail(mats, log, e, t, clipped_probes),
        };
        clipped_probes += u64::from(clipped);
        let out = match env.step(&u, sp) {
            Ok(o) => o,
            Err(e) => {
                warn!("environment fault at measurement cycle {t}: {e}");
                return fail(mats, log, e, t, clipped_probes);
            }
        };
        let probe_r = mats.cell(k, l).r;
        let safe = is_safe(&out, sp, setup.safety);
        measurement_step(&mut mats, k, l, safe, cfg);

        let next = next_state(&out, sp, profile[t as usize + 1]);
        if cfg.keep_log {
            let score = score_cycle(&state, &out, 0.0, setup.safety.dpmax_limit, setup.reward, setup.constants);
            let raw = setup.bounds.raw_from_action(&u);
            let trace = MonitorTrace {
                class: k,
                mapped: u,
                norm: probe_r,
                r_safe: probe_r,
                dr_sf: 0.0,
                replaced: false,
                fallback: false,
            };
            let index = CycleIndex {
                mode: "measure".into(),
                episode: 0,
                step: t,
                cycle: t,
                validation: false,
            };
            log.push(CycleRecord::new(index, &state, &raw, &u, &trace, &out, &score, &next, t + 1 == budget));
        }
        state = next;
        if stop_early(&mats, &visited, cfg.min_z) {
            return MeasurementOutcome {
                mats,
                log,
                partial: false,
                error: None,
                cycles_run: t + 1,
                clipped_probes,
            };
        }
    }
    MeasurementOutcome {
        mats,
        log,
        partial: false,
        error: None,
        cycles_run: budget,
        clipped_probes,
    }
}
