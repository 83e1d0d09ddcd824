use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::{ActionBounds, ActionVector};
use crate::constants::EngineConstants;
use crate::error::{LabError, Result};

/// Integral outputs of one combustion cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOutputs {
    /// °CA
    pub alpha50: f64,
    /// heat release, J
    pub q: f64,
    /// IMEP, bar
    pub pmi: f64,
    /// bar/°CA
    pub dpmax: f64,
    pub ion_max: f64,
    pub ion_int: f64,
    pub misfire: bool,
    /// Injected gasoline mass, mg.
    pub m_g: f64,
    /// Injected ethanol mass, mg.
    pub m_e: f64,
}

/// Anything that turns one actuator command into one cycle's outputs.
pub trait CombustionEnv {
    fn step(&mut self, action: &ActionVector, pmi_sp: f64) -> Result<CycleOutputs>;
}

/// Injector characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuelPath {
    /// mg per ms of opening beyond the dead time.
    pub gasoline_slope: f64,
    /// ms
    pub gasoline_dead_time: f64,
    /// ms; shorter pulses inject nothing.
    pub ethanol_min_opening: f64,
    /// Mass delivered at the minimum opening time, mg.
    pub ethanol_min_mass: f64,
    /// mg per ms beyond the minimum opening time.
    pub ethanol_slope: f64,
}

impl Default for FuelPath {
    fn default() -> Self {
        FuelPath {
            gasoline_slope: 24.0,
            gasoline_dead_time: 0.1,
            ethanol_min_opening: 0.08,
            ethanol_min_mass: 1.0,
            ethanol_slope: 36.0,
        }
    }
}

impl FuelPath {
    pub fn gasoline_mass(&self, t_inj: f64) -> f64 {
        self.gasoline_slope * (t_inj - self.gasoline_dead_time).max(0.0)
    }

    pub fn ethanol_mass(&self, t_inj: f64) -> f64 {
        if t_inj < self.ethanol_min_opening {
            0.0
        } else {
            self.ethanol_min_mass + self.ethanol_slope * (t_inj - self.ethanol_min_opening)
        }
    }
}

/// Coefficients of the cycle model. See [`EngineSim::step`] for the laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombustionModel {
    /// K
    pub intake_temp: f64,
    pub residual_base: f64,
    /// Residual fraction gained per °CA of NVO above `nvo_ref`.
    pub residual_slope: f64,
    pub nvo_ref: f64,
    /// Charge cooling by ethanol evaporation, K/mg.
    pub ethanol_cooling: f64,
    pub alpha50_ref: f64,
    pub temp_ref: f64,
    /// °CA advance per K of mixture temperature.
    pub alpha50_temp_gain: f64,
    /// °CA advance per 100 J of fuel energy above `energy_ref`.
    pub alpha50_energy_gain: f64,
    pub energy_ref: f64,
    /// Mixtures colder than this do not ignite, K.
    pub misfire_temp: f64,
    /// Phasing later than this is a misfire, °CA.
    pub late_limit: f64,
    pub burn_fraction: f64,
    pub misfire_fraction: f64,
    pub eta_max: f64,
    pub eta_curvature: f64,
    pub eta_peak_alpha50: f64,
    pub eta_min: f64,
    pub dp_gain: f64,
    pub dp_decay: f64,
    pub exhaust_base: f64,
    pub exhaust_q_gain: f64,
    pub exhaust_phasing_gain: f64,
    pub misfire_exhaust_base: f64,
    pub misfire_exhaust_q_gain: f64,
    pub ion_max_gain: f64,
    pub ion_phasing_decay: f64,
    pub ion_int_gain: f64,
    /// Exhaust temperature assumed before the first cycle, K.
    pub initial_exhaust_temp: f64,
}

impl Default for CombustionModel {
    fn default() -> Self {
        CombustionModel {
            intake_temp: 323.0,
            residual_base: 0.15,
            residual_slope: 0.014,
            nvo_ref: 170.0,
            ethanol_cooling: 1.5,
            alpha50_ref: 8.0,
            temp_ref: 528.4,
            alpha50_temp_gain: 0.10,
            alpha50_energy_gain: 0.10,
            energy_ref: 450.0,
            misfire_temp: 440.0,
            late_limit: 20.0,
            burn_fraction: 0.95,
            misfire_fraction: 0.05,
            eta_max: 0.33,
            eta_curvature: 0.0015,
            eta_peak_alpha50: 8.0,
            eta_min: 0.02,
            dp_gain: 0.025,
            dp_decay: 0.15,
            exhaust_base: 520.0,
            exhaust_q_gain: 0.45,
            exhaust_phasing_gain: 8.0,
            misfire_exhaust_base: 600.0,
            misfire_exhaust_q_gain: 0.2,
            ion_max_gain: 0.02,
            ion_phasing_decay: 0.05,
            ion_int_gain: 0.15,
            initial_exhaust_temp: 720.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// °CA
    pub alpha50: f64,
    /// bar/°CA
    pub dpmax: f64,
    pub ion: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            alpha50: 0.8,
            dpmax: 0.3,
            ion: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSimConfig {
    pub fuel: FuelPath,
    pub model: CombustionModel,
    pub noise: NoiseConfig,
    /// Zero every noise σ.
    pub deterministic: bool,
}

impl Default for EngineSimConfig {
    fn default() -> Self {
        EngineSimConfig {
            fuel: FuelPath::default(),
            model: CombustionModel::default(),
            noise: NoiseConfig::default(),
            deterministic: false,
        }
    }
}

impl EngineSimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if [n.alpha50, n.dpmax, n.ion].iter().any(|s| !(*s >= 0.0)) {
            return Err(LabError::Config("noise σ must be non-negative".into()));
        }
        let f = &self.fuel;
        if !(f.gasoline_slope > 0.0 && f.ethanol_slope >= 0.0 && f.ethanol_min_opening > 0.0) {
            return Err(LabError::Config("invalid fuel path".into()));
        }
        Ok(())
    }
}

/// Internal memory carried from one cycle to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMemory {
    /// Exhaust temperature of the previous cycle, K.
    pub exhaust_temp: f64,
}

/// Stochastic one-cycle-memory HCCI surrogate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineSim {
    cfg: EngineSimConfig,
    constants: EngineConstants,
    bounds: ActionBounds,
    memory: SimMemory,
    rng: ChaCha8Rng,
}

impl EngineSim {
    pub fn new(
        cfg: EngineSimConfig,
        constants: EngineConstants,
        bounds: ActionBounds,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let memory = SimMemory {
            exhaust_temp: cfg.model.initial_exhaust_temp,
        };
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(EngineSim {
            cfg,
            constants,
            bounds,
            memory,
            rng,
        })
    }

    pub fn config(&self) -> &EngineSimConfig {
        &self.cfg
    }

    pub fn memory(&self) -> SimMemory {
        self.memory
    }

    pub fn set_memory(&mut self, memory: SimMemory) {
        self.memory = memory;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        if self.cfg.deterministic || sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma)
            .expect("σ validated non-negative")
            .sample(&mut self.rng)
    }

    /// Noise-free phasing and mixture temperature for a command, given the
    /// previous exhaust temperature.
    pub fn nominal_phasing(&self, action: &ActionVector, exhaust_temp: f64) -> (f64, f64) {
        let m = &self.cfg.model;
        let fuel = &self.cfg.fuel;
        let m_g = fuel.gasoline_mass(action.t_inj_g);
        let m_e = fuel.ethanol_mass(action.t_inj_e);
        let energy = self.constants.fuel_energy(m_g, m_e);
        let residual = (m.residual_base + m.residual_slope * (action.alpha_nvo - m.nvo_ref)).clamp(0.0, 0.95);
        let t_mix = (1.0 - residual) * m.intake_temp + residual * exhaust_temp - m.ethanol_cooling * m_e;
        let alpha50 = m.alpha50_ref
            - m.alpha50_temp_gain * (t_mix - m.temp_ref)
            - m.alpha50_energy_gain * (energy - m.energy_ref) / 100.0;
        (alpha50, t_mix)
    }

    /// One cycle. Fuel masses follow the injector laws; the residual
    /// fraction is affine in NVO; mixture temperature blends intake air with
    /// the previous exhaust; phasing advances with temperature and fuel
    /// energy; cold mixtures or very late phasing misfire; IMEP follows a
    /// thermal-efficiency parabola in phasing; the pressure rise rate decays
    /// exponentially with phasing.
    pub fn simulate(&mut self, action: &ActionVector) -> Result<CycleOutputs> {
        if !self.bounds.contains(action) {
            return Err(LabError::OutOfBounds(format!("{action:?}")));
        }
        let m = self.cfg.model.clone();
        let fuel = &self.cfg.fuel;
        let m_g = fuel.gasoline_mass(action.t_inj_g);
        let m_e = fuel.ethanol_mass(action.t_inj_e);
        let energy = self.constants.fuel_energy(m_g, m_e);
        let (nominal, t_mix) = self.nominal_phasing(action, self.memory.exhaust_temp);
        let sigma_a = self.cfg.noise.alpha50;
        let alpha50 = nominal + self.gauss(sigma_a);
        let misfire = t_mix < m.misfire_temp || alpha50 > m.late_limit;
        let q = energy * if misfire { m.misfire_fraction } else { m.burn_fraction };
        let eta = (m.eta_max - m.eta_curvature * (alpha50 - m.eta_peak_alpha50).powi(2)).max(m.eta_min);
        let pmi = eta * q / (self.constants.displacement_m3 * 1e5);
        let sigma_dp = self.cfg.noise.dpmax;
        let dp_noise = self.gauss(sigma_dp);
        let dpmax = if misfire {
            0.0
        } else {
            (m.dp_gain * q * (-m.dp_decay * alpha50).exp() + dp_noise).max(0.0)
        };
        let sigma_ion = self.cfg.noise.ion;
        let ion_noise = (self.gauss(sigma_ion), self.gauss(sigma_ion));
        let ion_max = (m.ion_max_gain * q * (-m.ion_phasing_decay * (alpha50 - 8.0)).exp() + ion_noise.0).max(0.0);
        let ion_int = (m.ion_int_gain * q + ion_noise.1).max(0.0);
        self.memory.exhaust_temp = if misfire {
            m.misfire_exhaust_base + m.misfire_exhaust_q_gain * q
        } else {
            m.exhaust_base + m.exhaust_q_gain * q + m.exhaust_phasing_gain * (alpha50 - 8.0)
        };
        Ok(CycleOutputs {
            alpha50,
            q,
            pmi,
            dpmax,
            ion_max,
            ion_int,
            misfire,
            m_g,
            m_e,
        })
    }

    /// Noise-free steady state reached by holding `action` for `cycles`.
    pub fn steady_state(&self, action: &ActionVector, cycles: usize) -> Result<CycleOutputs> {
        let mut probe = self.clone();
        probe.cfg.deterministic = true;
        let mut out = probe.simulate(action)?;
        for _ in 1..cycles {
            out = probe.simulate(action)?;
        }
        Ok(out)
    }

    /// Grid scan confirming that the action bounds contain both pressure
    /// rise rate violations and misfires.
    pub fn check_unsafe_region_reachable(&self, dpmax_limit: f64) -> Result<()> {
        let (mut high_dp, mut misfire) = (false, false);
        let steps = 6;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let f = |idx: usize, d: usize| {
                        self.bounds.min[d] + (self.bounds.max[d] - self.bounds.min[d]) * idx as f64 / steps as f64
                    };
                    let a = self.bounds.clip(&ActionVector::new(f(i, 0), f(j, 1), f(k, 2)));
                    let out = self.steady_state(&a, 30)?;
                    high_dp |= out.dpmax > dpmax_limit;
                    misfire |= out.misfire;
                }
            }
            if high_dp && misfire {
                return Ok(());
            }
        }
        Err(LabError::Config(format!(
            "surrogate has no reachable unsafe region (dp > limit: {high_dp}, misfire: {misfire})"
        )))
    }
}

impl CombustionEnv for EngineSim {
    fn step(&mut self, action: &ActionVector, _pmi_sp: f64) -> Result<CycleOutputs> {
        self.simulate(action)
    }
}
