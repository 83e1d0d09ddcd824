//! Per-cycle log records shared by measurement, training, adaptation and
//! validation, and their CSV persistence.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{ActionVector, RawAction};
use crate::constants::EngineConstants;
use crate::ddpg::Experience;
use crate::engine::CycleOutputs;
use crate::error::{LabError, Result};
use crate::reward::{efficiency, ethanol_energy_share, total_reward, RewardBreakdown, RewardInputs, RewardParams};
use crate::state::CycleState;

/// One logged combustion cycle. Flat so that it maps one-to-one onto a CSV
/// row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub mode: String,
    pub episode: u64,
    pub step: u64,
    pub cycle: u64,
    pub validation: bool,

    pub s_alpha50: f64,
    pub s_q: f64,
    pub s_pmi: f64,
    pub s_dpmax: f64,
    pub s_ion_max: f64,
    pub s_ion_int: f64,
    pub s_pmi_sp_prev: f64,
    pub s_pmi_sp: f64,

    pub raw_nvo: f64,
    pub raw_tg: f64,
    pub raw_te: f64,
    pub mapped_nvo: f64,
    pub mapped_tg: f64,
    pub mapped_te: f64,
    pub u_nvo: f64,
    pub u_tg: f64,
    pub u_te: f64,

    pub class: usize,
    pub norm: f64,
    pub r_safe: f64,
    pub dr_sf: f64,
    pub replaced: bool,
    pub fallback: bool,

    pub alpha50: f64,
    pub q: f64,
    pub pmi: f64,
    pub dpmax: f64,
    pub ion_max: f64,
    pub ion_int: f64,
    pub misfire: bool,
    pub m_g: f64,
    pub m_e: f64,
    pub eta: f64,
    pub ethanol_share: f64,

    pub f_load: f64,
    pub f_stability: f64,
    pub f_gradient: f64,
    pub f_safety: f64,
    pub f_efficiency: f64,
    pub f_ethanol: f64,
    pub r_load: f64,
    pub r_stability: f64,
    pub r_gradient: f64,
    pub r_safety: f64,
    pub r_efficiency: f64,
    pub r_ethanol: f64,
    pub reward: f64,

    pub n_alpha50: f64,
    pub n_q: f64,
    pub n_pmi: f64,
    pub n_dpmax: f64,
    pub n_ion_max: f64,
    pub n_ion_int: f64,
    pub n_pmi_sp_prev: f64,
    pub n_pmi_sp: f64,
    pub done: bool,
}

/// Safety-monitor view of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorTrace {
    pub class: usize,
    pub mapped: ActionVector,
    pub norm: f64,
    pub r_safe: f64,
    pub dr_sf: f64,
    pub replaced: bool,
    pub fallback: bool,
}

/// Reward and derived metrics of a cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleScore {
    pub eta: f64,
    pub ethanol_share: f64,
    pub breakdown: RewardBreakdown,
}

/// Scores one cycle against the setpoint it was run at. Misfires count
/// with zero efficiency; cycles without fuel have zero ethanol share.
pub fn score_cycle(
    state: &CycleState,
    out: &CycleOutputs,
    dr_sf: f64,
    dpmax_limit: f64,
    params: &RewardParams,
    constants: &EngineConstants,
) -> CycleScore {
    let eta = if out.misfire {
        0.0
    } else {
        efficiency(out.pmi, out.m_g, out.m_e, constants).unwrap_or(0.0)
    };
    let ethanol_share = ethanol_energy_share(out.m_g, out.m_e, constants).unwrap_or(0.0);
    let inputs = RewardInputs {
        pmi: out.pmi,
        pmi_sp: state.pmi_sp,
        alpha50: out.alpha50,
        alpha50_prev: state.alpha50_prev,
        dpmax: out.dpmax,
        dpmax_limit,
        dr_sf,
        eta,
        ethanol_share,
    };
    CycleScore {
        eta,
        ethanol_share,
        breakdown: total_reward(&inputs, params),
    }
}

/// State observed after a cycle, with the setpoint of the next one.
pub fn next_state(out: &CycleOutputs, pmi_sp: f64, next_pmi_sp: f64) -> CycleState {
    CycleState {
        alpha50_prev: out.alpha50,
        q_prev: out.q,
        pmi_prev: out.pmi,
        dpmax_prev: out.dpmax,
        ion_max_prev: out.ion_max,
        ion_int_prev: out.ion_int,
        pmi_sp_prev: pmi_sp,
        pmi_sp: next_pmi_sp,
    }
}

/// Position of a cycle within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleIndex {
    pub mode: String,
    pub episode: u64,
    pub step: u64,
    pub cycle: u64,
    pub validation: bool,
}

impl CycleRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        index: CycleIndex,
        state: &CycleState,
        raw: &RawAction,
        action: &ActionVector,
        monitor: &MonitorTrace,
        out: &CycleOutputs,
        score: &CycleScore,
        next: &CycleState,
        done: bool,
    ) -> Self {
        let b = &score.breakdown;
        CycleRecord {
            mode: index.mode,
            episode: index.episode,
            step: index.step,
            cycle: index.cycle,
            validation: index.validation,
            s_alpha50: state.alpha50_prev,
            s_q: state.q_prev,
            s_pmi: state.pmi_prev,
            s_dpmax: state.dpmax_prev,
            s_ion_max: state.ion_max_prev,
            s_ion_int: state.ion_int_prev,
            s_pmi_sp_prev: state.pmi_sp_prev,
            s_pmi_sp: state.pmi_sp,
            raw_nvo: raw.0[0],
            raw_tg: raw.0[1],
            raw_te: raw.0[2],
            mapped_nvo: monitor.mapped.alpha_nvo,
            mapped_tg: monitor.mapped.t_inj_g,
            mapped_te: monitor.mapped.t_inj_e,
            u_nvo: action.alpha_nvo,
            u_tg: action.t_inj_g,
            u_te: action.t_inj_e,
            class: monitor.class,
            norm: monitor.norm,
            r_safe: monitor.r_safe,
            dr_sf: monitor.dr_sf,
            replaced: monitor.replaced,
            fallback: monitor.fallback,
            alpha50: out.alpha50,
            q: out.q,
            pmi: out.pmi,
            dpmax: out.dpmax,
            ion_max: out.ion_max,
            ion_int: out.ion_int,
            misfire: out.misfire,
            m_g: out.m_g,
            m_e: out.m_e,
            eta: score.eta,
            ethanol_share: score.ethanol_share,
            f_load: b.metrics[0],
            f_stability: b.metrics[1],
            f_gradient: b.metrics[2],
            f_safety: b.metrics[3],
            f_efficiency: b.metrics[4],
            f_ethanol: b.metrics[5],
            r_load: b.components[0],
            r_stability: b.components[1],
            r_gradient: b.components[2],
            r_safety: b.components[3],
            r_efficiency: b.components[4],
            r_ethanol: b.components[5],
            reward: b.total,
            n_alpha50: next.alpha50_prev,
            n_q: next.q_prev,
            n_pmi: next.pmi_prev,
            n_dpmax: next.dpmax_prev,
            n_ion_max: next.ion_max_prev,
            n_ion_int: next.ion_int_prev,
            n_pmi_sp_prev: next.pmi_sp_prev,
            n_pmi_sp: next.pmi_sp,
            done,
        }
    }

    pub fn state(&self) -> CycleState {
        CycleState {
            alpha50_prev: self.s_alpha50,
            q_prev: self.s_q,
            pmi_prev: self.s_pmi,
            dpmax_prev: self.s_dpmax,
            ion_max_prev: self.s_ion_max,
            ion_int_prev: self.s_ion_int,
            pmi_sp_prev: self.s_pmi_sp_prev,
            pmi_sp: self.s_pmi_sp,
        }
    }

    pub fn next_state(&self) -> CycleState {
        CycleState {
            alpha50_prev: self.n_alpha50,
            q_prev: self.n_q,
            pmi_prev: self.n_pmi,
            dpmax_prev: self.n_dpmax,
            ion_max_prev: self.n_ion_max,
            ion_int_prev: self.n_ion_int,
            pmi_sp_prev: self.n_pmi_sp_prev,
            pmi_sp: self.n_pmi_sp,
        }
    }

    pub fn raw(&self) -> RawAction {
        RawAction([self.raw_nvo, self.raw_tg, self.raw_te])
    }

    pub fn action(&self) -> ActionVector {
        ActionVector::new(self.u_nvo, self.u_tg, self.u_te)
    }

    pub fn components(&self) -> [f64; 6] {
        [
            self.r_load,
            self.r_stability,
            self.r_gradient,
            self.r_safety,
            self.r_efficiency,
            self.r_ethanol,
        ]
    }

    pub fn experience(&self) -> Experience {
        Experience {
            s_prev: self.state(),
            u: self.raw(),
            s_next: self.next_state(),
            reward: self.reward,
            done: self.done,
        }
    }
}

/// Streaming CSV writer for cycle records.
pub struct CycleLogWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl CycleLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let inner = csv::Writer::from_path(path).map_err(|e| LabError::csv(path, e))?;
        Ok(CycleLogWriter {
            inner,
            path: path.to_path_buf(),
        })
    }

    /// Appends to an existing log, or creates it with a header.
    pub fn append(path: &Path) -> Result<Self> {
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LabError::io(path, e))?;
        let inner = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
        Ok(CycleLogWriter {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, rec: &CycleRecord) -> Result<()> {
        self.inner.serialize(rec).map_err(|e| LabError::csv(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

pub fn write_cycle_log(path: &Path, records: &[CycleRecord]) -> Result<()> {
    let mut w = CycleLogWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.flush()
}

pub fn read_cycle_log(path: &Path) -> Result<Vec<CycleRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| LabError::csv(path, e)))
        .collect()
}
