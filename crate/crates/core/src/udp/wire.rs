//! Fixed-size little-endian datagrams with a trailing CRC32.
//!
//! State datagram (50 bytes):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 2    | magic `EL`                             |
//! | 2      | 1    | kind: `S` train, `V` validation, `X` end |
//! | 3      | 1    | version                                |
//! | 4      | 4    | cycle index, u32                       |
//! | 8      | 32   | 8 state values, f32                    |
//! | 40     | 4    | reward of the previous action, f32      |
//! | 44     | 1    | done flag                              |
//! | 45     | 1    | reserved, zero                         |
//! | 46     | 4    | CRC32 of bytes 0..46                   |
//!
//! Action datagram (24 bytes): magic, kind `A`, version, cycle index,
//! 3 raw action values as f32, CRC32 of bytes 0..20.

use crate::action::RawAction;
use crate::error::{LabError, Result};
use crate::state::{CycleState, STATE_DIM};

pub const MAGIC: [u8; 2] = *b"EL";
pub const WIRE_VERSION: u8 = 1;
pub const STATE_DATAGRAM_LEN: usize = 50;
pub const ACTION_DATAGRAM_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Train,
    Validation,
    /// End of run; the agent replies once and stops serving.
    Shutdown,
}

impl StateKind {
    fn byte(self) -> u8 {
        match self {
            StateKind::Train => b'S',
            StateKind::Validation => b'V',
            StateKind::Shutdown => b'X',
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'S' => Some(StateKind::Train),
            b'V' => Some(StateKind::Validation),
            b'X' => Some(StateKind::Shutdown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDatagram {
    pub kind: StateKind,
    pub cycle: u32,
    pub state: [f32; STATE_DIM],
    pub reward: f32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDatagram {
    pub cycle: u32,
    pub action: [f32; 3],
}

impl StateDatagram {
    pub fn new(kind: StateKind, cycle: u32, state: &CycleState, reward: f64, done: bool) -> Self {
        StateDatagram {
            kind,
            cycle,
            state: state.to_array().map(|v| v as f32),
            reward: reward as f32,
            done,
        }
    }

    pub fn cycle_state(&self) -> CycleState {
        CycleState::from_array(self.state.map(f64::from))
    }

    pub fn encode(&self) -> [u8; STATE_DATAGRAM_LEN] {
        let mut b = [0u8; STATE_DATAGRAM_LEN];
        b[..2].copy_from_slice(&MAGIC);
        b[2] = self.kind.byte();
        b[3] = WIRE_VERSION;
        b[4..8].copy_from_slice(&self.cycle.to_le_bytes());
        for (i, v) in self.state.iter().enumerate() {
            b[8 + 4 * i..12 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        b[40..44].copy_from_slice(&self.reward.to_le_bytes());
        b[44] = u8::from(self.done);
        let crc = crc32fast::hash(&b[..46]);
        b[46..50].copy_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        check_frame(b, STATE_DATAGRAM_LEN)?;
        let kind = StateKind::from_byte(b[2]).ok_or(LabError::Wire("unknown state datagram kind"))?;
        if b[44] > 1 {
            return Err(LabError::Wire("invalid done flag"));
        }
        Ok(StateDatagram {
            kind,
            cycle: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            state: std::array::from_fn(|i| f32::from_le_bytes(b[8 + 4 * i..12 + 4 * i].try_into().unwrap())),
            reward: f32::from_le_bytes(b[40..44].try_into().unwrap()),
            done: b[44] == 1,
        })
    }
}

impl ActionDatagram {
    pub fn new(cycle: u32, action: &RawAction) -> Self {
        ActionDatagram {
            cycle,
            action: action.0.map(|v| v as f32),
        }
    }

    pub fn raw_action(&self) -> RawAction {
        RawAction(self.action.map(f64::from))
    }

    pub fn encode(&self) -> [u8; ACTION_DATAGRAM_LEN] {
        let mut b = [0u8; ACTION_DATAGRAM_LEN];
        b[..2].copy_from_slice(&MAGIC);
        b[2] = b'A';
        b[3] = WIRE_VERSION;
        b[4..8].copy_from_slice(&self.cycle.to_le_bytes());
        for (i, v) in self.action.iter().enumerate() {
            b[8 + 4 * i..12 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&b[..20]);
        b[20..24].copy_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        check_frame(b, ACTION_DATAGRAM_LEN)?;
        if b[2] != b'A' {
            return Err(LabError::Wire("not an action datagram"));
        }
        Ok(ActionDatagram {
            cycle: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            action: std::array::from_fn(|i| f32::from_le_bytes(b[8 + 4 * i..12 + 4 * i].try_into().unwrap())),
        })
    }
}

fn check_frame(b: &[u8], len: usize) -> Result<()> {
    if b.len() != len {
        return Err(LabError::Wire("wrong datagram length"));
    }
    if b[..2] != MAGIC {
        return Err(LabError::Wire("bad magic"));
    }
    let crc = u32::from_le_bytes(b[len - 4..].try_into().unwrap());
    if crc32fast::hash(&b[..len - 4]) != crc {
        return Err(LabError::Wire("CRC mismatch"));
    }
    if b[3] != WIRE_VERSION {
        return Err(LabError::Wire("version mismatch"));
    }
    Ok(())
}
