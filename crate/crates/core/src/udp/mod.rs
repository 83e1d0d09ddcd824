//! Split execution of environment and agent over UDP.

mod link;
mod wire;

pub use link::{send_raw, AgentCounters, AgentServer, EnvCounters, EnvLink, Reply, StallFn};
pub use wire::{
    ActionDatagram, StateDatagram, StateKind, ACTION_DATAGRAM_LEN, MAGIC, STATE_DATAGRAM_LEN, WIRE_VERSION,
};
