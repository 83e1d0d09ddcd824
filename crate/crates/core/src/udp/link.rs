use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::wire::{ActionDatagram, StateDatagram, StateKind, ACTION_DATAGRAM_LEN, STATE_DATAGRAM_LEN};
use crate::action::RawAction;
use crate::error::{LabError, Result};
use crate::session::{AgentSession, Phase};
use crate::state::CycleState;

/// Outcome of one environment-side exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reply {
    Action(RawAction),
    /// No valid reply before the deadline; the caller applies its fallback.
    Fallback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnvCounters {
    pub sent: u64,
    pub delivered: u64,
    pub fallbacks: u64,
    /// Replies echoing an older cycle index.
    pub stale: u64,
    /// Replies with a newer or otherwise unexpected index.
    pub mismatched: u64,
    pub malformed: u64,
}

/// Environment endpoint: one outstanding request at a time.
#[derive(Debug)]
pub struct EnvLink {
    socket: UdpSocket,
    peer: SocketAddr,
    pub deadline: Duration,
    pub counters: EnvCounters,
}

fn transport(e: std::io::Error) -> LabError {
    LabError::Transport(e)
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

/// Final stretch before a deadline that is polled without sleeping, so that
/// timer wake-up latency does not delay the fallback.
const SPIN_WINDOW: Duration = Duration::from_micros(300);

/// Waits until a datagram can be read, with nanosecond timeout resolution.
#[cfg(target_os = "linux")]
fn wait_readable(socket: &UdpSocket, timeout: Duration) -> std::io::Result<bool> {
    use std::os::fd::AsRawFd;
    let mut fd = libc::pollfd {
        fd: socket.as_raw_fd(),
        events: libc::POLLIN,
        revents: 0,
    };
    let ts = libc::timespec {
        tv_sec: timeout.as_secs() as libc::time_t,
        tv_nsec: timeout.subsec_nanos() as libc::c_long,
    };
    // SAFETY: `fd` and `ts` outlive the call and the signal mask is null.
    let rc = unsafe { libc::ppoll(&mut fd, 1, &ts, std::ptr::null()) };
    if rc < 0 {
        let e = std::io::Error::last_os_error();
        return if e.kind() == ErrorKind::Interrupted { Ok(false) } else { Err(e) };
    }
    Ok(rc > 0)
}

#[cfg(not(target_os = "linux"))]
fn wait_readable(socket: &UdpSocket, timeout: Duration) -> std::io::Result<bool> {
    socket.set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
    Ok(true)
}

impl EnvLink {
    pub fn bind(listen: SocketAddr, peer: SocketAddr, deadline: Duration) -> Result<Self> {
        let socket = UdpSocket::bind(listen).map_err(transport)?;
        Ok(EnvLink {
            socket,
            peer,
            deadline,
            counters: EnvCounters::default(),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.socket.local_addr().map_err(transport)
    }

    /// Sends the state and waits for the action echoing `cycle`, within the
    /// link deadline.
    pub fn exchange(&mut self, kind: StateKind, cycle: u32, state: &CycleState, reward: f64, done: bool) -> Result<Reply> {
        let deadline = self.deadline;
        self.exchange_within(kind, cycle, state, reward, done, deadline)
    }

    /// As [`exchange`](Self::exchange) with an explicit deadline, counted
    /// from the send.
    pub fn exchange_within(
        &mut self,
        kind: StateKind,
        cycle: u32,
        state: &CycleState,
        reward: f64,
        done: bool,
        deadline: Duration,
    ) -> Result<Reply> {
        let dg = StateDatagram::new(kind, cycle, state, reward, done).encode();
        let start = Instant::now();
        self.socket.send_to(&dg, self.peer).map_err(transport)?;
        self.counters.sent += 1;
        let mut buf = [0u8; 64];
        loop {
            let elapsed = start.elapsed();
            if elapsed >= deadline {
                break;
            }
            let wait = (deadline - elapsed).saturating_sub(SPIN_WINDOW);
            if !wait_readable(&self.socket, wait).map_err(transport)? {
                continue;
            }
            let n = match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => n,
                Err(e) if is_timeout(&e) => break,
                Err(e) => return Err(transport(e)),
            };
            match ActionDatagram::decode(&buf[..n]) {
                Ok(a) if a.cycle == cycle => {
                    self.counters.delivered += 1;
                    return Ok(Reply::Action(a.raw_action()));
                }
                Ok(a) if a.cycle < cycle => self.counters.stale += 1,
                Ok(a) => {
                    debug!("reply for cycle {} while waiting for {cycle}", a.cycle);
                    self.counters.mismatched += 1;
                }
                Err(e) => {
                    debug!("dropping reply: {e}");
                    self.counters.malformed += 1;
                }
            }
        }
        self.counters.fallbacks += 1;
        warn!("cycle {cycle}: no valid reply within {deadline:?}, using fallback");
        Ok(Reply::Fallback)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentCounters {
    pub received: u64,
    pub replied: u64,
    pub duplicates: u64,
    pub malformed: u64,
    pub version_mismatch: u64,
}

/// Artificial reply delay per cycle index, for testing deadline handling.
pub type StallFn = Box<dyn FnMut(u32) -> Option<Duration> + Send>;

/// Agent endpoint: answers each state datagram with the session's action.
pub struct AgentServer {
    socket: UdpSocket,
    pub session: AgentSession,
    pub counters: AgentCounters,
    last: Option<(u32, [u8; ACTION_DATAGRAM_LEN])>,
    stall: Option<StallFn>,
}

impl AgentServer {
    pub fn bind(listen: SocketAddr, session: AgentSession) -> Result<Self> {
        let socket = UdpSocket::bind(listen).map_err(transport)?;
        Ok(AgentServer {
            socket,
            session,
            counters: AgentCounters::default(),
            last: None,
            stall: None,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.socket.local_addr().map_err(transport)
    }

    pub fn with_stall(mut self, stall: StallFn) -> Self {
        self.stall = Some(stall);
        self
    }

    /// Serves until a shutdown datagram arrives, or until `idle` passes
    /// without traffic when given.
    pub fn serve(&mut self, idle: Option<Duration>) -> Result<()> {
        self.socket.set_read_timeout(idle).map_err(transport)?;
        let mut buf = [0u8; 128];
        loop {
            let (n, from) = match self.socket.recv_from(&mut buf) {
                Ok(r) => r,
                Err(e) if is_timeout(&e) => {
                    info!("agent idle, stopping");
                    return Ok(());
                }
                Err(e) => return Err(transport(e)),
            };
            self.counters.received += 1;
            let dg = match StateDatagram::decode(&buf[..n]) {
                Ok(d) => d,
                Err(LabError::Wire("version mismatch")) => {
                    self.counters.version_mismatch += 1;
                    continue;
                }
                Err(e) => {
                    debug!("dropping request: {e}");
                    self.counters.malformed += 1;
                    continue;
                }
            };
            let reply = match self.last {
                Some((c, bytes)) if c == dg.cycle => {
                    self.counters.duplicates += 1;
                    bytes
                }
                _ => {
                    let phase = match dg.kind {
                        StateKind::Train => Phase::Train,
                        StateKind::Validation => Phase::Validation,
                        StateKind::Shutdown => {
                            let bytes = ActionDatagram::new(dg.cycle, &RawAction([0.0; 3])).encode();
                            self.socket.send_to(&bytes, from).map_err(transport)?;
                            return Ok(());
                        }
                    };
                    let u = self
                        .session
                        .step(phase, &dg.cycle_state(), f64::from(dg.reward), dg.done)?;
                    let bytes = ActionDatagram::new(dg.cycle, &u).encode();
                    self.last = Some((dg.cycle, bytes));
                    bytes
                }
            };
            if let Some(delay) = self.stall.as_mut().and_then(|f| f(dg.cycle)) {
                std::thread::sleep(delay);
            }
            self.socket.send_to(&reply, from).map_err(transport)?;
            self.counters.replied += 1;
        }
    }
}

/// Raw send helper for tests and tools that need to inject datagrams.
pub fn send_raw(socket: &UdpSocket, bytes: &[u8], to: SocketAddr) -> Result<()> {
    debug_assert!(bytes.len() <= STATE_DATAGRAM_LEN.max(ACTION_DATAGRAM_LEN));
    socket.send_to(bytes, to).map_err(transport).map(|_| ())
}
