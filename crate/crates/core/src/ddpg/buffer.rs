use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::RawAction;
use crate::error::{LabError, Result};
use crate::state::{CycleState, STATE_DIM};

/// One transition `(s, u, s', R, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub s_prev: CycleState,
    pub u: RawAction,
    pub s_next: CycleState,
    pub reward: f64,
    pub done: bool,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"ELRB";
const SNAPSHOT_VERSION: u32 = 1;

/// Bounded FIFO store of experiences with its own sampling stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    #[serde(skip)]
    items: VecDeque<Experience>,
    rng: ChaCha8Rng,
}

/// Draws `n` distinct positions in `0..len`, or with replacement when the
/// pool is smaller than the batch.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, len: usize, n: usize) -> Vec<usize> {
    if len == 0 || n == 0 {
        return Vec::new();
    }
    if n > len {
        warn!("batch of {n} exceeds {len} available experiences; sampling with replacement");
        return (0..n).map(|_| rng.random_range(0..len)).collect();
    }
    index::sample(rng, len, n).into_vec()
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(LabError::Config("replay buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Uniform batch from the whole buffer.
    pub fn sample(&mut self, n: usize) -> Vec<Experience> {
        let idx = sample_indices(&mut self.rng, self.items.len(), n);
        idx.into_iter().map(|i| self.items[i]).collect()
    }

    /// Uniform batch from `pool`, drawn from this buffer's sampling stream.
    pub fn sample_from(&mut self, pool: &[Experience], n: usize) -> Vec<Experience> {
        let idx = sample_indices(&mut self.rng, pool.len(), n);
        idx.into_iter().map(|i| pool[i]).collect()
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Writes the contents as a versioned little-endian snapshot.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.items.len() * (8 * (2 * STATE_DIM + 4) + 1));
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.capacity as u64).to_le_bytes());
        buf.extend_from_slice(&(self.items.len() as u64).to_le_bytes());
        for e in &self.items {
            for v in e.s_prev.to_array().iter().chain(&e.u.0).chain(&e.s_next.to_array()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&e.reward.to_le_bytes());
            buf.push(u8::from(e.done));
        }
        let mut f = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
        f.write_all(&buf).map_err(|e| LabError::io(path, e))
    }

    /// Replaces the contents with a snapshot, keeping the sampling stream.
    pub fn read_snapshot(&mut self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| LabError::io(path, e))?;
        let bad = |why: &str| LabError::Checkpoint(format!("{}: {why}", path.display()));
        if bytes.len() < 24 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(bad("not a replay buffer snapshot"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(bad("unsupported snapshot version"));
        }
        let capacity = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        if capacity != self.capacity || len > capacity {
            return Err(bad("capacity mismatch"));
        }
        let rec = 8 * (2 * STATE_DIM + 4) + 1;
        if bytes.len() != 24 + len * rec {
            return Err(bad("truncated snapshot"));
        }
        let mut items = VecDeque::with_capacity(len);
        for chunk in bytes[24..].chunks_exact(rec) {
            let f = |i: usize| f64::from_le_bytes(chunk[8 * i..8 * i + 8].try_into().unwrap());
            let s_prev = CycleState::from_array(std::array::from_fn(|i| f(i)));
            let u = RawAction(std::array::from_fn(|i| f(STATE_DIM + i)));
            let s_next = CycleState::from_array(std::array::from_fn(|i| f(STATE_DIM + 3 + i)));
            let reward = f(2 * STATE_DIM + 3);
            let done = match chunk[rec - 1] {
                0 => false,
                1 => true,
                _ => return Err(bad("invalid done flag")),
            };
            items.push_back(Experience {
                s_prev,
                u,
                s_next,
                reward,
                done,
            });
        }
        self.items = items;
        Ok(())
    }
}
