use serde::{Deserialize, Serialize};

use crate::action::{norm, ACTION_DIM};
use crate::error::{LabError, Result};

/// Unit exploration directions in the normalized action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; ACTION_DIM]>", into = "Vec<[f64; ACTION_DIM]>")]
pub struct DirectionSet {
    dirs: Vec<[f64; ACTION_DIM]>,
}

impl DirectionSet {
    /// Builds a set from arbitrary nonzero vectors, normalizing each one.
    /// Vectors that are already unit length within 1e-12 are kept as given,
    /// so a serialized set reads back bit for bit.
    pub fn new(vectors: Vec<[f64; ACTION_DIM]>) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(LabError::Config("need at least two directions".into()));
        }
        let mut dirs = Vec::with_capacity(vectors.len());
        for v in vectors {
            let n = norm(&v);
            if !(n > 0.0) || !n.is_finite() {
                return Err(LabError::Config(format!("direction {v:?} has no length")));
            }
            let u = if (n - 1.0).abs() <= 1e-12 { v } else { v.map(|x| x / n) };
            if dirs
                .iter()
                .any(|d: &[f64; ACTION_DIM]| d.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-12))
            {
                return Err(LabError::Config(format!("duplicate direction {u:?}")));
            }
            dirs.push(u);
        }
        Ok(DirectionSet { dirs })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn get(&self, l: usize) -> &[f64; ACTION_DIM] {
        &self.dirs[l]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; ACTION_DIM]> {
        self.dirs.iter()
    }
}

impl Default for DirectionSet {
    fn default() -> Self {
        default_direction_set()
    }
}

/// All 26 nonzero sign vectors of {-1, 0, 1}^3, normalized.
pub fn default_direction_set() -> DirectionSet {
    let mut v = Vec::with_capacity(26);
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if x != 0 || y != 0 || z != 0 {
                    v.push([x as f64, y as f64, z as f64]);
                }
            }
        }
    }
    DirectionSet::new(v).expect("sign vectors are distinct and nonzero")
}

impl TryFrom<Vec<[f64; ACTION_DIM]>> for DirectionSet {
    type Error = LabError;

    fn try_from(v: Vec<[f64; ACTION_DIM]>) -> Result<Self> {
        DirectionSet::new(v)
    }
}

impl From<DirectionSet> for Vec<[f64; ACTION_DIM]> {
    fn from(d: DirectionSet) -> Self {
        d.dirs
    }
}
