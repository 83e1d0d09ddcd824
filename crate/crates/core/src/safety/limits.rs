use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::ActionBounds;
use crate::classifier::ClassifierConfig;
use crate::directions::DirectionSet;
use crate::error::{LabError, Result};

pub const LIMITS_FORMAT_VERSION: u32 = 1;

/// Per-(class, direction) exploration state and learned safe radii.
///
/// All four matrices are `K × L`, stored row-major by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitationMatrices {
    classifier: ClassifierConfig,
    directions: DirectionSet,
    /// Current exploration radius R.
    r: Vec<f64>,
    /// Estimated safe radius R_Lim.
    r_lim: Vec<f64>,
    /// Confidence counters Z_Lim.
    z_lim: Vec<u64>,
    /// Exploration orientation O, ±1.
    orientation: Vec<i8>,
}

/// One (class, direction) entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub r: f64,
    pub r_lim: f64,
    pub z_lim: u64,
    pub orientation: i8,
}

impl LimitationMatrices {
    /// Initial matrices: r = 0, r_Lim = 0, z_Lim = 0, o = +1.
    pub fn new(classifier: ClassifierConfig, directions: DirectionSet) -> Self {
        let n = classifier.n_classes() * directions.len();
        LimitationMatrices {
            classifier,
            directions,
            r: vec![0.0; n],
            r_lim: vec![0.0; n],
            z_lim: vec![0; n],
            orientation: vec![1; n],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.n_classes()
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn classifier(&self) -> &ClassifierConfig {
        &self.classifier
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    fn idx(&self, k: usize, l: usize) -> usize {
        assert!(k < self.n_classes() && l < self.n_directions(), "cell ({k}, {l}) out of range");
        k * self.n_directions() + l
    }

    pub fn cell(&self, k: usize, l: usize) -> Cell {
        let i = self.idx(k, l);
        Cell {
            r: self.r[i],
            r_lim: self.r_lim[i],
            z_lim: self.z_lim[i],
            orientation: self.orientation[i],
        }
    }

    pub fn set_cell(&mut self, k: usize, l: usize, cell: Cell) {
        let i = self.idx(k, l);
        self.r[i] = cell.r;
        self.r_lim[i] = cell.r_lim;
        self.z_lim[i] = cell.z_lim;
        self.orientation[i] = cell.orientation;
    }

    pub fn r_lim(&self, k: usize, l: usize) -> f64 {
        self.r_lim[self.idx(k, l)]
    }

    pub fn z_lim(&self, k: usize, l: usize) -> u64 {
        self.z_lim[self.idx(k, l)]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Cell)> + '_ {
        let nl = self.n_directions();
        (0..self.r.len()).map(move |i| (i / nl, i % nl, self.cell(i / nl, i % nl)))
    }

    /// Fills every cell with the same safe radius and counter.
    pub fn fill_limits(&mut self, r_lim: f64, z_lim: u64) {
        self.r_lim.iter_mut().for_each(|v| *v = r_lim);
        self.z_lim.iter_mut().for_each(|v| *v = z_lim);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_classes() * self.n_directions();
        if [self.r.len(), self.r_lim.len(), self.z_lim.len(), self.orientation.len()]
            .iter()
            .any(|&len| len != n)
        {
            return Err(LabError::Config("limitation matrices have inconsistent sizes".into()));
        }
        if self
            .r
            .iter()
            .chain(&self.r_lim)
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(LabError::Config("radii must lie in [0, 1]".into()));
        }
        if self.orientation.iter().any(|o| *o != 1 && *o != -1) {
            return Err(LabError::Config("orientation entries must be ±1".into()));
        }
        Ok(())
    }

    /// Writes the matrices as CSV plus a JSON sidecar at `<path>.json`.
    pub fn write(&self, path: &Path, bounds: &ActionBounds, partial: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::csv(path, e))?;
        w.write_record([
            "class_index",
            "direction_index",
            "v_x",
            "v_y",
            "v_z",
            "r",
            "r_lim",
            "z_lim",
            "o",
        ])
        .map_err(|e| LabError::csv(path, e))?;
        for (k, l, c) in self.cells() {
            let v = self.directions.get(l);
            w.write_record([
                k.to_string(),
                l.to_string(),
                v[0].to_string(),
                v[1].to_string(),
                v[2].to_string(),
                c.r.to_string(),
                c.r_lim.to_string(),
                c.z_lim.to_string(),
                c.orientation.to_string(),
            ])
            .map_err(|e| LabError::csv(path, e))?;
        }
        w.flush().map_err(|e| LabError::io(path, e))?;
        let sidecar = Sidecar {
            version: LIMITS_FORMAT_VERSION,
            fingerprint: fingerprint(&self.classifier, &self.directions, bounds),
            classifier: self.classifier.clone(),
            directions: self.directions.clone(),
            bounds: bounds.clone(),
            partial,
        };
        let sp = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| LabError::json(&sp, e))?;
        fs::write(&sp, text).map_err(|e| LabError::io(&sp, e))
    }

    /// Reads matrices written by [`write`](Self::write), refusing files whose
    /// sidecar does not match the active classifier, directions and bounds.
    pub fn read(
        path: &Path,
        classifier: &ClassifierConfig,
        directions: &DirectionSet,
        bounds: &ActionBounds,
    ) -> Result<(Self, bool)> {
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|e| LabError::io(&sp, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| LabError::json(&sp, e))?;
        if sidecar.version != LIMITS_FORMAT_VERSION {
            return Err(LabError::SafetyPrecondition(format!(
                "limitation file version {} unsupported",
                sidecar.version
            )));
        }
        let expected = fingerprint(classifier, directions, bounds);
        if sidecar.fingerprint != expected
            || fingerprint(&sidecar.classifier, &sidecar.directions, &sidecar.bounds) != expected
        {
            return Err(LabError::SafetyPrecondition(
                "limitation matrices were measured under a different configuration".into(),
            ));
        }
        let mut mats = LimitationMatrices::new(classifier.clone(), directions.clone());
        let mut seen = vec![false; mats.r.len()];
        let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::csv(path, e))?;
        for rec in rdr.deserialize::<CsvRow>() {
            let row = rec.map_err(|e| LabError::csv(path, e))?;
            if row.class_index >= mats.n_classes() || row.direction_index >= mats.n_directions() {
                return Err(LabError::Config(format!(
                    "cell ({}, {}) out of range",
                    row.class_index, row.direction_index
                )));
            }
            let i = mats.idx(row.class_index, row.direction_index);
            seen[i] = true;
            mats.r[i] = row.r;
            mats.r_lim[i] = row.r_lim;
            mats.z_lim[i] = row.z_lim;
            mats.orientation[i] = row.o;
        }
        if seen.iter().any(|s| !s) {
            return Err(LabError::Config("limitation file is missing cells".into()));
        }
        mats.validate()?;
        Ok((mats, sidecar.partial))
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    class_index: usize,
    direction_index: usize,
    #[allow(dead_code)]
    v_x: f64,
    #[allow(dead_code)]
    v_y: f64,
    #[allow(dead_code)]
    v_z: f64,
    r: f64,
    r_lim: f64,
    z_lim: u64,
    o: i8,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    fingerprint: String,
    classifier: ClassifierConfig,
    directions: DirectionSet,
    bounds: ActionBounds,
    partial: bool,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// SHA-256 over the canonical JSON of everything the matrices are indexed by.
pub fn fingerprint(
    classifier: &ClassifierConfig,
    directions: &DirectionSet,
    bounds: &ActionBounds,
) -> String {
    let text = serde_json::to_string(&(classifier, directions, bounds))
        .expect("plain data serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
