//! Maps the previous cycle onto a state class used to index the limitation
//! matrices.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::state::CycleState;

/// α50 bins (left-open, right-closed) plus underflow, overflow and misfire
/// classes.
///
/// Index layout: `0` underflow, `1..=n_bins` the bins in order,
/// `n_bins + 1` overflow, `n_bins + 2` misfire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Strictly increasing α50 bin edges, °CA.
    pub alpha50_edges: Vec<f64>,
    /// Previous cycles releasing less heat than this (J) are misfires.
    pub misfire_q_threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            alpha50_edges: (0..10).map(|i| -6.0 + 3.0 * i as f64).collect(),
            misfire_q_threshold: 50.0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha50_edges.len() < 2 {
            return Err(LabError::Config("classifier needs at least two edges".into()));
        }
        if self.alpha50_edges.iter().any(|e| !e.is_finite()) {
            return Err(LabError::Config("classifier edges must be finite".into()));
        }
        if self.alpha50_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::Config(
                "classifier edges must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.alpha50_edges.len() - 1
    }

    pub fn underflow_class(&self) -> usize {
        0
    }

    pub fn overflow_class(&self) -> usize {
        self.n_bins() + 1
    }

    pub fn misfire_class(&self) -> usize {
        self.n_bins() + 2
    }

    /// Total number of classes K.
    pub fn n_classes(&self) -> usize {
        self.n_bins() + 3
    }

    pub fn classify_alpha50(&self, alpha50: f64) -> usize {
        let edges = &self.alpha50_edges;
        if alpha50.is_nan() {
            return self.misfire_class();
        }
        if alpha50 <= edges[0] {
            return self.underflow_class();
        }
        if alpha50 > edges[edges.len() - 1] {
            return self.overflow_class();
        }
        // first edge at or above alpha50 closes the bin
        edges.partition_point(|e| *e < alpha50)
    }
}

/// Class index of the previous cycle described by `state`.
pub fn classify_state(state: &CycleState, cfg: &ClassifierConfig) -> usize {
    if !(state.q_prev >= cfg.misfire_q_threshold) {
        return cfg.misfire_class();
    }
    cfg.classify_alpha50(state.alpha50_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(alpha50: f64, q: f64) -> CycleState {
        CycleState {
            alpha50_prev: alpha50,
            q_prev: q,
            pmi_prev: 3.0,
            dpmax_prev: 3.0,
            ion_max_prev: 1.0,
            ion_int_prev: 1.0,
            pmi_sp_prev: 3.0,
            pmi_sp: 3.0,
        }
    }

    #[test]
    fn default_layout_has_twelve_classes() {
        let cfg = ClassifierConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_bins(), 9);
        assert_eq!(cfg.n_classes(), 12);
    }

    #[test]
    fn six_degree_bin_example() {
        let cfg = ClassifierConfig {
            alpha50_edges: vec![-3.0, 3.0, 9.0, 15.0],
            misfire_q_threshold: 50.0,
        };
        let k = classify_state(&state(6.0, 400.0), &cfg);
        // second bin is (3, 9]
        assert_eq!(k, 2);
        assert_eq!(classify_state(&state(9.0, 400.0), &cfg), 2);
        assert_eq!(classify_state(&state(3.0, 400.0), &cfg), 1);
    }

    #[test]
    fn underflow_overflow_and_misfire() {
        let cfg = ClassifierConfig::default();
        assert_eq!(classify_state(&state(-20.0, 400.0), &cfg), cfg.underflow_class());
        assert_eq!(classify_state(&state(-6.0, 400.0), &cfg), cfg.underflow_class());
        assert_eq!(classify_state(&state(40.0, 400.0), &cfg), cfg.overflow_class());
        assert_eq!(classify_state(&state(8.0, 0.0), &cfg), cfg.misfire_class());
        assert_eq!(classify_state(&state(-20.0, 0.0), &cfg), cfg.misfire_class());
    }

    #[test]
    fn rejects_unsorted_edges() {
        let cfg = ClassifierConfig {
            alpha50_edges: vec![0.0, 3.0, 3.0],
            misfire_q_threshold: 50.0,
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn classification_is_total_and_deterministic(a in -100.0f64..100.0, q in -10.0f64..1000.0) {
            let cfg = ClassifierConfig::default();
            let s = state(a, q);
            let k = classify_state(&s, &cfg);
            prop_assert!(k < cfg.n_classes());
            prop_assert_eq!(k, classify_state(&s, &cfg));
            if (1..=cfg.n_bins()).contains(&k) {
                prop_assert!(a > cfg.alpha50_edges[k - 1] && a <= cfg.alpha50_edges[k]);
            }
        }
    }
}
