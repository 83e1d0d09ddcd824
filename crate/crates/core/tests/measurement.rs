mod common;

use common::{measure_boundary, BoundaryEnv};
use engine_lab_core::measurement::{measurement_step, next_probe_action, MeasurementConfig};
use engine_lab_core::safety::LimitationMatrices;
use engine_lab_core::{ActionBounds, ClassifierConfig, DirectionSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn visited_cells(mats: &LimitationMatrices) -> Vec<(usize, usize, f64, u64)> {
    mats.cells()
        .filter(|(_, _, c)| c.z_lim > 0)
        .map(|(k, l, c)| (k, l, c.r_lim, c.z_lim))
        .collect()
}

#[test]
fn zero_budget_leaves_initial_matrices() {
    let mut env = BoundaryEnv::new(0.5, 0.0, 1);
    let out = measure_boundary(&mut env, DirectionSet::default(), 0, true, 2);
    assert_eq!(out.cycles_run, 0);
    assert!(out.log.is_empty());
    assert!(out.mats.cells().all(|(_, _, c)| c.r_lim == 0.0 && c.z_lim == 0 && c.r == 0.0 && c.orientation == 1));
}

#[test]
fn log_has_one_record_per_cycle_and_probes_follow_radii() {
    let mut env = BoundaryEnv::new(0.5, 0.0, 1);
    let out = measure_boundary(&mut env, DirectionSet::default(), 300, true, 3);
    assert_eq!(out.log.len(), 300);
    assert_eq!(out.clipped_probes, 0);
    assert!(out.log.iter().all(|r| r.mode == "measure" && !r.replaced));
    assert!(out.log.last().unwrap().done);
    // env.probes[0] is the warm-up cycle at the start point
    assert_eq!(env.probes[0], 0.0);
    for (rec, probe) in out.log.iter().zip(&env.probes[1..]) {
        assert!((rec.norm - probe).abs() < 1e-12);
    }
}

#[test]
fn probe_example_along_nvo_axis() {
    let b = ActionBounds::default();
    let dirs = DirectionSet::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
    let mut mats = LimitationMatrices::new(ClassifierConfig::default(), dirs);
    let mut c = mats.cell(4, 0);
    mats.set_cell(4, 0, c);
    let (u, clipped) = next_probe_action(&mats, 4, 0, 3.0, &b).unwrap();
    assert_eq!(u, b.start_point(3.0));
    assert!(!clipped);
    c.r = 0.75;
    mats.set_cell(4, 0, c);
    let start = b.start_point(3.0);
    let (u, _) = next_probe_action(&mats, 4, 0, 3.0, &b).unwrap();
    assert!((u.alpha_nvo - (start.alpha_nvo + 0.75 * (b.max[0] - start.alpha_nvo))).abs() < 1e-12);
}

#[test]
fn running_average_identity_on_random_observations() {
    let cfg = MeasurementConfig::default();
    let dirs = DirectionSet::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
    let mut mats = LimitationMatrices::new(ClassifierConfig::default(), dirs);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut accepted: Vec<Vec<f64>> = vec![Vec::new(); 2];
    for _ in 0..20_000 {
        let l = rng.random_range(0..2);
        let before = mats.cell(3, l);
        let safe = rng.random_bool(0.7);
        let expect_accept = if safe { before.r > before.r_lim } else { before.r < before.r_lim };
        measurement_step(&mut mats, 3, l, safe, &cfg);
        let after = mats.cell(3, l);
        assert_eq!(after.z_lim, before.z_lim + u64::from(expect_accept));
        if expect_accept {
            accepted[l].push(before.r);
        } else {
            assert_eq!(after.r_lim, before.r_lim);
        }
        assert!((0.0..=cfg.r_max).contains(&after.r));
    }
    for l in 0..2 {
        let mean = accepted[l].iter().sum::<f64>() / accepted[l].len() as f64;
        assert!((mats.r_lim(3, l) - mean).abs() < 1e-9, "{} vs {mean}", mats.r_lim(3, l));
        assert_eq!(mats.z_lim(3, l), accepted[l].len() as u64);
    }
}

#[test]
fn deterministic_boundary_bounds_the_estimate_from_below() {
    let mut env = BoundaryEnv::new(0.5, 0.0, 1);
    let out = measure_boundary(&mut env, DirectionSet::default(), 5000, false, 7);
    let cells = visited_cells(&out.mats);
    assert!(!cells.is_empty());
    // safe observations never exceed the boundary, so the average cannot either
    for &(_, _, r_lim, _) in &cells {
        assert!(r_lim <= 0.5 + 1e-9);
        assert!(r_lim > 0.2);
    }
}

#[test]
fn deterministic_boundary_estimate_approaches_boundary_with_budget() {
    let dirs = DirectionSet::new(vec![[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]).unwrap();
    let gap = |cycles| {
        let mut env = BoundaryEnv::new(0.5, 0.0, 1);
        let out = measure_boundary(&mut env, dirs.clone(), cycles, false, 8);
        let cells = visited_cells(&out.mats);
        assert_eq!(cells.len(), 2);
        cells.iter().map(|c| 0.5 - c.2).fold(0.0, f64::max)
    };
    let g1 = gap(5_000);
    let g2 = gap(80_000);
    assert!(g1 > 0.0 && g2 > 0.0);
    assert!(g2 < 0.5 * g1, "{g2} vs {g1}");
}

#[test]
fn stochastic_band_holds_the_estimate() {
    let mut env = BoundaryEnv::new(0.5, 0.1, 11);
    let out = measure_boundary(&mut env, DirectionSet::default(), 600_000, false, 12);
    let cells: Vec<_> = visited_cells(&out.mats).into_iter().filter(|c| c.3 >= 20).collect();
    assert_eq!(cells.len(), 26);
    for (k, l, r_lim, z) in cells {
        assert!((0.45..=0.55).contains(&r_lim), "cell ({k}, {l}): r_lim {r_lim}, z {z}");
    }
}

#[test]
fn violation_free_environment_drives_estimate_to_range_limit() {
    let dirs = DirectionSet::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]).unwrap();
    let mut env = BoundaryEnv::new(2.0, 0.0, 1);
    let cfg = MeasurementConfig::default();
    let out = measure_boundary(&mut env, dirs, 2_000_000, false, 13);
    let cells = visited_cells(&out.mats);
    assert_eq!(cells.len(), 2);
    for (k, l, r_lim, z) in cells {
        assert!(r_lim >= cfg.r_max - cfg.dr_expl, "cell ({k}, {l}): r_lim {r_lim}, z {z}");
    }
}

proptest! {
    #[test]
    fn radius_stays_in_range_and_counters_never_drop(obs in prop::collection::vec((0usize..3, any::<bool>()), 1..400)) {
        let cfg = MeasurementConfig::default();
        let dirs = DirectionSet::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let mut mats = LimitationMatrices::new(ClassifierConfig::default(), dirs);
        let misfire = mats.classifier().misfire_class();
        for (l, safe) in obs {
            for k in [2, misfire] {
                let before = mats.cell(k, l);
                measurement_step(&mut mats, k, l, safe, &cfg);
                let after = mats.cell(k, l);
                let r_max = cfg.class_r_max(&mats, k);
                prop_assert!((0.0..=r_max).contains(&after.r));
                prop_assert!(after.z_lim >= before.z_lim);
                prop_assert!(after.z_lim > before.z_lim || after.r_lim == before.r_lim);
                prop_assert!(after.orientation == 1 || after.orientation == -1);
                let hit = after.r == 0.0 || after.r == r_max;
                if hit && after.r == 0.0 {
                    prop_assert_eq!(after.orientation, 1);
                }
                if hit && after.r == r_max {
                    prop_assert_eq!(after.orientation, -1);
                }
            }
        }
    }
}
