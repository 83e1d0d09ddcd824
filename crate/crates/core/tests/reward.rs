use engine_lab_core::reward::{
    efficiency, ethanol_energy_share, reward_term, total_reward, EfficiencySign, RewardInputs, RewardParams,
    COMPONENTS,
};
use engine_lab_core::EngineConstants;
use proptest::prelude::*;

fn params() -> RewardParams {
    RewardParams::default()
}

fn perfect() -> RewardInputs {
    RewardInputs {
        pmi: 3.0,
        pmi_sp: 3.0,
        alpha50: 8.0,
        alpha50_prev: 8.0,
        dpmax: 5.0,
        dpmax_limit: 5.0,
        dr_sf: 0.0,
        eta: 0.3,
        ethanol_share: 0.5,
    }
}

#[test]
fn row_examples() {
    let p = params();
    assert_eq!(p.load.eval(0.0), 0.0);
    assert_eq!(p.gradient.eval(0.0), 0.0);
    assert!(((-2.0f64).tanh() * -0.25 - 0.241 - 6.9e-6).abs() < 1e-7);
    assert!((p.load.eval(0.25) - (0.75f64.tanh() * -1.5 - 0.025)).abs() < 1e-15);
    assert!((p.load.eval(0.25) - -0.9777).abs() < 5e-5);
    assert!((p.gradient.eval(1.0) - (18f64.tanh() * -0.25 - 1.0 - 0.241)).abs() < 1e-15);
    assert!((p.gradient.eval(1.0) - -1.4910).abs() < 5e-5);
    assert!((p.ethanol.eval(0.0625) - (6.25f64.tanh() * -0.75 - 0.625)).abs() < 1e-15);
    assert!((p.ethanol.eval(0.0625) - -1.3750).abs() < 5e-5);
    assert_eq!(p.safety.eval(0.0), 0.0);
}

#[test]
fn efficiency_examples() {
    let c = EngineConstants::default();
    let eta = efficiency(3.0, 11.287, 0.0, &c).unwrap();
    assert!((eta - 3e5 * 0.5e-3 / (11.287 * 44.3)).abs() < 1e-12);
    assert!((eta - 0.300).abs() < 5e-4);
    let half = efficiency(3.0, 2.0 * 11.287, 0.0, &c).unwrap();
    assert!((half - eta / 2.0).abs() < 1e-15);
    let mixed = efficiency(3.0, 4.0, 6.0, &c).unwrap();
    assert!((efficiency(3.0, 8.0, 12.0, &c).unwrap() - mixed / 2.0).abs() < 1e-15);
    assert!(efficiency(3.0, 0.0, 0.0, &c).is_err());
}

#[test]
fn ethanol_share_examples() {
    let c = EngineConstants::default();
    assert_eq!(ethanol_energy_share(0.0, 5.0, &c).unwrap(), 1.0);
    assert_eq!(ethanol_energy_share(26.8, 44.3, &c).unwrap(), 0.5);
    let x = ethanol_energy_share(10.0, 5.0, &c).unwrap();
    assert!((x - 134.0 / 577.0).abs() < 1e-15);
    assert!((x - 0.2322).abs() < 5e-5);
    assert!(ethanol_energy_share(0.0, 0.0, &c).is_err());
}

#[test]
fn perfect_cycle_scores_zero() {
    let mut p = params();
    p.efficiency.enabled = false;
    p.ethanol.enabled = false;
    let b = total_reward(&perfect(), &p);
    assert_eq!(b.total, 0.0);
    assert!(b.components.iter().all(|c| *c == 0.0));
}

#[test]
fn ethanol_component_in_adaptation() {
    let mut p = params();
    p.ethanol.enabled = true;
    let mut inputs = perfect();
    inputs.ethanol_share = 0.25;
    let b = total_reward(&inputs, &p);
    let i = COMPONENTS.iter().position(|c| *c == "ethanol").unwrap();
    assert_eq!(b.metrics[i], 0.0625);
    assert!((b.components[i] - -1.3750).abs() < 5e-5);
}

#[test]
fn efficiency_sign_modes() {
    let mut p = params();
    let i = COMPONENTS.iter().position(|c| *c == "efficiency").unwrap();
    let mut lo = perfect();
    lo.eta = 0.2;
    let mut hi = perfect();
    hi.eta = 0.35;
    p.efficiency_sign = EfficiencySign::Corrected;
    assert_eq!(total_reward(&hi, &p).metrics[i], -0.35);
    assert!(total_reward(&hi, &p).components[i] > total_reward(&lo, &p).components[i]);
    p.efficiency_sign = EfficiencySign::Verbatim;
    assert_eq!(total_reward(&hi, &p).metrics[i], 0.35);
    assert!(total_reward(&hi, &p).components[i] < total_reward(&lo, &p).components[i]);
}

#[test]
fn monotone_rows_on_non_negative_metric() {
    let p = params();
    for row in [&p.load, &p.stability, &p.ethanol] {
        let mut prev = row.eval(0.0);
        for i in 1..=10_000 {
            let v = row.eval(i as f64 * 1e-3);
            assert!(v <= prev);
            prev = v;
        }
    }
}

#[test]
fn gradient_and_safety_row_shapes() {
    let p = params();
    for i in 0..=1000 {
        let f = i as f64 * 0.01;
        assert_eq!(p.gradient.eval(-f), 0.0);
        if f >= 0.01 {
            assert!(p.gradient.eval(f) < 0.0, "gradient row at {f}");
            assert!(p.safety.eval(-f) < 0.0, "safety row at {}", -f);
        }
    }
}

fn arb_inputs() -> impl Strategy<Value = RewardInputs> {
    (
        (0.0..8.0f64, 2.0..4.0f64, -10.0..30.0f64, -10.0..30.0f64),
        (0.0..15.0f64, -1.5..0.0f64, 0.0..0.5f64, 0.0..1.0f64),
    )
        .prop_map(|((pmi, pmi_sp, alpha50, alpha50_prev), (dpmax, dr_sf, eta, ethanol_share))| RewardInputs {
            pmi,
            pmi_sp,
            alpha50,
            alpha50_prev,
            dpmax,
            dpmax_limit: 5.0,
            dr_sf,
            eta,
            ethanol_share,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn every_row_is_non_positive(f in -10.0..10.0f64) {
        let p = params();
        for row in p.rows() {
            prop_assert!(row.eval(f) <= 0.0);
        }
    }

    #[test]
    fn term_is_the_clamped_formula(f in -10.0..10.0f64, c in prop::array::uniform5(-20.0..20.0f64)) {
        let v = reward_term(f, &c);
        prop_assert!(v <= 0.0);
        let raw = (c[0] * f + c[1]).tanh() * c[2] + c[3] * f + c[4];
        prop_assert_eq!(v, raw.min(0.0));
    }

    #[test]
    fn total_is_sum_of_enabled_components(inputs in arb_inputs(), mask in prop::array::uniform6(any::<bool>())) {
        let mut p = params();
        p.ethanol.enabled = true;
        let full = total_reward(&inputs, &p);
        prop_assert!(full.total <= 0.0);
        prop_assert!(full.components.iter().all(|c| *c <= 0.0));
        let mut q = p.clone();
        let rows = [&mut q.load, &mut q.stability, &mut q.gradient, &mut q.safety, &mut q.efficiency, &mut q.ethanol];
        for (row, on) in rows.into_iter().zip(mask) {
            row.enabled = on;
        }
        let partial = total_reward(&inputs, &q);
        for i in 0..6 {
            let expected = if mask[i] { full.components[i] } else { 0.0 };
            prop_assert_eq!(partial.components[i], expected);
        }
        let sum: f64 = partial.components.iter().fold(0.0, |a, c| a + c);
        prop_assert_eq!(partial.total, sum);
    }
}
