use proptest::prelude::*;
use ssr_core::inference::{error_rate_ml, threshold_metrics, DecisionRule};
use ssr_core::optimizer::{
    evaluate_cell, sweep, synthetic_calibration, CalibrationCurve, Overhead, Quantity, Scenario, ScenarioKind,
    SweepGrid, SyntheticShape,
};
use ssr_core::{
    poisson_pmf, Conditioning, ConditionalCounts, CountDistribution, EmissionRates, State, StatePriors,
    SwitchingRates, Window,
};

fn params() -> impl Strategy<Value = (SwitchingRates, EmissionRates, Window)> {
    (0.0..1e3f64, 0.0..1e3f64, 3.0..5.0f64, 3.0..5.0f64, -4.0..-2.5f64).prop_map(|(g0, g1, l0, l1, t)| {
        (
            SwitchingRates::new(g0, g1).unwrap(),
            EmissionRates::new(10f64.powf(l0), 10f64.powf(l1)).unwrap(),
            Window::new(10f64.powf(t)).unwrap(),
        )
    })
}

fn poisson_dist(mean: f64, n_max: usize, state: State, time: Conditioning) -> CountDistribution {
    let mut pmf: Vec<f64> = (0..=n_max as u64).map(|n| poisson_pmf(n, mean).unwrap()).collect();
    let s: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= s);
    let prov = ssr_core::counting::Provenance {
        rates: SwitchingRates::new(0.0, 0.0).unwrap(),
        emission: EmissionRates::new(0.0, 0.0).unwrap(),
        window: Window::new(1.0).unwrap(),
        priors: None,
    };
    CountDistribution::new(pmf, time, state, prov).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conditional_pmfs_normalised((rates, emission, window) in params(), p0 in 0.05..0.95f64) {
        let cc = ConditionalCounts::compute(&rates, &emission, &window).unwrap();
        let priors = StatePriors::new(p0).unwrap();
        for s in State::ALL {
            prop_assert!((cc.given_initial(s).unwrap().total_mass() - 1.0).abs() < 1e-6);
            prop_assert!((cc.given_final(s, &priors).unwrap().total_mass() - 1.0).abs() < 1e-6);
        }
    }

    // Relabelling the states swaps rates, emissions and priors.
    #[test]
    fn relabelling_symmetry((rates, emission, window) in params(), p0 in 0.05..0.95f64) {
        let swapped_e = EmissionRates::new(emission.lambda_1(), emission.lambda_0()).unwrap();
        let a = ConditionalCounts::compute(&rates, &emission, &window).unwrap();
        let b = ConditionalCounts::compute(&rates.swapped(), &swapped_e, &window).unwrap();
        let pa = StatePriors::new(p0).unwrap();
        let pb = pa.swapped();
        for s in State::ALL {
            let x = a.given_initial(s).unwrap();
            let y = b.given_initial(s.other()).unwrap();
            let diff: f64 = x.pmf().iter().zip(y.pmf()).map(|(u, v)| (u - v).abs()).sum();
            prop_assert!(diff < 1e-6, "initial {s}: L1 {diff}");
            let x = a.given_final(s, &pa).unwrap();
            let y = b.given_final(s.other(), &pb).unwrap();
            let diff: f64 = x.pmf().iter().zip(y.pmf()).map(|(u, v)| (u - v).abs()).sum();
            prop_assert!(diff < 1e-6, "final {s}: L1 {diff}");
        }
        let e_a = error_rate_ml(&a.given_final(State::Zero, &pa).unwrap(), &a.given_final(State::One, &pa).unwrap(), &a.final_priors(&pa).unwrap()).unwrap();
        let e_b = error_rate_ml(&b.given_final(State::Zero, &pb).unwrap(), &b.given_final(State::One, &pb).unwrap(), &b.final_priors(&pb).unwrap()).unwrap();
        prop_assert!((e_a - e_b).abs() < 1e-6);
    }

    // Both conditionings decompose the same marginal count distribution.
    #[test]
    fn total_probability((rates, emission, window) in params(), p0 in 0.0..1.0f64) {
        let cc = ConditionalCounts::compute(&rates, &emission, &window).unwrap();
        let priors = StatePriors::new(p0).unwrap();
        let mut by_initial = vec![0.0; cc.n_max() + 1];
        let mut by_final = vec![0.0; cc.n_max() + 1];
        for s in State::ALL {
            let d = cc.given_initial(s).unwrap();
            for (acc, v) in by_initial.iter_mut().zip(d.pmf()) {
                *acc += priors.of(s) * v;
            }
            let w = cc.final_state_probability(s, &priors);
            if w > 1e-300 {
                let d = cc.given_final(s, &priors).unwrap();
                for (acc, v) in by_final.iter_mut().zip(d.pmf()) {
                    *acc += w * v;
                }
            }
        }
        let diff: f64 = by_initial.iter().zip(&by_final).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(diff < 1e-9, "L1 {diff}");
        let total = cc.final_state_probability(State::Zero, &priors) + cc.final_state_probability(State::One, &priors);
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ml_is_no_worse_than_any_threshold((rates, emission, window) in params(), p0 in 0.05..0.95f64) {
        let cc = ConditionalCounts::compute(&rates, &emission, &window).unwrap();
        let priors = StatePriors::new(p0).unwrap();
        let fp = cc.final_priors(&priors).unwrap();
        let d0 = cc.given_final(State::Zero, &priors).unwrap();
        let d1 = cc.given_final(State::One, &priors).unwrap();
        let ml = error_rate_ml(&d0, &d1, &fp).unwrap();
        prop_assert!(ml <= 0.5 + 1e-12);
        for th in 0..=cc.n_max() + 1 {
            let rule = DecisionRule::new(th, State::One);
            if let Ok(m) = threshold_metrics(&rule, &d1, &d0, &fp) {
                prop_assert!(ml <= m.misclassification + 1e-12, "th {th}: {ml} > {}", m.misclassification);
                prop_assert!((m.efficiency - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fidelity_rises_with_threshold(m0 in 1.0..50.0f64, ratio in 1.2..5.0f64, p0 in 0.05..0.95f64) {
        let m1 = m0 * ratio;
        let n_max = (m1 + 12.0 * m1.sqrt()) as usize + 10;
        let d0 = poisson_dist(m0, n_max, State::Zero, Conditioning::End);
        let d1 = poisson_dist(m1, n_max, State::One, Conditioning::End);
        let priors = StatePriors::new(p0).unwrap();
        let mut last = 0.0;
        for th in 0..=n_max {
            let Ok(m) = threshold_metrics(&DecisionRule::select(State::One, State::One, th), &d1, &d0, &priors) else { break };
            prop_assert!(m.fidelity >= last - 1e-12, "th {th}");
            prop_assert!((m.efficiency - m.success_rate).abs() < 1e-12);
            last = m.fidelity;
        }
    }

    #[test]
    fn interpolation_between_knots(xs in prop::collection::btree_set(0u32..1000, 2..8), ys in prop::collection::vec(0.0..1e6f64, 8), s in 0.0..1.0f64) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let knots: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let c = CalibrationCurve::new(Quantity::Lambda0, knots.clone()).unwrap();
        for &(x, y) in &knots {
            prop_assert_eq!(c.interpolate(x).unwrap(), y);
        }
        let (a, b) = (knots[0], knots[1]);
        let v = c.interpolate(a.0 + s * (b.0 - a.0)).unwrap();
        prop_assert!(v >= a.1.min(b.1) - 1e-6 && v <= a.1.max(b.1) + 1e-6);
        let mid = c.interpolate(0.5 * (a.0 + b.0)).unwrap();
        prop_assert!((mid - 0.5 * (a.1 + b.1)).abs() <= 1e-9 * (1.0 + a.1.max(b.1)));
    }
}

fn charge_calibration() -> ssr_core::optimizer::CalibrationSet {
    let shape = SyntheticShape {
        gamma_0_slope: 5e8,
        gamma_1_slope: 1.5e9,
        lambda_0_sat: 4e5,
        lambda_1_sat: 5e4,
        p_sat: 1e-6,
        background: 500.0,
    };
    let knots: Vec<f64> = (0..=20).map(|i| 10e-9 + i as f64 * 50e-9).collect();
    synthetic_calibration(&shape, &knots).unwrap()
}

fn charge_scenario(target: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::ChargePreparation,
        target_fidelity: target,
        target_state: State::Zero,
        priors_at_start: StatePriors::new(0.7).unwrap(),
        overhead: Overhead { per_attempt: 20e-6, per_point: 1e-3, ..Default::default() },
    }
}

fn charge_grid() -> SweepGrid {
    SweepGrid::Power {
        powers: (0..8).map(|i| 20e-9 + i as f64 * 100e-9).collect(),
        durations: (1..=8).map(|i| i as f64 * 100e-6).collect(),
    }
}

#[test]
fn sweep_thresholds_are_pointwise_minimal() {
    let cal = charge_calibration();
    let scenario = charge_scenario(0.99);
    let result = sweep(&scenario, Some(&cal), &charge_grid()).unwrap();
    let opt = result.optimum_point();
    assert!(opt.fidelity >= 0.99 - 1e-9);
    assert!(opt.attempts.unwrap() >= 1.0);
    let mut checked = 0;
    for cell in result.grid.iter().filter(|c| c.feasible()) {
        // Relaxing the selection by one count must miss the target. The
        // bright side is |0> here, so a lower threshold is less stringent.
        let th = cell.threshold.unwrap();
        assert!(cell.fidelity >= 0.99);
        if th == 0 {
            continue;
        }
        let (rates, emission) = cal.at(cell.control).unwrap();
        let window = Window::new(cell.duration).unwrap();
        let cc = ConditionalCounts::compute(&rates, &emission, &window).unwrap();
        let start = scenario.priors_at_start;
        let fp = cc.final_priors(&start).unwrap();
        let d0 = cc.given_final(State::Zero, &start).unwrap();
        let d1 = cc.given_final(State::One, &start).unwrap();
        let m = threshold_metrics(&DecisionRule::select(State::Zero, State::Zero, th - 1), &d0, &d1, &fp).unwrap();
        assert!(m.fidelity < 0.99, "cell {} {}: threshold {} also feasible", cell.control, cell.duration, th - 1);
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} cells checked");
}

#[test]
fn tighter_targets_never_speed_up() {
    let cal = charge_calibration();
    let mut last = 0.0;
    for target in [0.95, 0.99, 0.999] {
        let r = sweep(&charge_scenario(target), Some(&cal), &charge_grid()).unwrap();
        let t = r.optimum_point().total_time.unwrap();
        assert!(t >= last, "target {target}: {t} < {last}");
        last = t;
    }
}

#[test]
fn sweeps_are_deterministic() {
    let cal = charge_calibration();
    let a = sweep(&charge_scenario(0.99), Some(&cal), &charge_grid()).unwrap();
    let b = sweep(&charge_scenario(0.99), Some(&cal), &charge_grid()).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn infeasible_grid_reports_best_fidelity() {
    let cal = charge_calibration();
    let grid = SweepGrid::Power { powers: vec![20e-9], durations: vec![1e-6] };
    match sweep(&charge_scenario(0.999999), Some(&cal), &grid) {
        Err(ssr_core::Error::NoFeasiblePoint { target, best }) => {
            assert_eq!(target, 0.999999);
            assert!(best > 0.0 && best < 0.999999);
        }
        other => panic!("expected NoFeasiblePoint, got {other:?}"),
    }
}

#[test]
fn out_of_range_power_rejected() {
    let cal = charge_calibration();
    let grid = SweepGrid::Power { powers: vec![5e-6], durations: vec![1e-4] };
    assert!(matches!(sweep(&charge_scenario(0.9), Some(&cal), &grid), Err(ssr_core::Error::OutOfRange { .. })));
}

#[test]
fn unreachable_target_is_an_infeasible_cell() {
    let scenario = Scenario {
        kind: ScenarioKind::ElectronPreparation,
        target_fidelity: 0.9,
        target_state: State::One,
        priors_at_start: StatePriors::certain(State::Zero),
        overhead: Overhead::default(),
    };
    let p = evaluate_cell(
        &scenario,
        &SwitchingRates::new(0.0, 0.0).unwrap(),
        &EmissionRates::new(1e5, 1e3).unwrap(),
        &Window::new(1e-4).unwrap(),
        1e-4,
        1.0,
    )
    .unwrap();
    assert!(!p.feasible());
}
