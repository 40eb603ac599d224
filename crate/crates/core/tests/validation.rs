use spikeopt::{
    audit, compute_prc, find_limit_cycle, simulate_full, simulate_full_with, solve_bounded,
    solve_extremal, ConductanceModel, FullSimConfig, LimitCycle, PhaseModel, RepeatMode,
    SampledControl,
};

fn hh() -> (ConductanceModel, LimitCycle, PhaseModel) {
    let model = ConductanceModel::hodgkin_huxley();
    let cycle = find_limit_cycle(&model).unwrap();
    let phase = PhaseModel::tabulated(&compute_prc(&model, &cycle, 1024).unwrap()).unwrap();
    (model, cycle, phase)
}

#[test]
fn hh_designs_near_natural_period_transfer_to_full_model() {
    let (model, cycle, phase) = hh();
    let t0 = cycle.period;
    for t in [13.2, 13.6, 14.0, 14.5, 15.0, 15.5, 16.0, 16.4, 16.8] {
        assert!((t - t0).abs() <= 0.15 * t0);
        let design = solve_bounded(&phase, t, 1.0, true).unwrap().1;
        let control = SampledControl::from_solution(&design).unwrap();
        let report = simulate_full(&model, &cycle, &control, 5).unwrap();
        let err = (report.mean_interval - t).abs() / t;
        assert!(err <= 0.02, "T = {t}: mean interval {}", report.mean_interval);
        // trapezoid sampling across the switch kinks, not the design itself
        assert!(report.net_charge_per_cycle.abs() < 1e-5 * t, "T = {t}");
        assert!(design.net_charge.abs() < 1e-8 * t);
    }
}

#[test]
fn zero_and_zero_scaled_controls_agree() {
    let (model, cycle, phase) = hh();
    let design = solve_bounded(&phase, 16.0, 1.0, true).unwrap().1;
    let scaled = SampledControl::from_solution(&design).unwrap().scaled(0.0);
    let zero = SampledControl::zero(design.achieved_t).unwrap();
    let a = simulate_full(&model, &cycle, &scaled, 5).unwrap();
    let b = simulate_full(&model, &cycle, &zero, 5).unwrap();
    assert_eq!(a, b);
    assert!((a.mean_interval - 14.64).abs() < 0.05);
}

#[test]
fn spike_triggered_repetition_also_slows_the_rhythm() {
    let (model, cycle, phase) = hh();
    let design = solve_bounded(&phase, 16.0, 1.0, true).unwrap().1;
    let control = SampledControl::from_solution(&design).unwrap();
    let cfg = FullSimConfig {
        repeat: RepeatMode::SpikeTriggered,
        ..FullSimConfig::default()
    };
    let report = simulate_full_with(&model, &cycle, &control, &cfg).unwrap().report;
    assert!(report.mean_interval > cycle.period + 1.0);
    assert!(report.inter_spike_intervals.iter().all(|&d| d > 0.0));
}

#[test]
fn cost_ordering() {
    for (model, t, m) in [
        (PhaseModel::sniper(1.0, 1.0).unwrap(), 5.2, 0.4),
        (PhaseModel::sniper(1.0, 1.0).unwrap(), 8.2, 0.4),
        (PhaseModel::sinusoidal(1.0, 1.0).unwrap(), 4.7, 0.6),
    ] {
        let free = solve_extremal(&model, t, false).unwrap().cost;
        let balanced = solve_extremal(&model, t, true).unwrap().cost;
        let bounded = solve_bounded(&model, t, m, true).unwrap().1.cost;
        assert!(free <= balanced * (1.0 + 1e-9), "T = {t}");
        assert!(balanced <= bounded * (1.0 + 1e-9), "T = {t}");
    }
}

#[test]
fn trapezoid_audit_agrees_with_solver() {
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    for sol in [
        solve_extremal(&sniper, 5.0, true).unwrap(),
        solve_extremal(&sniper, 5.0, false).unwrap(),
        solve_bounded(&sniper, 5.2, 0.4, true).unwrap().1,
    ] {
        assert!(sol.samples.len() >= 2048);
        let (cost, charge, t) = audit(&sol);
        assert!((cost - sol.cost).abs() <= 1e-5 * sol.cost, "{cost} vs {}", sol.cost);
        assert!((charge - sol.net_charge).abs() <= 1e-5 * sol.cost.sqrt());
        assert!((t - sol.target_t).abs() <= 1e-8 * sol.target_t);
    }
}

#[test]
fn zero_control_audits_to_nothing() {
    let m = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
    let sol = solve_extremal(&m, 2.0 * std::f64::consts::PI, true).unwrap();
    let (cost, charge, t) = audit(&sol);
    assert!(cost.abs() < 1e-20 && charge.abs() < 1e-10);
    assert!((t - 2.0 * std::f64::consts::PI).abs() < 1e-9);
}
