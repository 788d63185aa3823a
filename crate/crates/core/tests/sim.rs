use neuronav_core::energy_model::optimal_velocity;
use neuronav_core::sim::{energy_from_log, run_episode, sweep_cases, PlannerMode, SimConfig, SweepCase, VelocityPolicy};

fn episode(cfg: &SimConfig) -> neuronav_core::sim::Episode {
    run_episode(cfg, &VelocityPolicy::Analytic).unwrap()
}

#[test]
fn episodes_are_deterministic() {
    let cfg = SimConfig {
        seed: 42,
        ..SimConfig::default()
    };
    assert_eq!(episode(&cfg), episode(&cfg));
}

#[test]
fn logged_energy_matches_metric() {
    let cfg = SimConfig::default();
    let ep = episode(&cfg);
    assert_eq!(energy_from_log(&ep.log, &cfg), ep.metrics.dynamic_energy);
    assert!(ep.metrics.dynamic_energy > 0.0);
}

#[test]
fn path_is_no_shorter_than_chord() {
    for offset in [-1.0, 0.0, 1.0] {
        let cfg = SweepCase {
            mode: PlannerMode::Predictive,
            depth: 4.0,
            offset,
        }
        .config(&SimConfig::default());
        let m = episode(&cfg).metrics;
        assert!(m.path_length >= (m.crossing - m.start).norm() - 1e-9, "offset {offset}");
    }
}

#[test]
fn flight_time_is_near_depth_over_optimal_speed() {
    let cfg = SimConfig::default();
    let m = episode(&cfg).metrics;
    assert!(m.success, "{:?}", m.status);
    let v = optimal_velocity(&cfg.fit.fit_at(3.0, &cfg.dynamics, &cfg.motors).unwrap()).velocity;
    let nominal = 3.0 / v;
    assert!(m.flight_time >= 0.5 * nominal && m.flight_time <= 2.0 * nominal, "{} vs {nominal}", m.flight_time);
}

#[test]
fn static_gate_is_passed() {
    let mut cfg = SimConfig::default();
    cfg.gate.lateral_speed = 0.0;
    let m = episode(&cfg).metrics;
    assert!(m.success, "{:?}", m.status);
}

#[test]
fn sweep_order_is_mode_depth_offset() {
    let cases = sweep_cases(&[2.0, 3.0], &[0.0, 1.0], &[PlannerMode::Predictive, PlannerMode::DepthOnlyBaseline]).unwrap();
    assert_eq!(cases.len(), 8);
    assert_eq!((cases[1].depth, cases[1].offset), (2.0, 1.0));
    assert_eq!(cases[4].mode, PlannerMode::DepthOnlyBaseline);
    assert!(sweep_cases(&[], &[0.0], &[PlannerMode::Predictive]).is_err());
}
