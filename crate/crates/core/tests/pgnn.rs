use approx::assert_relative_eq;
use neuronav_core::energy_model::{generate_dataset, optimal_velocity, DroneDynamics, MotorParams, PolyCoeffs};
use neuronav_core::pgnn::{
    dynamics_gap, loss_data, loss_energy, loss_physics, predict_flight_time, train, LossWeights, MlpModel, Objective,
    PhysicsVariant, TrainConfig, TrainSample, TrainingSet, HIDDEN_LAYERS,
};
use neuronav_core::sim::FitGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn training_set() -> TrainingSet {
    let grid = FitGrid::default();
    let depths: Vec<f64> = (2..=9).map(f64::from).collect();
    let data = generate_dataset(&depths, &grid.velocities(), &DroneDynamics::default(), &MotorParams::default(), grid.dt)
        .unwrap();
    TrainingSet::from_energy_samples(&data).unwrap()
}

fn default_model(seed: u64) -> MlpModel {
    MlpModel::new(&HIDDEN_LAYERS, 10.0, 0.2, 8.0, seed).unwrap()
}

/// Central differences on `count` random parameters; returns the worst
/// relative error, with gradients below `floor` compared absolutely.
fn worst_gradient_error(objective: &Objective, model: &MlpModel, samples: &[TrainSample], count: usize, seed: u64) -> f64 {
    let (_, grad) = objective.loss_and_grad(model, samples).unwrap();
    let base = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let i = rng.random_range(0..base.len());
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p).unwrap();
        let up = objective.total_loss(&probe, samples).unwrap().total;
        p[i] = base[i] - h;
        probe.set_params(&p).unwrap();
        let down = objective.total_loss(&probe, samples).unwrap().total;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_both_variants() {
    let data = training_set();
    let weights = LossWeights {
        lambda_physics: 0.7,
        lambda_energy: 0.4,
    };
    for (k, variant) in [PhysicsVariant::ZeroDerivative, PhysicsVariant::DynamicsConsistency].into_iter().enumerate() {
        let objective = Objective::new(&data.polys, weights, variant, 4.0);
        let worst = worst_gradient_error(&objective, &default_model(3 + k as u64), &data.samples, 20, 17);
        assert!(worst < 1e-4, "{variant:?}: {worst}");
    }
}

#[test]
fn total_is_weighted_sum_of_terms() {
    let data = training_set();
    let model = default_model(4);
    let preds: Vec<f64> = data.samples.iter().map(|s| model.forward(s.depth).unwrap()).collect();
    let targets: Vec<f64> = data.samples.iter().map(|s| s.v_opt).collect();
    for variant in [PhysicsVariant::ZeroDerivative, PhysicsVariant::DynamicsConsistency] {
        let w = LossWeights {
            lambda_physics: 0.3,
            lambda_energy: 2.5,
        };
        let l = Objective::new(&data.polys, w, variant, 4.0).total_loss(&model, &data.samples).unwrap();
        let d = loss_data(&preds, &targets).unwrap();
        let p = loss_physics(&model, &data.samples, &data.polys, variant, 4.0).unwrap();
        let e = loss_energy(&model, &data.samples, &data.polys).unwrap();
        assert_relative_eq!(l.data, d, max_relative = 1e-14);
        assert_relative_eq!(l.physics, p, max_relative = 1e-14);
        assert_relative_eq!(l.energy, e, max_relative = 1e-14);
        assert_relative_eq!(l.total, d + 0.3 * p + 2.5 * e, max_relative = 1e-14);
        let physics_only = LossWeights {
            lambda_physics: 1.0,
            lambda_energy: 0.0,
        };
        let lp = Objective::new(&data.polys, physics_only, variant, 4.0).total_loss(&model, &data.samples).unwrap();
        assert_relative_eq!(lp.total - lp.data, p, max_relative = 1e-12);
    }
}

#[test]
fn energy_loss_matches_direct_evaluation() {
    let data = training_set();
    let model = default_model(8);
    let direct: f64 = data
        .samples
        .iter()
        .zip(&data.polys)
        .map(|(s, p)| p.energy(model.forward(s.depth).unwrap()) / optimal_velocity(p).energy)
        .sum::<f64>()
        / data.samples.len() as f64;
    let got = loss_energy(&model, &data.samples, &data.polys).unwrap();
    // The model output may leave the fitted range, where the curve is
    // continued linearly; inside it the two must agree.
    let inside = data
        .samples
        .iter()
        .zip(&data.polys)
        .all(|(s, p)| (p.v_min..=p.v_max).contains(&model.forward(s.depth).unwrap()));
    if inside {
        assert_relative_eq!(got, direct, max_relative = 1e-12);
    }
    assert!(got > 1.0);
}

#[test]
fn energy_loss_exceeds_one_away_from_optimum() {
    let data = training_set();
    let p: &PolyCoeffs = &data.polys[3];
    let opt = optimal_velocity(p).velocity;
    let mut model = default_model(1);
    let last = model.layer_count() - 1;
    model.weights[last].iter_mut().for_each(|w| *w = 0.0);
    // Output is 4.1 m/s for every depth, well above the optimum.
    let s = [TrainSample {
        depth: p.depth,
        v_opt: opt,
    }];
    assert!(loss_energy(&model, &s, &data.polys).unwrap() > 1.0);
}

#[test]
fn dynamics_gap_matches_stepped_flight() {
    let a = 4.0;
    for (d, v) in [(3.0, 1.7), (5.0, 2.0), (2.0, 4.0), (6.0, 8.0), (9.0, 1.0)] {
        let t_end = d / v;
        let steps = 200_000;
        let h = t_end / steps as f64;
        let (mut x, mut speed) = (0.0, 0.0);
        for _ in 0..steps {
            let next = (speed + a * h).min(v);
            x += 0.5 * (speed + next) * h;
            speed = next;
        }
        let (gap, _) = dynamics_gap(d, v, a);
        assert!(gap > 0.0);
        assert!((gap - (d - x)).abs() < 1e-6, "d {d} v {v}: {gap} vs {}", d - x);
    }
    // Unlimited acceleration: the kinematic flight lands exactly.
    assert!(dynamics_gap(4.0, 2.0, 1e12).0 < 1e-9);
}

#[test]
fn zero_derivative_term_vanishes_at_critical_point() {
    let data = training_set();
    let p = &data.polys[2];
    let opt = optimal_velocity(p);
    let u = p.normalize(opt.velocity);
    assert!(p.slope_u(u).abs() / opt.energy < 1e-9);
}

#[test]
fn training_is_seeded() {
    let data = training_set();
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = MlpModel::from_config(&cfg).unwrap();
        train(&mut m, &data, LossWeights::default(), &cfg).unwrap();
        m
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_history_never_rises() {
    let data = training_set();
    let cfg = TrainConfig {
        epochs: 600,
        ..TrainConfig::default()
    };
    let mut m = MlpModel::from_config(&cfg).unwrap();
    let report = train(&mut m, &data, LossWeights::default(), &cfg).unwrap();
    let totals: Vec<f64> = report.history.iter().map(|l| l.total).collect();
    assert!(neuronav_core::pgnn::monotone_trend(&totals, 50));
    assert!(totals.last().unwrap() < &totals[0]);
}

#[test]
fn larger_energy_weight_does_not_raise_energy_ratio() {
    let data = training_set();
    let cfg = TrainConfig::default();
    let final_energy = |lambda_energy: f64| {
        let mut m = MlpModel::from_config(&cfg).unwrap();
        let w = LossWeights {
            lambda_physics: 0.1,
            lambda_energy,
        };
        train(&mut m, &data, w, &cfg).unwrap();
        loss_energy(&m, &data.samples, &data.polys).unwrap()
    };
    let (low, high) = (final_energy(0.0), final_energy(10.0));
    assert!(high <= low, "lambda 0: {low}, lambda 10: {high}");
}

#[test]
fn trained_flight_time_grows_with_depth() {
    let data = training_set();
    let cfg = TrainConfig::default();
    let mut m = MlpModel::from_config(&cfg).unwrap();
    train(&mut m, &data, LossWeights::default(), &cfg).unwrap();
    let t: Vec<f64> = (2..=9).map(|d| predict_flight_time(&m, f64::from(d)).unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]), "{t:?}");
    let v5 = m.forward(5.0).unwrap();
    let opt5 = data.samples.iter().find(|s| s.depth == 5.0).unwrap().v_opt;
    assert!((v5 - opt5).abs() / opt5 < 0.1);
}

#[test]
fn output_is_bounded_for_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut draws = 0;
    for seed in 0..200 {
        let mut m = default_model(seed);
        let scale = [1.0, 10.0, 100.0][seed as usize % 3];
        let p: Vec<f64> = m.params().iter().map(|w| w * scale).collect();
        m.set_params(&p).unwrap();
        for _ in 0..50 {
            let d = rng.random_range(1e-3..20.0);
            let v = m.forward(d).unwrap();
            assert!((0.2..=8.0).contains(&v), "seed {seed} d {d}: {v}");
            draws += 1;
        }
    }
    assert_eq!(draws, 10_000);
}

proptest! {
    #[test]
    fn data_loss_matches_recomputation(pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..40)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let direct = pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pairs.len() as f64;
        prop_assert!((loss_data(&p, &t).unwrap() - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}
