use approx::assert_relative_eq;
use nalgebra::Matrix4;
use neuronav_core::energy_model::{
    fit_energy_poly, generate_dataset, linspace, motor_voltage, optimal_velocity, simulate_flight_energy,
    DroneDynamics, EnergySample, MotorParams,
};
use neuronav_core::polynomial::{eval, real_roots_in};
use neuronav_core::sim::FitGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn defaults() -> (DroneDynamics, MotorParams) {
    (DroneDynamics::default(), MotorParams::default())
}

fn samples_from(coeffs: &[f64], vs: &[f64]) -> Vec<EnergySample> {
    vs.iter()
        .map(|&v| EnergySample {
            depth: 1.0,
            velocity: v,
            energy: eval(coeffs, v),
        })
        .collect()
}

#[test]
fn motor_voltage_is_linear() {
    let p = MotorParams::default();
    assert_relative_eq!(motor_voltage(6.0, 2400.0, &p), 2.0 * motor_voltage(3.0, 1200.0, &p), max_relative = 1e-15);
}

#[test]
fn quintic_is_recovered_exactly() {
    // E(v) with v in [1, 3]; normalized u = (v - 1) / 2.
    let u_coeffs = [3.0, -1.5, 2.0, 0.7, -0.4, 0.25];
    let vs = linspace(1.0, 3.0, 20);
    let samples: Vec<EnergySample> = vs
        .iter()
        .map(|&v| EnergySample {
            depth: 1.0,
            velocity: v,
            energy: eval(&u_coeffs, (v - 1.0) / 2.0),
        })
        .collect();
    let p = fit_energy_poly(&samples).unwrap();
    for (got, want) in p.coeffs.iter().zip(u_coeffs) {
        assert_relative_eq!(*got, want, max_relative = 1e-6);
    }
}

#[test]
fn quadratic_fit_has_no_higher_terms() {
    let p = fit_energy_poly(&samples_from(&[4.0, -2.0, 0.5], &linspace(0.5, 4.0, 15))).unwrap();
    for c in &p.coeffs[3..] {
        assert!(c.abs() < 1e-6, "{:?}", p.coeffs);
    }
}

#[test]
fn energy_grows_with_depth() {
    let (dy, mo) = defaults();
    for v in [1.0, 2.0, 4.0] {
        let e: Vec<f64> = (2..=9)
            .map(|d| simulate_flight_energy(f64::from(d), v, &dy, &mo, 1e-3).unwrap())
            .collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]), "v = {v}: {e:?}");
    }
}

#[test]
fn energy_curve_has_interior_minimum_at_five_metres() {
    let (dy, mo) = defaults();
    let vs: Vec<f64> = (1..=32).map(|k| 0.25 * f64::from(k)).collect();
    let e: Vec<f64> = vs.iter().map(|&v| simulate_flight_energy(5.0, v, &dy, &mo, 1e-3).unwrap()).collect();
    let arg = (0..e.len()).min_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
    assert!(arg > 0 && arg < e.len() - 1, "minimum at v = {}", vs[arg]);
}

#[test]
fn dataset_matches_direct_simulation() {
    let (dy, mo) = defaults();
    let depths = [2.0, 4.5];
    let vs = [0.8, 1.6, 3.2];
    let data = generate_dataset(&depths, &vs, &dy, &mo, 1e-3).unwrap();
    assert_eq!(data.len(), 6);
    for s in &data {
        assert_eq!(s.energy, simulate_flight_energy(s.depth, s.velocity, &dy, &mo, 1e-3).unwrap());
    }
    assert_eq!(generate_dataset(&[3.0], &[1.0], &dy, &mo, 1e-3).unwrap().len(), 1);
}

#[test]
fn fit_residual_is_small_at_five_metres() {
    let (dy, mo) = defaults();
    let grid = FitGrid::default();
    let data = generate_dataset(&[5.0], &grid.velocities(), &dy, &mo, grid.dt).unwrap();
    let p = fit_energy_poly(&data).unwrap();
    let mean = data.iter().map(|s| s.energy).sum::<f64>() / data.len() as f64;
    assert!(p.rms_residual < 0.02 * mean, "rms {} mean {}", p.rms_residual, mean);
}

#[test]
fn interior_optimum_zeroes_the_slope() {
    let (dy, mo) = defaults();
    for d in 2..=9 {
        let p = FitGrid::default().fit_at(f64::from(d), &dy, &mo).unwrap();
        let opt = optimal_velocity(&p);
        assert!(!opt.boundary, "depth {d}");
        let u = p.normalize(opt.velocity);
        let scale = p.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        assert!(p.slope_u(u).abs() <= 1e-6 * scale, "depth {d}: slope {}", p.slope_u(u));
    }
}

/// Real eigenvalues of the companion matrix of a monic quartic.
fn companion_roots(c: &[f64; 5]) -> Vec<f64> {
    let a: Vec<f64> = c.iter().map(|x| x / c[4]).collect();
    let m = Matrix4::new(
        0.0, 0.0, 0.0, -a[0], //
        1.0, 0.0, 0.0, -a[1], //
        0.0, 1.0, 0.0, -a[2], //
        0.0, 0.0, 1.0, -a[3],
    );
    let mut r: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-7)
        .map(|z| z.re)
        .collect();
    r.sort_by(f64::total_cmp);
    r
}

#[test]
fn quartic_roots_match_companion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        // Either four real roots or two real roots plus a complex pair.
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        let complex_pair = rng.random_bool(0.4);
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] < 0.05) {
            continue;
        }
        let lead = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mul = |p: &[f64], q: &[f64]| {
            let mut out = vec![0.0; p.len() + q.len() - 1];
            for (i, a) in p.iter().enumerate() {
                for (j, b) in q.iter().enumerate() {
                    out[i + j] += a * b;
                }
            }
            out
        };
        let mut poly = vec![lead];
        poly = mul(&poly, &[-r[0], 1.0]);
        poly = mul(&poly, &[-r[1], 1.0]);
        if complex_pair {
            // (x - r2)^2 + 0.2^2
            poly = mul(&poly, &[r[2] * r[2] + 0.04, -2.0 * r[2], 1.0]);
        } else {
            poly = mul(&poly, &[-r[2], 1.0]);
            poly = mul(&poly, &[-r[3], 1.0]);
        }
        let c: [f64; 5] = poly.try_into().unwrap();
        let oracle: Vec<f64> = companion_roots(&c).into_iter().filter(|x| (0.0..=1.0).contains(x)).collect();
        let got = real_roots_in(&c, 0.0, 1.0);
        assert_eq!(got.len(), oracle.len(), "{c:?}: {got:?} vs {oracle:?}");
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-8, "{c:?}: {got:?} vs {oracle:?}");
        }
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn energy_is_positive(d in 0.05f64..9.0, v in 0.1f64..8.0) {
        let (dy, mo) = defaults();
        prop_assert!(simulate_flight_energy(d, v, &dy, &mo, 1e-3).unwrap() > 0.0);
    }
}

#[test]
fn optimal_velocity_does_not_fall_with_depth() {
    let (dy, mo) = defaults();
    let grid = FitGrid::default();
    let vs = linspace(grid.v_min, grid.v_max, 250);
    let mut last_oracle = 0.0;
    let mut last_fit = 0.0;
    for d in 2..=9 {
        let d = f64::from(d);
        let e: Vec<f64> = vs.iter().map(|&v| simulate_flight_energy(d, v, &dy, &mo, grid.dt).unwrap()).collect();
        let best = vs[(0..vs.len()).min_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap()];
        let fit = optimal_velocity(&grid.fit_at(d, &dy, &mo).unwrap()).velocity;
        assert!(best >= last_oracle && fit >= last_fit, "depth {d}: oracle {best}, fit {fit}");
        assert!((fit - best).abs() / best < 0.05);
        (last_oracle, last_fit) = (best, fit);
    }
}
