use neuronav_core::event_camera::{
    render_log_intensity, CameraConfig, CameraModel, Polarity, SceneGate,
};
use neuronav_core::scenario::synthetic_stream;
use neuronav_core::{Grid, Vec3};
use proptest::prelude::*;

fn small_camera(width: usize, height: usize, c: f64) -> CameraModel {
    CameraModel::new(CameraConfig {
        width,
        height,
        contrast_threshold: c,
        ..CameraConfig::default()
    })
    .unwrap()
}

#[test]
fn lateral_equal_to_depth_maps_to_focal_offset() {
    let cfg = CameraConfig {
        focal_length: 100.0,
        ..CameraConfig::default()
    };
    let (u, v) = cfg.project(Vec3::new(3.0, 3.0, 0.0)).unwrap();
    assert_eq!((u, v), (220.0, 90.0));
}

#[test]
fn nearer_gate_covers_more_pixels() {
    let cam = CameraConfig::default();
    let bg = cam.background_log_intensity();
    let lit = |d: f64| {
        let gate = SceneGate {
            depth: d,
            lateral_speed: 0.0,
            ..SceneGate::default()
        };
        let g = render_log_intensity(&gate, &cam, 0.0).unwrap();
        g.as_slice().iter().filter(|&&v| v > bg).count()
    };
    assert!(lit(2.0) > lit(8.0));
    assert!(lit(8.0) > 0);
}

fn events_in_window(speed: f64) -> usize {
    let gate = SceneGate {
        lateral_speed: speed,
        oscillation_bound: 1.0,
        ..SceneGate::default()
    };
    let s = synthetic_stream(&gate, &CameraConfig::default(), Vec3::ZERO, 0.01, 1e-3, 10_000, 0).unwrap();
    s.events.len()
}

#[test]
fn faster_gate_fires_more_events() {
    assert!(events_in_window(4.0) > events_in_window(1.0));
}

#[test]
fn event_count_is_non_decreasing_in_speed() {
    let counts: Vec<usize> = [0.5, 1.0, 2.0, 4.0].iter().map(|&v| events_in_window(v)).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn streams_are_reproducible() {
    let cam = CameraConfig {
        noise_probability: 1e-3,
        ..CameraConfig::default()
    };
    let gate = SceneGate::default();
    let a = synthetic_stream(&gate, &cam, Vec3::ZERO, 0.05, 1e-3, 10_000, 9).unwrap();
    let b = synthetic_stream(&gate, &cam, Vec3::ZERO, 0.05, 1e-3, 10_000, 9).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn event_count_matches_floor_sum(
        deltas in prop::collection::vec(-2.0f64..2.0, 12),
        c in 0.05f64..0.7,
    ) {
        let mut cam = small_camera(4, 3, c);
        let base = cam.reference().clone();
        let new: Vec<f64> = base.as_slice().iter().zip(&deltas).map(|(r, d)| r + d).collect();
        let grid = Grid::from_vec(3, 4, new.clone()).unwrap();
        let events = cam.generate_events(&grid, 100, 200).unwrap();
        let expected: usize = base
            .as_slice()
            .iter()
            .zip(&new)
            .map(|(r, n)| ((n - r).abs() / c).floor() as usize)
            .sum();
        prop_assert_eq!(events.len(), expected);
        for e in &events {
            prop_assert!(e.t > 100 && e.t <= 200);
            let d = deltas[e.y as usize * 4 + e.x as usize];
            prop_assert_eq!(e.polarity, if d > 0.0 { Polarity::On } else { Polarity::Off });
        }
        prop_assert!(events.windows(2).all(|w| w[0] <= w[1]));
        // The reference never drifts more than one threshold from the target.
        for (r, n) in cam.reference().as_slice().iter().zip(&new) {
            prop_assert!((n - r).abs() < c + 1e-12);
        }
    }

    #[test]
    fn rendering_keeps_two_levels_without_supersampling(
        depth in 1.0f64..9.0,
        t in 0.0f64..3.0,
    ) {
        let cam = CameraConfig { supersampling: 1, ..CameraConfig::default() };
        let gate = SceneGate { depth, ..SceneGate::default() };
        let g = render_log_intensity(&gate, &cam, t).unwrap();
        let (bg, fg) = (cam.background_log_intensity(), cam.foreground_log_intensity());
        prop_assert!(g.as_slice().iter().all(|&v| v == bg || v == fg));
    }

    #[test]
    fn gate_never_leaves_its_bound(t in 0.0f64..100.0, speed in -5.0f64..5.0, l in 0.1f64..3.0, frac in -1.0f64..1.0) {
        let gate = SceneGate { oscillation_bound: l, lateral_speed: speed, center_y: frac * l, ..SceneGate::default() };
        prop_assert!(gate.lateral_position(t).abs() <= l + 1e-12);
    }
}
