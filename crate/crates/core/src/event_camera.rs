//! Synthetic dynamic vision sensor.
//!
//! A gate is rendered into a per-pixel log-intensity image and each pixel
//! fires one event per contrast threshold `C` crossed since its last event:
//!
//! ```text
//! n = floor(|L_new - L_ref| / C),   L_ref += n * C * sign(L_new - L_ref)
//! ```
//!
//! The reference keeps the sub-threshold residual, so slow drifts still fire
//! once they accumulate past `C`.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// One asynchronous brightness-change record.
///
/// Field order gives the batch ordering: time, then row, column, polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub y: u32,
    pub x: u32,
    pub polarity: Polarity,
}

/// Static sensor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Pixels.
    pub focal_length: f64,
    /// Log-intensity units.
    pub contrast_threshold: f64,
    /// Added to the linear intensity before the log.
    pub intensity_floor: f64,
    /// Sub-pixel samples per axis used to compute pixel coverage.
    /// `1` gives a strictly two-level image.
    pub supersampling: usize,
    /// Per-pixel probability of a spurious event per rendered interval.
    pub noise_probability: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 240,
            height: 180,
            focal_length: 120.0,
            contrast_threshold: 0.3,
            intensity_floor: 0.05,
            supersampling: 4,
            noise_probability: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(domain("sensor must have at least one pixel"));
        }
        if !(self.focal_length > 0.0) {
            return Err(domain("focal length must be positive"));
        }
        if !(self.contrast_threshold > 0.0) {
            return Err(domain("contrast threshold must be positive"));
        }
        if !(self.intensity_floor > 0.0) {
            return Err(domain("intensity floor must be positive"));
        }
        if self.supersampling == 0 {
            return Err(domain("supersampling must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return Err(domain("noise probability must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Pinhole projection of a camera-relative point (`x` along the optical
    /// axis) to real-valued pixel coordinates `(u, v)`.
    pub fn project(&self, point: Vec3) -> Result<(f64, f64)> {
        if !(point.x > 0.0) {
            return Err(domain("cannot project a point with non-positive depth"));
        }
        let u = self.width as f64 / 2.0 + self.focal_length * point.y / point.x;
        let v = self.height as f64 / 2.0 - self.focal_length * point.z / point.x;
        Ok((u, v))
    }

    /// Inverse of [`project`](Self::project) at a known depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = depth / self.focal_length;
        Vec3::new(
            depth,
            (u - self.width as f64 / 2.0) * k,
            (self.height as f64 / 2.0 - v) * k,
        )
    }

    pub fn background_log_intensity(&self) -> f64 {
        libm::log(self.intensity_floor)
    }

    pub fn foreground_log_intensity(&self) -> f64 {
        libm::log(1.0 + self.intensity_floor)
    }
}

/// Sensor parameters plus the per-pixel log intensity at each pixel's last event.
#[derive(Debug, Clone)]
pub struct CameraModel {
    config: CameraConfig,
    reference: Grid<f64>,
}

impl CameraModel {
    /// A sensor whose reference image is the uniform background.
    pub fn new(config: CameraConfig) -> Result<Self> {
        config.validate()?;
        let reference = Grid::filled(
            config.height,
            config.width,
            config.background_log_intensity(),
        );
        Ok(Self { config, reference })
    }

    pub fn config(&self) -> &CameraConfig {
        &self.config
    }

    pub fn reference(&self) -> &Grid<f64> {
        &self.reference
    }

    /// Replace the reference image without emitting events.
    pub fn reset_reference(&mut self, log_intensity: Grid<f64>) -> Result<()> {
        log_intensity.check_dims(self.config.dims())?;
        self.reference = log_intensity;
        Ok(())
    }

    pub fn project(&self, point: Vec3) -> Result<(f64, f64)> {
        self.config.project(point)
    }

    /// Converts the change from the reference image to `new_log_intensity`
    /// into events spread over `(t0, t1]` and advances the reference.
    pub fn generate_events(
        &mut self,
        new_log_intensity: &Grid<f64>,
        t0: u64,
        t1: u64,
    ) -> Result<Vec<Event>> {
        if t1 <= t0 {
            return Err(domain("event interval must satisfy t1 > t0"));
        }
        new_log_intensity.check_dims(self.config.dims())?;
        let c = self.config.contrast_threshold;
        let span = t1 - t0;
        let width = self.config.width;
        let mut events = Vec::new();
        for (i, (reference, &new)) in self
            .reference
            .as_mut_slice()
            .iter_mut()
            .zip(new_log_intensity.as_slice())
            .enumerate()
        {
            let delta = new - *reference;
            let n = libm::floor(delta.abs() / c);
            if n < 1.0 {
                continue;
            }
            let polarity = if delta > 0.0 {
                Polarity::On
            } else {
                Polarity::Off
            };
            *reference += n * c * f64::from(polarity.sign());
            let n = n as u64;
            let (y, x) = ((i / width) as u32, (i % width) as u32);
            events.extend((1..=n).map(|k| Event {
                t: t0 + k * span / n,
                y,
                x,
                polarity,
            }));
        }
        events.sort_unstable();
        Ok(events)
    }

    /// Appends Bernoulli background-activity events (probability
    /// `noise_probability` per pixel) with uniform timestamps in `(t0, t1]`,
    /// then restores the batch ordering.
    pub fn add_noise<R: Rng + ?Sized>(&self, events: &mut Vec<Event>, t0: u64, t1: u64, rng: &mut R) {
        let p = self.config.noise_probability;
        if p <= 0.0 || t1 <= t0 {
            return;
        }
        for y in 0..self.config.height as u32 {
            for x in 0..self.config.width as u32 {
                if rng.random::<f64>() < p {
                    let polarity = if rng.random::<bool>() {
                        Polarity::On
                    } else {
                        Polarity::Off
                    };
                    let t = rng.random_range(t0 + 1..=t1);
                    events.push(Event { t, y, x, polarity });
                }
            }
        }
        events.sort_unstable();
    }
}

/// Ring-shaped gate oscillating laterally between `-L` and `+L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGate {
    /// Distance of the gate plane along the forward axis (meters).
    pub depth: f64,
    /// Lateral position at `t = 0` (meters).
    pub center_y: f64,
    pub center_z: f64,
    /// Inner radius of the ring (meters).
    pub aperture: f64,
    pub frame_thickness: f64,
    /// Oscillation bound `L` (meters).
    pub oscillation_bound: f64,
    /// Signed lateral speed at `t = 0` (m/s).
    pub lateral_speed: f64,
}

impl Default for SceneGate {
    fn default() -> Self {
        Self {
            depth: 3.0,
            center_y: 0.0,
            center_z: 0.0,
            aperture: 0.5,
            frame_thickness: 0.15,
            oscillation_bound: 1.0,
            lateral_speed: 4.0,
        }
    }
}

impl SceneGate {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0) {
            return Err(domain("gate depth must be positive"));
        }
        if !(self.aperture > 0.0) || !(self.frame_thickness > 0.0) {
            return Err(domain("gate aperture and frame thickness must be positive"));
        }
        if !(self.oscillation_bound >= 0.0) || self.center_y.abs() > self.oscillation_bound {
            return Err(domain("gate must start within its oscillation bound"));
        }
        Ok(())
    }

    pub fn outer_radius(&self) -> f64 {
        self.aperture + self.frame_thickness
    }

    /// Lateral position at time `t` (seconds): a triangle wave that reverses
    /// at `±L`.
    pub fn lateral_position(&self, t: f64) -> f64 {
        let l = self.oscillation_bound;
        if l <= 0.0 {
            return 0.0;
        }
        let period = 4.0 * l;
        // Unfold the motion onto a line, fold back with period 4L.
        let s = wrap(self.center_y + l + self.lateral_speed * t, period);
        if s <= 2.0 * l {
            s - l
        } else {
            3.0 * l - s
        }
    }

    /// Lateral velocity at time `t`.
    pub fn lateral_velocity(&self, t: f64) -> f64 {
        let l = self.oscillation_bound;
        if l <= 0.0 {
            return 0.0;
        }
        let s = wrap(self.center_y + l + self.lateral_speed * t, 4.0 * l);
        if s < 2.0 * l {
            self.lateral_speed
        } else {
            -self.lateral_speed
        }
    }

    pub fn center(&self, t: f64) -> Vec3 {
        Vec3::new(self.depth, self.lateral_position(t), self.center_z)
    }
}

/// `x mod period` in `[0, period)`.
fn wrap(x: f64, period: f64) -> f64 {
    let r = x - period * libm::floor(x / period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Renders the gate seen from the origin at time `t` (seconds).
pub fn render_log_intensity(gate: &SceneGate, camera: &CameraConfig, t: f64) -> Result<Grid<f64>> {
    render_log_intensity_from(gate, camera, t, Vec3::ZERO)
}

/// Renders the gate seen from a camera at `viewpoint` looking along `+x`.
///
/// Each pixel's intensity is the fraction of its sub-pixel samples that fall
/// on the ring (between `aperture` and `aperture + frame_thickness`), so
/// fully covered pixels read `ln(1 + eps)` and background reads `ln(eps)`.
pub fn render_log_intensity_from(
    gate: &SceneGate,
    camera: &CameraConfig,
    t: f64,
    viewpoint: Vec3,
) -> Result<Grid<f64>> {
    camera.validate()?;
    let depth = gate.depth - viewpoint.x;
    if !(depth > 0.0) {
        return Err(domain("gate must lie in front of the camera"));
    }
    let background = camera.background_log_intensity();
    let mut grid = Grid::filled(camera.height, camera.width, background);

    let relative = gate.center(t) - viewpoint;
    let (cu, cv) = camera.project(relative)?;
    let px_per_m = camera.focal_length / depth;
    let r_in = gate.aperture * px_per_m;
    let r_out = gate.outer_radius() * px_per_m;

    // Only pixels overlapping the ring's bounding square can be lit.
    let clamp_col = |v: f64| v.max(0.0).min(camera.width as f64) as usize;
    let clamp_row = |v: f64| v.max(0.0).min(camera.height as f64) as usize;
    let (c0, c1) = (clamp_col(libm::floor(cu - r_out)), clamp_col(libm::ceil(cu + r_out) + 1.0));
    let (r0, r1) = (clamp_row(libm::floor(cv - r_out)), clamp_row(libm::ceil(cv + r_out) + 1.0));
    if c0 >= c1 || r0 >= r1 {
        return Ok(grid);
    }

    let s = camera.supersampling;
    let step = 1.0 / s as f64;
    let samples = (s * s) as f64;
    let (r_in2, r_out2) = (r_in * r_in, r_out * r_out);
    let eps = camera.intensity_floor;
    for row in r0..r1 {
        for col in c0..c1 {
            let mut hits = 0usize;
            for j in 0..s {
                let dv = row as f64 + (j as f64 + 0.5) * step - cv;
                for i in 0..s {
                    let du = col as f64 + (i as f64 + 0.5) * step - cu;
                    let r2 = du * du + dv * dv;
                    if r2 >= r_in2 && r2 <= r_out2 {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                grid[(row, col)] = libm::log(hits as f64 / samples + eps);
            }
        }
    }
    Ok(grid)
}

/// Pixel bounding box `(x_min, x_max, y_min, y_max)` of the ring's outer
/// edge seen from `viewpoint`, clipped to the sensor; `None` when the ring is
/// entirely off-sensor.
pub fn projected_gate_box(
    gate: &SceneGate,
    camera: &CameraConfig,
    t: f64,
    viewpoint: Vec3,
) -> Result<Option<[f64; 4]>> {
    let relative = gate.center(t) - viewpoint;
    let (cu, cv) = camera.project(relative)?;
    let r = gate.outer_radius() * camera.focal_length / relative.x;
    let (w, h) = (camera.width as f64, camera.height as f64);
    let x_min = (cu - r).max(0.0);
    let x_max = (cu + r).min(w);
    let y_min = (cv - r).max(0.0);
    let y_max = (cv + r).min(h);
    if x_min >= x_max || y_min >= y_max {
        return Ok(None);
    }
    Ok(Some([x_min, x_max, y_min, y_max]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn camera(width: usize, height: usize) -> CameraModel {
        CameraModel::new(CameraConfig {
            width,
            height,
            ..CameraConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn optical_axis_projects_to_center() {
        let cfg = CameraConfig::default();
        for depth in [0.5, 2.0, 9.0] {
            let (u, v) = cfg.project(Vec3::new(depth, 0.0, 0.0)).unwrap();
            assert_eq!((u, v), (120.0, 90.0));
        }
    }

    #[test]
    fn lateral_equal_to_depth_with_focal_100() {
        let cfg = CameraConfig {
            focal_length: 100.0,
            ..CameraConfig::default()
        };
        let (u, _) = cfg.project(Vec3::new(3.0, 3.0, 0.0)).unwrap();
        assert_eq!(u, 220.0);
    }

    #[test]
    fn doubling_depth_halves_offset() {
        let cfg = CameraConfig::default();
        let (u1, v1) = cfg.project(Vec3::new(2.0, 0.4, -0.3)).unwrap();
        let (u2, v2) = cfg.project(Vec3::new(4.0, 0.4, -0.3)).unwrap();
        assert!(((u1 - 120.0) - 2.0 * (u2 - 120.0)).abs() < 1e-12);
        assert!(((v1 - 90.0) - 2.0 * (v2 - 90.0)).abs() < 1e-12);
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let cfg = CameraConfig::default();
        assert!(cfg.project(Vec3::new(0.0, 1.0, 0.0)).is_err());
        assert!(cfg.project(Vec3::new(-1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn zero_change_gives_no_events() {
        let mut cam = camera(8, 6);
        let same = cam.reference().clone();
        assert!(cam.generate_events(&same, 0, 1000).unwrap().is_empty());
    }

    #[test]
    fn single_pixel_fires_floor_of_ratio() {
        let mut cam = camera(8, 6);
        let mut next = cam.reference().clone();
        next[(2, 5)] += 0.75;
        let events = cam.generate_events(&next, 100, 200).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e.x == 5 && e.y == 2 && e.polarity == Polarity::On));
        assert_eq!(events[0].t, 150);
        assert_eq!(events[1].t, 200);
    }

    #[test]
    fn residual_carries_over() {
        let mut cam = camera(4, 4);
        let c = cam.config().contrast_threshold;
        let base = cam.reference()[(1, 1)];
        let mut next = cam.reference().clone();
        next[(1, 1)] = base + 1.9 * c;
        let first = cam.generate_events(&next, 0, 10).unwrap();
        next[(1, 1)] = base + 2.1 * c;
        let second = cam.generate_events(&next, 10, 20).unwrap();
        assert_eq!((first.len(), second.len()), (1, 1));
    }

    #[test]
    fn negative_change_fires_off_events() {
        let mut cam = camera(4, 4);
        let mut next = cam.reference().clone();
        next[(0, 3)] -= 0.95;
        let events = cam.generate_events(&next, 0, 30).unwrap();
        assert_eq!(events.len(), 3);
        assert!(events.iter().all(|e| e.polarity == Polarity::Off));
    }

    #[test]
    fn empty_or_reversed_interval_is_rejected() {
        let mut cam = camera(4, 4);
        let same = cam.reference().clone();
        assert!(cam.generate_events(&same, 5, 5).is_err());
        assert!(cam.generate_events(&same, 6, 5).is_err());
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let mut cam = camera(4, 4);
        let wrong = Grid::filled(3, 4, 0.0);
        assert!(cam.generate_events(&wrong, 0, 5).is_err());
    }

    #[test]
    fn events_are_sorted_with_tie_break() {
        let mut cam = camera(4, 3);
        let mut next = cam.reference().clone();
        next[(2, 0)] += 0.31;
        next[(0, 3)] += 0.31;
        next[(0, 1)] -= 0.31;
        let events = cam.generate_events(&next, 0, 10).unwrap();
        let coords: Vec<_> = events.iter().map(|e| (e.y, e.x)).collect();
        assert_eq!(coords, vec![(0, 1), (0, 3), (2, 0)]);
    }

    #[test]
    fn gate_off_sensor_renders_background() {
        let cfg = CameraConfig::default();
        let gate = SceneGate {
            depth: 2.0,
            center_y: 40.0,
            oscillation_bound: 40.0,
            lateral_speed: 0.0,
            ..SceneGate::default()
        };
        let grid = render_log_intensity(&gate, &cfg, 0.0).unwrap();
        let bg = cfg.background_log_intensity();
        assert!(grid.as_slice().iter().all(|&v| v == bg));
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = CameraConfig::default();
        let gate = SceneGate::default();
        let a = render_log_intensity(&gate, &cfg, 0.123).unwrap();
        let b = render_log_intensity(&gate, &cfg, 0.123).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn binary_rendering_has_two_levels() {
        let cfg = CameraConfig {
            supersampling: 1,
            ..CameraConfig::default()
        };
        let grid = render_log_intensity(&SceneGate::default(), &cfg, 0.05).unwrap();
        let (bg, fg) = (cfg.background_log_intensity(), cfg.foreground_log_intensity());
        assert!(grid.as_slice().iter().all(|&v| v == bg || v == fg));
        assert!(grid.as_slice().contains(&fg));
    }

    #[test]
    fn triangle_wave_stays_within_bound() {
        let gate = SceneGate {
            center_y: 0.3,
            oscillation_bound: 1.0,
            lateral_speed: -4.0,
            ..SceneGate::default()
        };
        assert!((gate.lateral_position(0.0) - 0.3).abs() < 1e-12);
        // Moving left: hits -1 after 0.325 s, then comes back.
        assert!((gate.lateral_position(0.325) + 1.0).abs() < 1e-12);
        assert!((gate.lateral_position(0.425) + 0.6).abs() < 1e-12);
        for k in 0..2000 {
            let y = gate.lateral_position(k as f64 * 0.0037);
            assert!(y.abs() <= 1.0 + 1e-12);
        }
    }
}
