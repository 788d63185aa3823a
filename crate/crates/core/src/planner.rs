//! Gate-position prediction and minimum-jerk trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::Vec3;

/// Two consecutive metric gate positions `dt` seconds apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateObservation {
    pub y1: f64,
    pub y2: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePrediction {
    /// Estimated lateral gate velocity (m/s).
    pub v_r: f64,
    /// Predicted lateral position at arrival (m).
    pub y_star: f64,
    pub bounced: bool,
}

/// `(y2 - y1) / dt`
pub fn gate_velocity(obs: &GateObservation) -> Result<f64> {
    if !(obs.dt > 0.0) {
        return Err(domain("observation interval must be positive"));
    }
    Ok((obs.y2 - obs.y1) / obs.dt)
}

/// Predicts where a gate bouncing between `-L` and `L` will be after
/// `t_traj` seconds, allowing a single reversal. Further reversals are not
/// modelled; the result is clamped to `[-L, L]`.
pub fn predict_gate_position(y2: f64, v_r: f64, t_traj: f64, half_range: f64) -> Result<GatePrediction> {
    let l = half_range;
    if !(l > 0.0) {
        return Err(domain("oscillation bound must be positive"));
    }
    if !(y2.abs() <= l) {
        return Err(domain("gate position lies outside the oscillation bound"));
    }
    if !(t_traj >= 0.0) || !v_r.is_finite() {
        return Err(domain("flight time must be non-negative and velocity finite"));
    }
    let d1 = v_r * t_traj;
    // Distance to the boundary the gate is heading for.
    let d2 = if v_r > 0.0 { l - y2 } else { y2 + l };
    let (y_star, bounced) = if d1.abs() > d2.abs() {
        let x = d1.abs() - d2.abs();
        (if v_r > 0.0 { l - x } else { -l + x }, true)
    } else {
        (y2 + d1, false)
    };
    Ok(GatePrediction {
        v_r,
        y_star: y_star.clamp(-l, l),
        bounced,
    })
}

/// Brute-force reference: steps the gate in increments of at most `dt`,
/// reflecting off `±L` as often as needed.
pub fn reflect_oracle(y2: f64, v_r: f64, t: f64, half_range: f64, dt: f64) -> f64 {
    if !(dt > 0.0) || t <= 0.0 || v_r == 0.0 {
        return y2;
    }
    let l = half_range;
    let steps = libm::ceil(t / dt) as u64;
    let h = t / steps as f64;
    let (mut y, mut v) = (y2, v_r);
    for _ in 0..steps {
        y += v * h;
        if y > l {
            y = 2.0 * l - y;
            v = -v;
        } else if y < -l {
            y = -2.0 * l - y;
            v = -v;
        }
    }
    y
}

/// Position, velocity, acceleration and jerk at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
}

/// Boundary state for [`Trajectory::from_boundary`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl BoundaryState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

/// Per-axis quintic in normalized time `tau = t / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Vec3,
    pub end: Vec3,
    pub duration: f64,
    /// `coeffs[axis][k]` multiplies `tau^k`; axes are x, y, z.
    pub coeffs: [[f64; 6]; 3],
}

fn components(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn horner(c: &[f64], tau: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * tau + k)
}

impl Trajectory {
    /// Rest-to-rest minimum-jerk path: `start + (end - start) s(tau)` with
    /// `s = 10 tau^3 - 15 tau^4 + 6 tau^5`.
    pub fn min_jerk(start: Vec3, end: Vec3, duration: f64) -> Result<Self> {
        Self::from_boundary(BoundaryState::at_rest(start), BoundaryState::at_rest(end), duration)
    }

    /// Quintic matching position, velocity and acceleration at both ends.
    pub fn from_boundary(from: BoundaryState, to: BoundaryState, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(domain("trajectory duration must be positive"));
        }
        let t = duration;
        let (p0, v0, a0) = (components(from.position), components(from.velocity), components(from.acceleration));
        let (p1, v1, a1) = (components(to.position), components(to.velocity), components(to.acceleration));
        let mut coeffs = [[0.0; 6]; 3];
        for axis in 0..3 {
            let dp = p1[axis] - p0[axis];
            let (v0, v1) = (v0[axis] * t, v1[axis] * t);
            let (a0, a1) = (a0[axis] * t * t, a1[axis] * t * t);
            coeffs[axis] = [
                p0[axis],
                v0,
                0.5 * a0,
                10.0 * dp - 6.0 * v0 - 4.0 * v1 - 1.5 * a0 + 0.5 * a1,
                -15.0 * dp + 8.0 * v0 + 7.0 * v1 + 1.5 * a0 - a1,
                6.0 * dp - 3.0 * v0 - 3.0 * v1 - 0.5 * a0 + 0.5 * a1,
            ];
        }
        Ok(Self {
            start: from.position,
            end: to.position,
            duration,
            coeffs,
        })
    }

    pub fn sample(&self, t: f64) -> Result<TrajectorySample> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(domain("sample time lies outside the trajectory"));
        }
        Ok(self.sample_clamped(t))
    }

    /// Like [`sample`](Self::sample) with `t` clamped into `[0, T]`.
    pub fn sample_clamped(&self, t: f64) -> TrajectorySample {
        let tau = (t / self.duration).clamp(0.0, 1.0);
        let big_t = self.duration;
        let mut out = [[0.0; 3]; 4];
        for (axis, c) in self.coeffs.iter().enumerate() {
            let d1 = [c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4], 5.0 * c[5]];
            let d2 = [2.0 * c[2], 6.0 * c[3], 12.0 * c[4], 20.0 * c[5]];
            let d3 = [6.0 * c[3], 24.0 * c[4], 60.0 * c[5]];
            out[0][axis] = horner(c, tau);
            out[1][axis] = horner(&d1, tau) / big_t;
            out[2][axis] = horner(&d2, tau) / (big_t * big_t);
            out[3][axis] = horner(&d3, tau) / (big_t * big_t * big_t);
        }
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        TrajectorySample {
            position: v(out[0]),
            velocity: v(out[1]),
            acceleration: v(out[2]),
            jerk: v(out[3]),
        }
    }

    pub fn boundary_state(&self, t: f64) -> BoundaryState {
        let s = self.sample_clamped(t);
        BoundaryState {
            position: s.position,
            velocity: s.velocity,
            acceleration: s.acceleration,
        }
    }
}
