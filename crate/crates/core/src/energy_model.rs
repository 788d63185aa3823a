//! Quadrotor actuation energy for straight flights.
//!
//! Each of the four BLDC motors obeys `e = R i + K_E w`. The rotor speed
//! follows from the thrust share (`F/4 = k_f w^2`), the current from the
//! propeller drag torque (`i = k_m w^2 / K_T + i_0`) and the flight energy is
//! the integral of `sum_j e_j i_j` over a trapezoidal velocity profile.
//!
//! Flying slowly burns hover power for a long time while flying fast needs
//! a large thrust against drag, so `E(v)` has an interior minimum for each
//! distance. A degree-5 fit of `E(v)` per depth locates that minimum through
//! the zero-derivative condition.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::Vec3;
use crate::polynomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorParams {
    /// Winding resistance `R` (ohm).
    pub resistance: f64,
    /// Back-EMF constant `K_E` (V s/rad).
    pub voltage_constant: f64,
    /// Torque constant `K_T` (N m/A).
    pub torque_constant: f64,
    /// Thrust coefficient `k_f` (N s^2/rad^2).
    pub thrust_coefficient: f64,
    /// Drag-torque coefficient `k_m` (N m s^2/rad^2).
    pub drag_torque_coefficient: f64,
    /// No-load friction current `i_0` (A).
    pub no_load_current: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            resistance: 0.2,
            voltage_constant: 0.01,
            torque_constant: 0.01,
            thrust_coefficient: 6.11e-8,
            drag_torque_coefficient: 1.5e-9,
            no_load_current: 0.3,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.resistance,
            self.voltage_constant,
            self.torque_constant,
            self.thrust_coefficient,
            self.drag_torque_coefficient,
            self.no_load_current,
        ];
        if all.iter().all(|&p| p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(domain("motor parameters must be finite and strictly positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroneDynamics {
    /// kg
    pub mass: f64,
    /// m/s^2
    pub gravity: f64,
    /// Linear drag coefficient (N s/m).
    pub drag: f64,
    /// Acceleration limit of the velocity profile (m/s^2).
    pub max_accel: f64,
    pub motor_count: usize,
}

impl Default for DroneDynamics {
    fn default() -> Self {
        Self {
            mass: 0.5,
            gravity: 9.81,
            drag: 4.0,
            max_accel: 4.0,
            motor_count: 4,
        }
    }
}

impl DroneDynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.max_accel > 0.0) || !(self.drag >= 0.0) || !(self.gravity >= 0.0) {
            return Err(domain("mass and max_accel must be positive; drag and gravity non-negative"));
        }
        if self.motor_count == 0 {
            return Err(domain("motor_count must be positive"));
        }
        Ok(())
    }

    /// Thrust magnitude needed to follow `accel` at `velocity` against
    /// gravity (along `-z`) and linear drag.
    pub fn required_thrust(&self, accel: Vec3, velocity: Vec3) -> f64 {
        let f = accel * self.mass + Vec3::new(0.0, 0.0, self.mass * self.gravity) + velocity * self.drag;
        f.norm()
    }

    /// [`required_thrust`](Self::required_thrust) for motion along one
    /// horizontal axis.
    pub fn required_thrust_1d(&self, accel: f64, speed: f64) -> f64 {
        self.required_thrust(Vec3::new(accel, 0.0, 0.0), Vec3::new(speed, 0.0, 0.0))
    }
}

/// `e = R i + K_E w`
pub fn motor_voltage(current: f64, omega: f64, params: &MotorParams) -> f64 {
    params.resistance * current + params.voltage_constant * omega
}

/// Electrical state of one motor when the airframe produces a given total thrust.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    /// rad/s
    pub omega: f64,
    /// A
    pub current: f64,
    /// V
    pub voltage: f64,
}

impl MotorState {
    pub fn power(&self) -> f64 {
        self.voltage * self.current
    }
}

pub fn motor_state(total_thrust: f64, dynamics: &DroneDynamics, motors: &MotorParams) -> MotorState {
    let per_motor = total_thrust.max(0.0) / dynamics.motor_count as f64;
    let omega = libm::sqrt(per_motor / motors.thrust_coefficient);
    let torque = motors.drag_torque_coefficient * omega * omega;
    let current = torque / motors.torque_constant + motors.no_load_current;
    MotorState {
        omega,
        current,
        voltage: motor_voltage(current, omega, motors),
    }
}

/// Total electrical power `sum_j e_j i_j` at a given total thrust.
pub fn electrical_power(total_thrust: f64, dynamics: &DroneDynamics, motors: &MotorParams) -> f64 {
    dynamics.motor_count as f64 * motor_state(total_thrust, dynamics, motors).power()
}

/// `P = kappa * F^alpha`
pub fn power_thrust(thrust: f64, kappa: f64, alpha: f64) -> Result<f64> {
    if thrust < 0.0 || thrust.is_nan() {
        return Err(domain("thrust must be non-negative"));
    }
    if !(kappa > 0.0) {
        return Err(domain("kappa must be positive"));
    }
    if thrust == 0.0 {
        return Ok(0.0);
    }
    Ok(kappa * libm::pow(thrust, alpha))
}

/// Rest-to-rest straight-line profile: accelerate at `a_max` to the cruise
/// speed, cruise, decelerate at `a_max`. Distances too short to reach the
/// cruise speed give a triangular profile peaking at `sqrt(d a_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityProfile {
    pub distance: f64,
    pub accel: f64,
    pub peak_speed: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
}

impl VelocityProfile {
    pub fn new(distance: f64, cruise_speed: f64, accel: f64) -> Result<Self> {
        if !(distance >= 0.0) || !(cruise_speed > 0.0) || !(accel > 0.0) {
            return Err(domain("profile needs d >= 0, v > 0, a > 0"));
        }
        let (peak_speed, t_cruise) = if cruise_speed * cruise_speed >= distance * accel {
            (libm::sqrt(distance * accel), 0.0)
        } else {
            (cruise_speed, distance / cruise_speed - cruise_speed / accel)
        };
        Ok(Self {
            distance,
            accel,
            peak_speed,
            t_accel: peak_speed / accel,
            t_cruise,
        })
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.t_accel + self.t_cruise
    }

    /// `(position, velocity, acceleration)` at time `t`, clamped to the
    /// profile's ends.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        let (a, vp, ta, tc) = (self.accel, self.peak_speed, self.t_accel, self.t_cruise);
        if t <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if t < ta {
            (0.5 * a * t * t, a * t, a)
        } else if t < ta + tc {
            (0.5 * vp * ta + vp * (t - ta), vp, 0.0)
        } else if t < self.duration() {
            let s = t - ta - tc;
            (0.5 * vp * ta + vp * tc + vp * s - 0.5 * a * s * s, vp - a * s, -a)
        } else {
            (self.distance, 0.0, 0.0)
        }
    }
}

/// Integrates `sum_j e_j i_j` over the trapezoidal profile for a flight of
/// `distance` at `cruise_speed`. Each phase is stepped at `dt` with a
/// shorter final step; the integrand is sampled at step midpoints.
pub fn simulate_flight_energy(
    distance: f64,
    cruise_speed: f64,
    dynamics: &DroneDynamics,
    motors: &MotorParams,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(domain("time step must be positive"));
    }
    if !(cruise_speed > 0.0) {
        return Err(domain("cruise speed must be positive"));
    }
    if !(distance >= 0.0) {
        return Err(domain("distance must be non-negative"));
    }
    if distance == 0.0 {
        return Ok(0.0);
    }
    let profile = VelocityProfile::new(distance, cruise_speed, dynamics.max_accel)?;
    let power = |t: f64| {
        let (_, v, a) = profile.state_at(t);
        electrical_power(dynamics.required_thrust_1d(a, v), dynamics, motors)
    };
    let (ta, tc) = (profile.t_accel, profile.t_cruise);
    let phases = [(0.0, ta), (ta, ta + tc), (ta + tc, 2.0 * ta + tc)];
    let mut energy = 0.0;
    for (start, end) in phases {
        let mut t = start;
        while t < end {
            let h = dt.min(end - t);
            energy += power(t + 0.5 * h) * h;
            t += h;
        }
    }
    Ok(energy)
}

/// One `{depth, velocity, energy}` training triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub depth: f64,
    pub velocity: f64,
    pub energy: f64,
}

/// One sample per `(depth, velocity)` pair, depth-major.
pub fn generate_dataset(
    depths: &[f64],
    velocities: &[f64],
    dynamics: &DroneDynamics,
    motors: &MotorParams,
    dt: f64,
) -> Result<Vec<EnergySample>> {
    if depths.is_empty() || velocities.is_empty() {
        return Err(domain("depth and velocity grids must be non-empty"));
    }
    dynamics.validate()?;
    motors.validate()?;
    let mut out = Vec::with_capacity(depths.len() * velocities.len());
    for &depth in depths {
        for &velocity in velocities {
            let energy = simulate_flight_energy(depth, velocity, dynamics, motors, dt)?;
            out.push(EnergySample {
                depth,
                velocity,
                energy,
            });
        }
    }
    Ok(out)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Degree-5 energy curve for one depth in normalized velocity
/// `u = (v - v_min) / (v_max - v_min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub depth: f64,
    /// `c0..c5`, ascending powers of `u`.
    pub coeffs: [f64; 6],
    pub v_min: f64,
    pub v_max: f64,
    /// Root-mean-square residual of the fit (J).
    pub rms_residual: f64,
}

impl PolyCoeffs {
    /// Re-expresses `E(v) = sum a_k v^k` (degree <= 5) in normalized units.
    pub fn from_velocity_coeffs(depth: f64, raw: &[f64], v_min: f64, v_max: f64) -> Result<Self> {
        if raw.len() > 6 {
            return Err(domain("at most six coefficients"));
        }
        if !(v_min < v_max) {
            return Err(domain("velocity range must satisfy v_min < v_max"));
        }
        // v = v_min + s u; expand each v^k binomially.
        let s = v_max - v_min;
        let mut coeffs = [0.0; 6];
        for (k, &a) in raw.iter().enumerate() {
            let mut binom = 1.0;
            for (j, c) in coeffs.iter_mut().enumerate().take(k + 1) {
                *c += a * binom * libm::pow(v_min, (k - j) as f64) * libm::pow(s, j as f64);
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        Ok(Self {
            depth,
            coeffs,
            v_min,
            v_max,
            rms_residual: 0.0,
        })
    }

    pub fn span(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.v_min) / self.span()
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.v_min + u * self.span()
    }

    /// `E(u)`
    pub fn energy_u(&self, u: f64) -> f64 {
        polynomial::eval(&self.coeffs, u)
    }

    /// `dE/du`
    pub fn slope_u(&self, u: f64) -> f64 {
        polynomial::eval(&polynomial::derivative(&self.coeffs), u)
    }

    /// `d^2E/du^2`
    pub fn curvature_u(&self, u: f64) -> f64 {
        polynomial::eval(&polynomial::derivative(&polynomial::derivative(&self.coeffs)), u)
    }

    pub fn energy(&self, v: f64) -> f64 {
        self.energy_u(self.normalize(v))
    }

    /// `dE/dv`
    pub fn slope(&self, v: f64) -> f64 {
        self.slope_u(self.normalize(v)) / self.span()
    }

    /// Energy with the curve continued linearly (value and slope matched)
    /// beyond the fitted range, where the raw quintic is meaningless.
    pub fn energy_extended_u(&self, u: f64) -> f64 {
        let edge = u.clamp(0.0, 1.0);
        self.energy_u(edge) + self.slope_u(edge) * (u - edge)
    }

    /// Derivative of [`energy_extended_u`](Self::energy_extended_u).
    pub fn slope_extended_u(&self, u: f64) -> f64 {
        self.slope_u(u.clamp(0.0, 1.0))
    }

    /// Second derivative of [`energy_extended_u`](Self::energy_extended_u);
    /// zero outside the fitted range.
    pub fn curvature_extended_u(&self, u: f64) -> f64 {
        if (0.0..=1.0).contains(&u) {
            self.curvature_u(u)
        } else {
            0.0
        }
    }
}

/// Least-squares degree-5 fit of `E(v)` for samples taken at one depth.
pub fn fit_energy_poly(samples: &[EnergySample]) -> Result<PolyCoeffs> {
    let Some(first) = samples.first() else {
        return Err(Error::Underdetermined { needed: 6, got: 0 });
    };
    if samples.iter().any(|s| s.depth != first.depth) {
        return Err(domain("all samples must share one depth"));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.velocity).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 6 {
        return Err(Error::Underdetermined {
            needed: 6,
            got: distinct.len(),
        });
    }
    let (v_min, v_max) = (distinct[0], distinct[distinct.len() - 1]);
    let span = v_max - v_min;
    let us: Vec<f64> = samples.iter().map(|s| (s.velocity - v_min) / span).collect();
    let es: Vec<f64> = samples.iter().map(|s| s.energy).collect();
    let fitted = polynomial::least_squares_fit(&us, &es, 5);
    let mut coeffs = [0.0; 6];
    coeffs.copy_from_slice(&fitted);
    let sse: f64 = us
        .iter()
        .zip(&es)
        .map(|(&u, &e)| {
            let r = polynomial::eval(&coeffs, u) - e;
            r * r
        })
        .sum();
    Ok(PolyCoeffs {
        depth: first.depth,
        coeffs,
        v_min,
        v_max,
        rms_residual: libm::sqrt(sse / samples.len() as f64),
    })
}

/// Fits one polynomial per distinct depth, in ascending depth order.
pub fn fit_per_depth(samples: &[EnergySample]) -> Result<Vec<PolyCoeffs>> {
    let mut depths: Vec<f64> = samples.iter().map(|s| s.depth).collect();
    depths.sort_by(f64::total_cmp);
    depths.dedup();
    depths
        .iter()
        .map(|&d| {
            let at: Vec<EnergySample> = samples.iter().copied().filter(|s| s.depth == d).collect();
            fit_energy_poly(&at)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalVelocity {
    /// m/s
    pub velocity: f64,
    /// Fitted energy at the optimum (J).
    pub energy: f64,
    /// The minimizer is an end of the fitted range rather than a stationary point.
    pub boundary: bool,
}

/// Global minimizer of the fitted curve over its velocity range: the real
/// roots of `dE/du` in `[0, 1]` compete with both endpoints.
pub fn optimal_velocity(poly: &PolyCoeffs) -> OptimalVelocity {
    let stationary = polynomial::real_roots_in(&polynomial::derivative(&poly.coeffs), 0.0, 1.0);
    let mut best = (0.0, poly.energy_u(0.0), true);
    let e1 = poly.energy_u(1.0);
    if e1 < best.1 {
        best = (1.0, e1, true);
    }
    for u in stationary {
        let e = poly.energy_u(u);
        if e < best.1 {
            best = (u, e, false);
        }
    }
    OptimalVelocity {
        velocity: poly.denormalize(best.0),
        energy: best.1,
        boundary: best.2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motor_voltage_examples() {
        let p = MotorParams::default();
        assert_eq!(motor_voltage(0.0, 0.0, &p), 0.0);
        let q = MotorParams {
            resistance: 0.2,
            voltage_constant: 0.01,
            ..p.clone()
        };
        assert!((motor_voltage(10.0, 1000.0, &q) - 12.0).abs() < 1e-12);
        let (i, w) = (3.7, 4100.0);
        assert!((motor_voltage(2.0 * i, 2.0 * w, &p) - 2.0 * motor_voltage(i, w, &p)).abs() < 1e-9);
    }

    #[test]
    fn power_thrust_examples() {
        assert_eq!(power_thrust(0.0, 1.0, 0.2).unwrap(), 0.0);
        assert!((power_thrust(4.0, 1.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        let p1 = power_thrust(3.0, 2.5, 1.0).unwrap();
        let p2 = power_thrust(6.0, 2.5, 1.0).unwrap();
        assert!((p2 - 2.0 * p1).abs() < 1e-12);
        assert!(power_thrust(-1.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn zero_distance_costs_nothing() {
        let e = simulate_flight_energy(0.0, 2.0, &DroneDynamics::default(), &MotorParams::default(), 1e-3).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn invalid_simulation_inputs() {
        let (dy, mo) = (DroneDynamics::default(), MotorParams::default());
        assert!(simulate_flight_energy(3.0, 2.0, &dy, &mo, 0.0).is_err());
        assert!(simulate_flight_energy(3.0, 0.0, &dy, &mo, 1e-3).is_err());
        assert!(simulate_flight_energy(3.0, -1.0, &dy, &mo, 1e-3).is_err());
    }

    #[test]
    fn profile_reaches_distance() {
        for (d, v) in [(5.0, 2.0), (1.0, 8.0), (9.0, 1.5)] {
            let p = VelocityProfile::new(d, v, 4.0).unwrap();
            let (x, vel, _) = p.state_at(p.duration());
            assert!((x - d).abs() < 1e-12);
            assert_eq!(vel, 0.0);
            // Position is continuous at the decel boundary.
            let tb = p.t_accel + p.t_cruise;
            let (x1, _, _) = p.state_at(tb - 1e-9);
            let (x2, _, _) = p.state_at(tb + 1e-9);
            assert!((x1 - x2).abs() < 1e-6);
        }
    }

    #[test]
    fn hover_power_is_positive() {
        let dy = DroneDynamics::default();
        let p = electrical_power(dy.required_thrust_1d(0.0, 0.0), &dy, &MotorParams::default());
        assert!(p > 0.0);
    }

    #[test]
    fn vertex_of_parabola() {
        // 5 + (v - 3)^2 = 14 - 6 v + v^2
        let poly = PolyCoeffs::from_velocity_coeffs(1.0, &[14.0, -6.0, 1.0], 0.0, 6.0).unwrap();
        let opt = optimal_velocity(&poly);
        assert!((opt.velocity - 3.0).abs() < 1e-9);
        assert!((opt.energy - 5.0).abs() < 1e-9);
        assert!(!opt.boundary);
    }

    #[test]
    fn increasing_curve_is_boundary_minimum() {
        let poly = PolyCoeffs {
            depth: 1.0,
            coeffs: [2.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            v_min: 0.5,
            v_max: 4.0,
            rms_residual: 0.0,
        };
        let opt = optimal_velocity(&poly);
        assert_eq!(opt.velocity, 0.5);
        assert!(opt.boundary);
    }

    #[test]
    fn fit_needs_six_distinct_velocities() {
        let s: Vec<_> = (0..10)
            .map(|i| EnergySample {
                depth: 2.0,
                velocity: 1.0 + (i % 5) as f64,
                energy: 1.0,
            })
            .collect();
        assert_eq!(
            fit_energy_poly(&s).unwrap_err(),
            Error::Underdetermined { needed: 6, got: 5 }
        );
    }

    #[test]
    fn dataset_cardinality() {
        let (dy, mo) = (DroneDynamics::default(), MotorParams::default());
        assert_eq!(generate_dataset(&[3.0], &[2.0], &dy, &mo, 1e-3).unwrap().len(), 1);
        let ds = generate_dataset(&[2.0, 3.0, 4.0], &[1.0, 1.5], &dy, &mo, 1e-3).unwrap();
        assert_eq!(ds.len(), 6);
        assert!(generate_dataset(&[], &[1.0], &dy, &mo, 1e-3).is_err());
    }
}
