//! Closed-loop gate-crossing episodes.
//!
//! Every control step renders the gate from the drone, turns the change into
//! events and feeds them to the LIF detector in fixed bins. Detections are
//! converted to metric lateral positions with a noisy depth reading. Once the
//! track is stable the drone departs on a minimum-jerk path whose duration
//! comes from the velocity policy, aimed at the predicted (or, for the
//! baseline, currently observed) gate position. The drone sits on the path;
//! energy is integrated from the thrust the path demands.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::energy_model::{self, DroneDynamics, MotorParams, PolyCoeffs};
use crate::error::{domain, Error, Result};
use crate::event_camera::{projected_gate_box, render_log_intensity_from, CameraConfig, CameraModel, Event, SceneGate};
use crate::geometry::Vec3;
use crate::pgnn::{LossWeights, MlpModel};
use crate::planner::{self, BoundaryState, GateObservation, Trajectory};
use crate::snn_detector::{iou, BoundingBox, LifConfig, SnnDetector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Aim at the gate position predicted for the arrival time.
    #[default]
    Predictive,
    /// Aim at the most recently observed gate position.
    DepthOnlyBaseline,
}

impl PlannerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Predictive => "predictive",
            Self::DepthOnlyBaseline => "depth-only-baseline",
        }
    }
}

/// Velocity grid used to fit per-depth energy curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub points: usize,
    /// Integration step of the flight-energy simulation (s).
    pub dt: f64,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            v_min: 1.0,
            v_max: 2.75,
            points: 32,
            dt: 1e-3,
        }
    }
}

impl FitGrid {
    pub fn velocities(&self) -> Vec<f64> {
        energy_model::linspace(self.v_min, self.v_max, self.points)
    }

    /// Fits the energy curve at one depth.
    pub fn fit_at(&self, depth: f64, dynamics: &DroneDynamics, motors: &MotorParams) -> Result<PolyCoeffs> {
        let samples = energy_model::generate_dataset(&[depth], &self.velocities(), dynamics, motors, self.dt)?;
        energy_model::fit_energy_poly(&samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Control and rendering step (s).
    pub dt: f64,
    pub gate: SceneGate,
    pub drone_start: Vec3,
    pub camera: CameraConfig,
    pub lif: LifConfig,
    /// `"analytic"` to fly at the fitted optimum directly, otherwise a path
    /// to a trained weights file (resolved by the caller).
    pub velocity_source: String,
    pub loss_weights: LossWeights,
    pub dynamics: DroneDynamics,
    pub motors: MotorParams,
    pub fit: FitGrid,
    pub power_kappa: f64,
    pub power_alpha: f64,
    /// Standard deviation of the depth reading (m).
    pub depth_noise_sigma: f64,
    pub mode: PlannerMode,
    pub seed: u64,
    /// Consecutive non-contradicting bins needed before departure.
    pub stable_bins: usize,
    /// Minimum IoU between successive boxes of one track.
    pub track_iou: f64,
    /// Accepted relative deviation of a box side from the ring diameter
    /// expected at the measured range.
    pub size_tolerance: f64,
    /// Boxes reaching within this many pixels of the image edge are
    /// treated as truncated and not measured.
    pub border_margin: u32,
    /// Predicted-vs-observed gate discrepancy that triggers a replan (m).
    pub replan_threshold: f64,
    /// Preferred spacing of the two observations behind a velocity estimate (s).
    pub velocity_window: f64,
    /// Episode fails when the detector has produced nothing by then (s).
    pub detection_timeout: f64,
    /// Episode fails when no stable track exists by then (s).
    pub departure_timeout: f64,
    /// Flight fails after this multiple of the planned flight time.
    pub timeout_factor: f64,
    /// No replanning when less than this remains of the flight (s).
    pub min_replan_time: f64,
    /// Perception stops closer than this to the gate plane (m).
    pub min_perception_depth: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            gate: SceneGate {
                depth: 3.0,
                oscillation_bound: 1.0,
                lateral_speed: 1.0,
                ..SceneGate::default()
            },
            drone_start: Vec3::ZERO,
            camera: CameraConfig::default(),
            lif: LifConfig::default(),
            velocity_source: String::from("analytic"),
            loss_weights: LossWeights::default(),
            dynamics: DroneDynamics::default(),
            motors: MotorParams::default(),
            fit: FitGrid::default(),
            power_kappa: 1.0,
            power_alpha: 0.2,
            depth_noise_sigma: 0.02,
            mode: PlannerMode::Predictive,
            seed: 0,
            stable_bins: 3,
            track_iou: 0.5,
            size_tolerance: 0.25,
            border_margin: 4,
            replan_threshold: 0.25,
            velocity_window: 0.1,
            detection_timeout: 1.0,
            departure_timeout: 5.0,
            timeout_factor: 3.0,
            min_replan_time: 0.15,
            min_perception_depth: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(domain("dt must be positive"));
        }
        if !(self.depth_noise_sigma >= 0.0) {
            return Err(domain("depth noise must be non-negative"));
        }
        self.gate.validate()?;
        self.camera.validate()?;
        self.lif.validate()?;
        self.loss_weights.validate()?;
        self.dynamics.validate()?;
        self.motors.validate()?;
        let frame_us = self.frame_us();
        if frame_us == 0 || !self.lif.bin_width.is_multiple_of(frame_us) {
            return Err(domain("detector bin width must be a whole number of control steps"));
        }
        if self.drone_start.x >= self.gate.depth - self.min_perception_depth {
            return Err(domain("drone must start in front of the gate"));
        }
        if !(self.power_kappa > 0.0) {
            return Err(domain("power_kappa must be positive"));
        }
        Ok(())
    }

    fn frame_us(&self) -> u64 {
        libm::round(self.dt * 1e6) as u64
    }
}

/// How the cruise velocity for a measured depth is chosen.
#[derive(Debug, Clone)]
pub enum VelocityPolicy {
    /// Minimizer of the energy curve fitted at the measured depth.
    Analytic,
    Network(MlpModel),
}

impl VelocityPolicy {
    pub fn velocity(&self, depth: f64, cfg: &SimConfig) -> Result<f64> {
        match self {
            Self::Analytic => {
                let poly = cfg.fit.fit_at(depth, &cfg.dynamics, &cfg.motors)?;
                Ok(energy_model::optimal_velocity(&poly).velocity)
            }
            Self::Network(model) => model.forward(depth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    Success,
    Missed,
    NoDetection,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub status: EpisodeStatus,
    pub success: bool,
    /// From departure to the gate plane (s).
    pub flight_time: f64,
    pub path_length: f64,
    /// Motor-model energy `sum 4 e i dt` (J).
    pub dynamic_energy: f64,
    /// `sum kappa F^alpha dt`.
    pub power_model_energy: f64,
    pub mean_iou: f64,
    /// Distance from the gate centre in the gate plane (m).
    pub miss_distance: f64,
    pub departure_time: f64,
    pub plans: usize,
    pub start: Vec3,
    pub crossing: Vec3,
}

/// One record per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub position: Vec3,
    pub gate_y: f64,
    pub detection: Option<BoundingBox>,
    /// Metric lateral gate position measured this step.
    pub measured_y: Option<f64>,
    pub y_star: Option<f64>,
    /// Total thrust demanded by the path (N); zero before departure.
    pub thrust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub metrics: SimMetrics,
    pub log: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy)]
struct Observation {
    t: f64,
    y: f64,
    z: f64,
    depth: f64,
}

/// Gate model the predictive planner committed to.
#[derive(Debug, Clone, Copy)]
struct Plan {
    t_obs: f64,
    y_obs: f64,
    v_r: f64,
}

struct Flight {
    trajectory: Trajectory,
    /// World time at which the trajectory starts.
    t0: f64,
    arrival: f64,
    plan: Option<Plan>,
}

impl Flight {
    fn state(&self, t: f64) -> BoundaryState {
        self.trajectory.boundary_state(t - self.t0)
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n > 0 {
        sum / n as f64
    } else {
        0.0
    }
}

/// Both box sides within `tol` (relative) of the expected ring diameter.
fn size_matches(b: &BoundingBox, expected: f64, tol: f64) -> bool {
    let ok = |side: u32| ((side + 1) as f64 - expected).abs() <= tol * expected;
    ok(b.x_max - b.x_min) && ok(b.y_max - b.y_min)
}

fn touches_border(b: &BoundingBox, cam: &CameraConfig, margin: u32) -> bool {
    let m = margin as usize;
    (b.x_min as usize) <= m || (b.y_min as usize) <= m || b.x_max as usize + 1 + m >= cam.width || b.y_max as usize + 1 + m >= cam.height
}

/// Ground-truth pixel box: every pixel the projected ring overlaps.
pub fn ground_truth_box(gate: &SceneGate, cam: &CameraConfig, t: f64, viewpoint: Vec3) -> Result<Option<BoundingBox>> {
    let Some([x0, x1, y0, y1]) = projected_gate_box(gate, cam, t, viewpoint)? else {
        return Ok(None);
    };
    let lo = |v: f64| libm::floor(v) as u32;
    let hi = |v: f64, lo: u32| (libm::ceil(v) as u32).saturating_sub(1).max(lo);
    let (bx0, by0) = (lo(x0), lo(y0));
    BoundingBox::new(bx0, hi(x1, bx0), by0, hi(y1, by0)).map(Some)
}

/// Velocity estimate from the newest observation and one roughly
/// `window` seconds older (or the oldest available).
fn observation_pair(history: &[Observation], window: f64) -> Option<GateObservation> {
    let last = history.last()?;
    let earlier = &history[..history.len() - 1];
    let first = earlier
        .iter()
        .rev()
        .find(|o| last.t - o.t >= window)
        .or_else(|| earlier.first())?;
    Some(GateObservation {
        y1: first.y,
        y2: last.y,
        dt: last.t - first.t,
    })
}

struct Runner<'a> {
    cfg: &'a SimConfig,
    policy: &'a VelocityPolicy,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Runner<'_> {
    fn depth_reading(&mut self, truth: f64) -> f64 {
        truth + self.noise.sample(&mut self.rng)
    }

    /// Trajectory from `from` (at world time `t`) to the gate plane at
    /// lateral `y`, arriving at `arrival`.
    fn flight_to(&self, from: BoundaryState, obs: &Observation, y: f64, t: f64, arrival: f64, plan: Option<Plan>) -> Result<Flight> {
        let target = Vec3::new(from.position.x + obs.depth, y, obs.z);
        let trajectory = Trajectory::from_boundary(from, BoundaryState::at_rest(target), arrival - t)?;
        Ok(Flight {
            trajectory,
            t0: t,
            arrival,
            plan,
        })
    }

    fn target_y(&self, history: &[Observation], arrival: f64) -> Result<(f64, Option<Plan>)> {
        let l = self.cfg.gate.oscillation_bound;
        let last = history.last().ok_or_else(|| domain("no observation to plan from"))?;
        match self.cfg.mode {
            PlannerMode::DepthOnlyBaseline => Ok((last.y, None)),
            PlannerMode::Predictive => {
                let v_r = match observation_pair(history, self.cfg.velocity_window) {
                    Some(obs) => planner::gate_velocity(&obs)?,
                    None => 0.0,
                };
                let y2 = last.y.clamp(-l, l);
                let pred = planner::predict_gate_position(y2, v_r, (arrival - last.t).max(0.0), l)?;
                let plan = Plan {
                    t_obs: last.t,
                    y_obs: y2,
                    v_r,
                };
                Ok((pred.y_star, Some(plan)))
            }
        }
    }

    fn run(mut self) -> Result<Episode> {
        let cfg = self.cfg;
        let cam_cfg = &cfg.camera;
        let gate = &cfg.gate;
        let frame_us = cfg.frame_us();
        let bin_us = cfg.lif.bin_width;
        let mut camera = CameraModel::new(cam_cfg.clone())?;
        let mut detector = SnnDetector::new(cfg.lif.clone(), cam_cfg.height, cam_cfg.width)?;

        let mut log = Vec::new();
        let mut pending: Vec<Event> = Vec::new();
        let mut bin_start: u64 = 0;
        let mut history: Vec<Observation> = Vec::new();
        let mut track: Option<BoundingBox> = None;
        let mut candidate: Option<(BoundingBox, usize)> = None;
        let mut streak = 0usize;
        let mut any_detection = false;
        let (mut iou_sum, mut iou_n) = (0.0, 0usize);

        let mut flight: Option<Flight> = None;
        let mut departure = 0.0;
        let mut plans = 0usize;
        let mut position = cfg.drone_start;
        let mut path_length = 0.0;
        let mut dynamic_energy = 0.0;
        let mut power_energy = 0.0;
        let mut timeout = f64::INFINITY;

        let finish = |status: EpisodeStatus, t: f64, pos: Vec3, stats: (f64, f64, f64, f64, usize, f64), log: Vec<StepRecord>| {
            let (path_length, dynamic_energy, power_energy, departure, plans, mean_iou) = stats;
            let g = gate.center(t);
            let miss = libm::sqrt((pos.y - g.y) * (pos.y - g.y) + (pos.z - g.z) * (pos.z - g.z));
            let status = match status {
                EpisodeStatus::Success if miss >= gate.aperture => EpisodeStatus::Missed,
                s => s,
            };
            let flown = matches!(status, EpisodeStatus::Success | EpisodeStatus::Missed);
            Episode {
                metrics: SimMetrics {
                    status,
                    success: status == EpisodeStatus::Success,
                    flight_time: if flown { t - departure } else { 0.0 },
                    path_length,
                    dynamic_energy,
                    power_model_energy: power_energy,
                    mean_iou,
                    miss_distance: if flown { miss } else { f64::INFINITY },
                    departure_time: departure,
                    plans,
                    start: cfg.drone_start,
                    crossing: pos,
                },
                log,
            }
        };

        let mut k: u64 = 0;
        loop {
            k += 1;
            let t = k as f64 * cfg.dt;
            let (t0_us, t1_us) = ((k - 1) * frame_us, k * frame_us);

            // Move along the current path.
            let mut thrust = 0.0;
            let mut crossed = false;
            if let Some(f) = &flight {
                let te = t.min(f.arrival);
                let s = f.trajectory.sample_clamped(te - f.t0);
                let mut next = s.position;
                if next.x >= gate.depth {
                    // Stop at the gate plane.
                    let frac = (gate.depth - position.x) / (next.x - position.x);
                    next = position + (next - position) * frac.clamp(0.0, 1.0);
                    crossed = true;
                }
                path_length += next.distance(position);
                position = next;
                thrust = cfg.dynamics.required_thrust(s.acceleration, s.velocity);
                dynamic_energy += energy_model::electrical_power(thrust, &cfg.dynamics, &cfg.motors) * cfg.dt;
                power_energy += energy_model::power_thrust(thrust, cfg.power_kappa, cfg.power_alpha)? * cfg.dt;
                if t >= f.arrival {
                    crossed = true;
                }
            }

            let mut record = StepRecord {
                t,
                position,
                gate_y: gate.lateral_position(t),
                detection: None,
                measured_y: None,
                y_star: None,
                thrust,
            };

            if crossed {
                log.push(record);
                let stats = (path_length, dynamic_energy, power_energy, departure, plans, mean(iou_sum, iou_n));
                return Ok(finish(EpisodeStatus::Success, t, position, stats, log));
            }
            if t > timeout {
                log.push(record);
                let stats = (path_length, dynamic_energy, power_energy, departure, plans, mean(iou_sum, iou_n));
                return Ok(finish(EpisodeStatus::Timeout, t, position, stats, log));
            }

            // Perception.
            let range = gate.depth - position.x;
            if range > cfg.min_perception_depth {
                // The sensor starts blank, so the first frame shows the gate appearing.
                let image = render_log_intensity_from(gate, cam_cfg, t, position)?;
                let mut events = camera.generate_events(&image, t0_us, t1_us)?;
                camera.add_noise(&mut events, t0_us, t1_us, &mut self.rng);
                pending.extend(events);
            }
            if t1_us >= bin_start + bin_us {
                let bin_end = bin_start + bin_us;
                let split = pending.partition_point(|e| e.t < bin_end);
                let in_bin: Vec<Event> = pending.drain(..split).collect();
                let det = detector.process_bin(&in_bin, bin_start)?;
                let t_mid = (bin_start as f64 + bin_us as f64 / 2.0) * 1e-6;
                bin_start = bin_end;

                if let Some(b) = det.bbox {
                    any_detection = true;
                    record.detection = Some(b);
                    if let Some(gt) = ground_truth_box(gate, cam_cfg, t_mid, position)? {
                        iou_sum += iou(&b, &gt);
                        iou_n += 1;
                    }
                }
                let depth = if det.bbox.is_some() { self.depth_reading(range) } else { range };
                let expected = 2.0 * gate.outer_radius() * cam_cfg.focal_length / depth;
                let usable = det
                    .bbox
                    .filter(|b| !touches_border(b, cam_cfg, cfg.border_margin) && size_matches(b, expected, cfg.size_tolerance));
                let mut fresh = None;
                if let Some(b) = usable {
                    let accepted = match (track, candidate) {
                        (None, _) => true,
                        (Some(prev), _) if iou(&prev, &b) >= cfg.track_iou => true,
                        // A consistent run of other boxes replaces the track.
                        (Some(_), Some((c, n))) if iou(&c, &b) >= cfg.track_iou && n + 1 >= cfg.stable_bins => true,
                        _ => false,
                    };
                    if accepted {
                        streak = if track.is_some_and(|p| iou(&p, &b) >= cfg.track_iou) { streak + 1 } else { 1 };
                        if candidate.is_some() && streak == 1 {
                            streak = cfg.stable_bins;
                        }
                        track = Some(b);
                        candidate = None;
                        let (cx, cy) = b.center();
                        let scale = depth / cam_cfg.focal_length;
                        let obs = Observation {
                            t: t_mid,
                            y: (cx as f64 - cam_cfg.width as f64 / 2.0) * scale + position.y,
                            z: (cam_cfg.height as f64 / 2.0 - cy as f64) * scale + position.z,
                            depth,
                        };
                        record.measured_y = Some(obs.y);
                        history.push(obs);
                        fresh = Some(obs);
                    } else {
                        candidate = match candidate {
                            Some((c, n)) if iou(&c, &b) >= cfg.track_iou => Some((b, n + 1)),
                            _ => Some((b, 1)),
                        };
                    }
                } else if track.is_some() && det.bbox.is_none() {
                    // Silence does not contradict the track.
                    streak += 1;
                }

                let can_replan = flight.as_ref().is_none_or(|f| f.arrival - t > cfg.min_replan_time);
                if flight.is_none() && track.is_some() && streak >= cfg.stable_bins {
                    // Depart.
                    let obs = *history.last().ok_or_else(|| domain("track without observation"))?;
                    let v = self.policy.velocity(obs.depth.max(1e-3), cfg)?;
                    let t_traj = obs.depth / v;
                    let arrival = t + t_traj;
                    let (y, plan) = self.target_y(&history, arrival)?;
                    record.y_star = Some(y);
                    let here = BoundaryState::at_rest(position);
                    flight = Some(self.flight_to(here, &obs, y, t, arrival, plan)?);
                    departure = t;
                    plans += 1;
                    timeout = t + cfg.timeout_factor * t_traj;
                } else if let (Some(f), Some(obs), true) = (&flight, fresh, can_replan) {
                    let diverged = match (cfg.mode, f.plan) {
                        (PlannerMode::DepthOnlyBaseline, _) => true,
                        (PlannerMode::Predictive, Some(p)) => {
                            let l = gate.oscillation_bound;
                            let expected = planner::predict_gate_position(p.y_obs, p.v_r, obs.t - p.t_obs, l)?.y_star;
                            (expected - obs.y).abs() > cfg.replan_threshold
                        }
                        (PlannerMode::Predictive, None) => true,
                    };
                    if diverged {
                        let arrival = f.arrival;
                        let (y, plan) = self.target_y(&history, arrival)?;
                        record.y_star = Some(y);
                        let from = f.state(t);
                        flight = Some(self.flight_to(from, &obs, y, t, arrival, plan)?);
                        plans += 1;
                    }
                }
            }

            if flight.is_none() && (!any_detection && t >= cfg.detection_timeout || t >= cfg.departure_timeout) {
                log.push(record);
                return Ok(finish(EpisodeStatus::NoDetection, t, position, (0.0, 0.0, 0.0, t, 0, mean(iou_sum, iou_n)), log));
            }
            log.push(record);
        }
    }
}

/// Runs one episode.
pub fn run_episode(cfg: &SimConfig, policy: &VelocityPolicy) -> Result<Episode> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.depth_noise_sigma).map_err(|_| domain("invalid depth noise"))?;
    Runner {
        cfg,
        policy,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        noise,
    }
    .run()
}

/// Recomputes `sum P(F) dt` from a step log.
pub fn energy_from_log(log: &[StepRecord], cfg: &SimConfig) -> f64 {
    log.iter()
        .filter(|r| r.thrust > 0.0)
        .map(|r| energy_model::electrical_power(r.thrust, &cfg.dynamics, &cfg.motors) * cfg.dt)
        .sum()
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub mode: PlannerMode,
    pub depth: f64,
    pub offset: f64,
}

impl SweepCase {
    /// The base config with this case's depth, lateral start offset and mode.
    pub fn config(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        cfg.mode = self.mode;
        cfg.gate.depth = base.drone_start.x + self.depth;
        cfg.drone_start.y = base.drone_start.y + self.offset;
        cfg
    }
}

/// All combinations in mode-major, then depth, then offset order.
pub fn sweep_cases(depths: &[f64], offsets: &[f64], modes: &[PlannerMode]) -> Result<Vec<SweepCase>> {
    if depths.is_empty() || offsets.is_empty() || modes.is_empty() {
        return Err(Error::Config("sweep lists must be non-empty".into()));
    }
    let mut out = Vec::with_capacity(depths.len() * offsets.len() * modes.len());
    for &mode in modes {
        for &depth in depths {
            for &offset in offsets {
                out.push(SweepCase { mode, depth, offset });
            }
        }
    }
    Ok(out)
}
