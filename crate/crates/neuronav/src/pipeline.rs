//! Experiment drivers shared by the CLI and the tests.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use neuronav_core::energy_model::{self, EnergySample, PolyCoeffs};
use neuronav_core::event_camera::SceneGate;
use neuronav_core::pgnn::{self, MlpModel, TrainConfig, TrainReport, TrainingSet};
use neuronav_core::scenario::{self, SyntheticStream, TrackReport};
use neuronav_core::sim::{self, PlannerMode, SimConfig, SimMetrics, SweepCase, VelocityPolicy};
use neuronav_core::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    /// Gate distances ahead of the start (m).
    pub depths: Vec<f64>,
    /// Lateral start offsets (m).
    pub offsets: Vec<f64>,
    pub modes: Vec<PlannerMode>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            depths: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            offsets: vec![-2.0, 0.0, 2.0],
            modes: vec![PlannerMode::Predictive, PlannerMode::DepthOnlyBaseline],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSettings {
    /// Stream length (s).
    pub duration: f64,
    /// Lateral gate speed of the synthetic scene (m/s).
    pub gate_speed: f64,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            duration: 1.0,
            gate_speed: 4.0,
        }
    }
}

/// The CLI configuration: every `SimConfig` field at top level plus
/// sections for the other subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    /// Depths of the energy dataset (m).
    pub energy_depths: Vec<f64>,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    pub track: TrackSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            energy_depths: (2..=9).map(f64::from).collect(),
            train: TrainConfig::default(),
            sweep: SweepSettings::default(),
            track: TrackSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        formats::read_json(path)
    }

    /// Applies a seed to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self.train.seed = seed;
        self
    }
}

/// Simulated dataset plus one fitted curve per depth.
pub fn fit_energy(cfg: &RunConfig) -> Result<(Vec<EnergySample>, Vec<PolyCoeffs>)> {
    let sim = &cfg.sim;
    let samples =
        energy_model::generate_dataset(&cfg.energy_depths, &sim.fit.velocities(), &sim.dynamics, &sim.motors, sim.fit.dt)?;
    let polys = energy_model::fit_per_depth(&samples)?;
    Ok((samples, polys))
}

pub fn train_pgnn(samples: &[EnergySample], cfg: &RunConfig) -> Result<(MlpModel, TrainReport)> {
    let data = TrainingSet::from_energy_samples(samples)?;
    let mut model = MlpModel::from_config(&cfg.train)?;
    let report = pgnn::train(&mut model, &data, cfg.sim.loss_weights, &cfg.train)?;
    Ok((model, report))
}

/// `"analytic"`, or a weights file resolved against `base_dir`.
pub fn load_policy(sim: &SimConfig, base_dir: &Path) -> Result<VelocityPolicy> {
    if sim.velocity_source == "analytic" {
        return Ok(VelocityPolicy::Analytic);
    }
    let mut path = PathBuf::from(&sim.velocity_source);
    if path.is_relative() {
        path = base_dir.join(path);
    }
    let model = formats::read_weights(&path).with_context(|| format!("loading weights for velocity_source {}", sim.velocity_source))?;
    Ok(VelocityPolicy::Network(model))
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub case: SweepCase,
    pub outcome: std::result::Result<SimMetrics, String>,
}

/// Runs every case in parallel; rows come back in grid order.
pub fn run_sweep(base: &SimConfig, settings: &SweepSettings, policy: &VelocityPolicy) -> Result<Vec<SweepRow>> {
    let cases = sim::sweep_cases(&settings.depths, &settings.offsets, &settings.modes)?;
    Ok(cases
        .into_par_iter()
        .map(|case| {
            let outcome = sim::run_episode(&case.config(base), policy)
                .map(|e| e.metrics)
                .map_err(|e| e.to_string());
            SweepRow { case, outcome }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PlannerMode,
    pub episodes: usize,
    pub successes: usize,
    pub mean_flight_time: f64,
    pub mean_path_length: f64,
    pub mean_energy: f64,
}

impl ModeSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes.max(1) as f64
    }
}

/// Per-mode means over the episodes that ran to completion.
pub fn summarize(rows: &[SweepRow]) -> Vec<ModeSummary> {
    let mut modes: Vec<PlannerMode> = Vec::new();
    for r in rows {
        if !modes.contains(&r.case.mode) {
            modes.push(r.case.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let of_mode: Vec<&SweepRow> = rows.iter().filter(|r| r.case.mode == mode).collect();
            let ok: Vec<&SimMetrics> = of_mode.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let n = ok.len().max(1) as f64;
            ModeSummary {
                mode,
                episodes: of_mode.len(),
                successes: ok.iter().filter(|m| m.success).count(),
                mean_flight_time: ok.iter().map(|m| m.flight_time).sum::<f64>() / n,
                mean_path_length: ok.iter().map(|m| m.path_length).sum::<f64>() / n,
                mean_energy: ok.iter().map(|m| m.dynamic_energy).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn summary_table(summary: &[ModeSummary]) -> String {
    let mut s = String::from("mode,episodes,success_rate,mean_flight_time_s,mean_path_length_m,mean_energy_J\n");
    for m in summary {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.mode.as_str(),
            m.episodes,
            m.success_rate(),
            m.mean_flight_time,
            m.mean_path_length,
            m.mean_energy
        ));
    }
    s
}

/// Static-camera stream of the configured gate moving at `track.gate_speed`.
pub fn synthetic_track_stream(cfg: &RunConfig) -> Result<SyntheticStream> {
    let gate = SceneGate {
        lateral_speed: cfg.track.gate_speed,
        ..cfg.sim.gate.clone()
    };
    Ok(scenario::synthetic_stream(
        &gate,
        &cfg.sim.camera,
        Vec3::ZERO,
        cfg.track.duration,
        cfg.sim.dt,
        cfg.sim.lif.bin_width,
        cfg.sim.seed,
    )?)
}

pub fn track_eval(stream: &SyntheticStream, cfg: &RunConfig, t_end: u64) -> Result<TrackReport> {
    Ok(scenario::track_eval(&stream.events, &stream.truth, &cfg.sim.lif, cfg.sim.camera.dims(), t_end)?)
}
