//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use neuronav_core::energy_model::linspace;
use neuronav_core::pgnn::PhysicsVariant;
use neuronav_core::sim::{self, PlannerMode, SweepCase};

use crate::formats::{self, FitRecord};
use crate::pipeline::{self, RunConfig};
use crate::plot::{self, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "neuronav", version, about = "Neuromorphic gate-navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration (SimConfig fields plus `energy_depths`, `train`, `sweep`, `track`).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Predictive,
    DepthOnlyBaseline,
}

impl From<ModeArg> for PlannerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Predictive => PlannerMode::Predictive,
            ModeArg::DepthOnlyBaseline => PlannerMode::DepthOnlyBaseline,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PhysicsArg {
    ZeroDerivative,
    DynamicsConsistency,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode; prints metrics and writes the step log.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Gate distance ahead of the start (m).
        #[arg(long)]
        depth: Option<f64>,
        /// Lateral start offset (m).
        #[arg(long, allow_hyphen_values = true)]
        offset: Option<f64>,
        /// Weights file replacing `velocity_source`.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// Run a depth x offset x mode grid; writes the metrics table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        depths: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offsets: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', value_enum)]
        modes: Option<Vec<ModeArg>>,
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        /// Also write SVG charts.
        #[arg(long)]
        plots: bool,
    },
    /// Train the velocity network on an energy dataset table.
    TrainPgnn {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/energy_dataset.csv`.
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda_physics: Option<f64>,
        #[arg(long)]
        lambda_energy: Option<f64>,
        #[arg(long, value_enum)]
        physics: Option<PhysicsArg>,
    },
    /// Simulate flight energy over the depth and velocity grid and fit curves.
    FitEnergy {
        #[command(flatten)]
        common: Common,
    },
    /// Score the detector against ground-truth boxes. Without input files a
    /// synthetic stream is generated and written first.
    TrackEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE", requires = "truth")]
        events: Option<PathBuf>,
        #[arg(long, value_name = "FILE", requires = "events")]
        truth: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let (cfg, base) = match &common.config {
        Some(path) => {
            if !path.is_file() {
                return Err(Failure::Usage(anyhow!("config file not found: {}", path.display())));
            }
            let cfg = RunConfig::load(path).map_err(Failure::Usage)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    let cfg = match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("cannot create {}", common.out.display()))
        .map_err(runtime)?;
    Ok((cfg, base))
}

fn apply_weights(cfg: &mut RunConfig, base: &mut PathBuf, weights: &Option<PathBuf>) {
    if let Some(w) = weights {
        cfg.sim.velocity_source = w.to_string_lossy().into_owned();
        *base = PathBuf::from(".");
    }
}

fn simulate(common: Common, mode: Option<ModeArg>, depth: Option<f64>, offset: Option<f64>, weights: Option<PathBuf>) -> Outcome {
    let (mut cfg, mut base) = load_config(&common)?;
    apply_weights(&mut cfg, &mut base, &weights);
    let mut sim_cfg = cfg.sim.clone();
    if depth.is_some() || offset.is_some() || mode.is_some() {
        let case = SweepCase {
            mode: mode.map_or(sim_cfg.mode, Into::into),
            depth: depth.unwrap_or(sim_cfg.gate.depth - sim_cfg.drone_start.x),
            offset: offset.unwrap_or(0.0),
        };
        sim_cfg = case.config(&sim_cfg);
    }
    let policy = pipeline::load_policy(&sim_cfg, &base).map_err(runtime)?;
    let episode = sim::run_episode(&sim_cfg, &policy).map_err(runtime)?;
    let out = &common.out;
    formats::write_episode_log(&out.join("episode_log.jsonl"), &episode.log).map_err(runtime)?;
    formats::write_json(&out.join("metrics.json"), &episode.metrics).map_err(runtime)?;
    let row = pipeline::SweepRow {
        case: SweepCase {
            mode: sim_cfg.mode,
            depth: sim_cfg.gate.depth - sim_cfg.drone_start.x,
            offset: sim_cfg.drone_start.y - cfg.sim.drone_start.y,
        },
        outcome: Ok(episode.metrics.clone()),
    };
    formats::write_text(&out.join("metrics.csv"), &formats::metrics_table(&[row])).map_err(runtime)?;
    println!("{}", serde_json::to_string_pretty(&episode.metrics).map_err(runtime)?);
    Ok(())
}

fn sweep(
    common: Common,
    depths: Option<Vec<f64>>,
    offsets: Option<Vec<f64>>,
    modes: Option<Vec<ModeArg>>,
    weights: Option<PathBuf>,
    plots: bool,
) -> Outcome {
    let (mut cfg, mut base) = load_config(&common)?;
    apply_weights(&mut cfg, &mut base, &weights);
    let mut settings = cfg.sweep.clone();
    if let Some(d) = depths {
        settings.depths = d;
    }
    if let Some(o) = offsets {
        settings.offsets = o;
    }
    if let Some(m) = modes {
        settings.modes = m.into_iter().map(Into::into).collect();
    }
    if settings.depths.is_empty() || settings.offsets.is_empty() || settings.modes.is_empty() {
        return Err(Failure::Usage(anyhow!("sweep lists must be non-empty")));
    }
    let policy = pipeline::load_policy(&cfg.sim, &base).map_err(runtime)?;
    let rows = pipeline::run_sweep(&cfg.sim, &settings, &policy).map_err(runtime)?;
    let summary = pipeline::summarize(&rows);
    let out = &common.out;
    formats::write_text(&out.join("metrics.csv"), &formats::metrics_table(&rows)).map_err(runtime)?;
    formats::write_text(&out.join("summary.csv"), &pipeline::summary_table(&summary)).map_err(runtime)?;
    for r in &rows {
        if let Err(e) = &r.outcome {
            eprintln!("episode {:?} failed: {e}", r.case);
        }
    }
    if plots {
        write_sweep_plots(out, &cfg, &settings, &rows).map_err(runtime)?;
    }
    print!("{}", pipeline::summary_table(&summary));
    Ok(())
}

fn write_sweep_plots(out: &Path, cfg: &RunConfig, settings: &pipeline::SweepSettings, rows: &[pipeline::SweepRow]) -> anyhow::Result<()> {
    let mut time_series = Vec::new();
    let mut path_series = Vec::new();
    for &mode in &settings.modes {
        let per_depth = |f: fn(&sim::SimMetrics) -> f64| -> Vec<(f64, f64)> {
            settings
                .depths
                .iter()
                .map(|&d| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.case.mode == mode && r.case.depth == d)
                        .filter_map(|r| r.outcome.as_ref().ok().map(f))
                        .collect();
                    (d, vals.iter().sum::<f64>() / vals.len().max(1) as f64)
                })
                .collect()
        };
        time_series.push(Series {
            label: format!("{} flight time (s)", mode.as_str()),
            points: per_depth(|m| m.flight_time),
        });
        path_series.push(Series {
            label: format!("{} path length (m)", mode.as_str()),
            points: per_depth(|m| m.path_length),
        });
    }
    time_series.extend(path_series);
    let svg = plot::line_chart("Flight time and path length vs depth", "depth (m)", "s / m", &time_series);
    formats::write_text(&out.join("flight_path_depth.svg"), &svg)?;

    let energy_cfg = RunConfig {
        energy_depths: settings.depths.clone(),
        ..cfg.clone()
    };
    let (_, polys) = pipeline::fit_energy(&energy_cfg)?;
    let series: Vec<Series> = polys
        .iter()
        .map(|p| Series {
            label: format!("d = {} m", p.depth),
            points: linspace(p.v_min, p.v_max, 64).into_iter().map(|v| (v, p.energy(v))).collect(),
        })
        .collect();
    let svg = plot::line_chart("Fitted flight energy vs cruise velocity", "velocity (m/s)", "energy (J)", &series);
    formats::write_text(&out.join("energy_velocity.svg"), &svg)?;
    Ok(())
}

fn fit_energy(common: Common) -> Outcome {
    let (cfg, _) = load_config(&common)?;
    let (samples, polys) = pipeline::fit_energy(&cfg).map_err(runtime)?;
    let out = &common.out;
    formats::write_energy_table(&out.join("energy_dataset.csv"), &samples).map_err(runtime)?;
    let records: Vec<FitRecord> = polys.iter().map(FitRecord::from_poly).collect();
    formats::write_json(&out.join("energy_fits.json"), &records).map_err(runtime)?;
    println!("depth_m,v_opt_mps,e_opt_J,boundary");
    for r in &records {
        println!("{},{:.4},{:.3},{}", r.depth_m, r.v_opt, r.e_opt, r.boundary);
    }
    Ok(())
}

fn train_pgnn(
    common: Common,
    dataset: Option<PathBuf>,
    epochs: Option<usize>,
    lambda_physics: Option<f64>,
    lambda_energy: Option<f64>,
    physics: Option<PhysicsArg>,
) -> Outcome {
    let (mut cfg, _) = load_config(&common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(l) = lambda_physics {
        cfg.sim.loss_weights.lambda_physics = l;
    }
    if let Some(l) = lambda_energy {
        cfg.sim.loss_weights.lambda_energy = l;
    }
    if let Some(p) = physics {
        cfg.train.physics = match p {
            PhysicsArg::ZeroDerivative => PhysicsVariant::ZeroDerivative,
            PhysicsArg::DynamicsConsistency => PhysicsVariant::DynamicsConsistency,
        };
    }
    let path = dataset.unwrap_or_else(|| common.out.join("energy_dataset.csv"));
    if !path.is_file() {
        return Err(Failure::Usage(anyhow!("dataset file not found: {} (run fit-energy first)", path.display())));
    }
    let samples = formats::read_energy_table(&path).map_err(runtime)?;
    let (model, report) = pipeline::train_pgnn(&samples, &cfg).map_err(runtime)?;
    let out = &common.out;
    formats::write_weights(&out.join("weights.json"), &model).map_err(runtime)?;
    formats::write_loss_history(&out.join("loss_history.csv"), &report.history).map_err(runtime)?;
    if let Some(last) = report.final_loss() {
        println!(
            "final loss {:.6e} (data {:.3e}, physics {:.3e}, energy {:.3e})",
            last.total, last.data, last.physics, last.energy
        );
    }
    Ok(())
}

fn track_eval(common: Common, events: Option<PathBuf>, truth: Option<PathBuf>) -> Outcome {
    let (cfg, _) = load_config(&common)?;
    let out = &common.out;
    let stream = match (events, truth) {
        (Some(e), Some(t)) => {
            for p in [&e, &t] {
                if !p.is_file() {
                    return Err(Failure::Usage(anyhow!("input file not found: {}", p.display())));
                }
            }
            neuronav_core::scenario::SyntheticStream {
                events: formats::read_events(&e).map_err(runtime)?,
                truth: formats::read_truth(&t).map_err(runtime)?,
            }
        }
        _ => {
            let s = pipeline::synthetic_track_stream(&cfg).map_err(runtime)?;
            formats::write_events(&out.join("events.csv"), &s.events).map_err(runtime)?;
            formats::write_truth(&out.join("truth.csv"), &s.truth).map_err(runtime)?;
            s
        }
    };
    let bin = cfg.sim.lif.bin_width;
    let last = stream
        .events
        .iter()
        .map(|e| e.t)
        .chain(stream.truth.iter().map(|g| g.t))
        .max()
        .unwrap_or(0);
    let t_end = (last / bin + 1) * bin;
    let report = pipeline::track_eval(&stream, &cfg, t_end).map_err(runtime)?;
    formats::write_text(&out.join("track_bins.csv"), &formats::track_table(&report)).map_err(runtime)?;
    let summary = formats::track_summary(&report);
    formats::write_text(&out.join("track_summary.csv"), &summary).map_err(runtime)?;
    print!("{summary}");
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand; returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Simulate {
            common,
            mode,
            depth,
            offset,
            weights,
        } => simulate(common, mode, depth, offset, weights),
        Command::Sweep {
            common,
            depths,
            offsets,
            modes,
            weights,
            plots,
        } => sweep(common, depths, offsets, modes, weights, plots),
        Command::TrainPgnn {
            common,
            dataset,
            epochs,
            lambda_physics,
            lambda_energy,
            physics,
        } => train_pgnn(common, dataset, epochs, lambda_physics, lambda_energy, physics),
        Command::FitEnergy { common } => fit_energy(common),
        Command::TrackEval { common, events, truth } => track_eval(common, events, truth),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
