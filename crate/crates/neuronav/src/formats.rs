//! Text and JSON file formats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use neuronav_core::energy_model::{optimal_velocity, EnergySample, PolyCoeffs};
use neuronav_core::event_camera::{Event, Polarity};
use neuronav_core::pgnn::{LossBreakdown, MlpModel};
use neuronav_core::scenario::{TrackReport, TruthBox};
use neuronav_core::sim::StepRecord;
use neuronav_core::snn_detector::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::pipeline::SweepRow;

pub const EVENT_HEADER: &str = "# t_us,x,y,p";
pub const TRUTH_HEADER: &str = "# t_us,x_min,x_max,y_min,y_max";
pub const METRICS_HEADER: &str = "mode,depth_m,offset_x_m,flight_time_s,path_length_m,energy_J,success,mean_iou,miss_m";

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity.sign())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(path, false)?.deserialize::<(u64, u32, u32, i64)>().enumerate() {
        let (t, x, y, p) = row.with_context(|| format!("{}: bad event row {}", path.display(), i + 1))?;
        let Some(polarity) = Polarity::from_sign(p) else {
            bail!("{}: polarity must be 1 or -1, got {p}", path.display());
        };
        out.push(Event { t, y, x, polarity });
    }
    Ok(out)
}

pub fn write_truth(path: &Path, truth: &[TruthBox]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{TRUTH_HEADER}")?;
    for g in truth {
        let b = g.bbox;
        writeln!(w, "{},{},{},{},{}", g.t, b.x_min, b.x_max, b.y_min, b.y_max)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthBox>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(path, false)?.deserialize::<(u64, u32, u32, u32, u32)>().enumerate() {
        let (t, x0, x1, y0, y1) = row.with_context(|| format!("{}: bad box row {}", path.display(), i + 1))?;
        out.push(TruthBox {
            t,
            bbox: BoundingBox::new(x0, x1, y0, y1)?,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct EnergyRow {
    depth_m: f64,
    velocity_mps: f64,
    #[serde(rename = "energy_J")]
    energy_j: f64,
}

pub fn write_energy_table(path: &Path, samples: &[EnergySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for s in samples {
        w.serialize(EnergyRow {
            depth_m: s.depth,
            velocity_mps: s.velocity,
            energy_j: s.energy,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_energy_table(path: &Path) -> Result<Vec<EnergySample>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(path, true)?.deserialize::<EnergyRow>().enumerate() {
        let r = row.with_context(|| format!("{}: bad energy row {}", path.display(), i + 1))?;
        out.push(EnergySample {
            depth: r.depth_m,
            velocity: r.velocity_mps,
            energy: r.energy_j,
        });
    }
    Ok(out)
}

/// One depth of the fitted-curve document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub depth_m: f64,
    /// Ascending powers of `u = (v - v_min) / (v_max - v_min)`.
    pub coeffs: [f64; 6],
    pub v_min: f64,
    pub v_max: f64,
    pub rms_residual: f64,
    pub v_opt: f64,
    pub e_opt: f64,
    pub boundary: bool,
}

impl FitRecord {
    pub fn from_poly(p: &PolyCoeffs) -> Self {
        let opt = optimal_velocity(p);
        Self {
            depth_m: p.depth,
            coeffs: p.coeffs,
            v_min: p.v_min,
            v_max: p.v_max,
            rms_residual: p.rms_residual,
            v_opt: opt.velocity,
            e_opt: opt.energy,
            boundary: opt.boundary,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("{}: invalid JSON", path.display()))
}

pub fn write_weights(path: &Path, model: &MlpModel) -> Result<()> {
    write_json(path, model)
}

pub fn read_weights(path: &Path) -> Result<MlpModel> {
    let model: MlpModel = read_json(path)?;
    model.validate()?;
    Ok(model)
}

pub fn write_loss_history(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,data,physics,energy,total")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", i + 1, l.data, l.physics, l.energy, l.total)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episode_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in log {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_log(path: &Path) -> Result<Vec<StepRecord>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Renders the per-episode table; failed episodes carry `NaN` metrics.
pub fn metrics_table(rows: &[SweepRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let c = &r.case;
        match &r.outcome {
            Ok(m) => s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.mode.as_str(),
                c.depth,
                c.offset,
                m.flight_time,
                m.path_length,
                m.dynamic_energy,
                m.success,
                m.mean_iou,
                m.miss_distance
            )),
            Err(_) => s.push_str(&format!(
                "{},{},{},NaN,NaN,NaN,false,NaN,NaN\n",
                c.mode.as_str(),
                c.depth,
                c.offset
            )),
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn track_table(report: &TrackReport) -> String {
    let mut s = String::from("t_start_us,event_count,spike_count,x_min,x_max,y_min,y_max,iou\n");
    for b in &report.bins {
        let bx = b
            .detection
            .map_or_else(|| ",,,".to_string(), |d| format!("{},{},{},{}", d.x_min, d.x_max, d.y_min, d.y_max));
        let iou = b.iou.map_or_else(String::new, |v| v.to_string());
        s.push_str(&format!("{},{},{},{},{}\n", b.t_start, b.event_count, b.spike_count, bx, iou));
    }
    s
}

pub fn track_summary(report: &TrackReport) -> String {
    format!(
        "bins,mean_iou,peak_iou,spiking_fraction\n{},{},{},{}\n",
        report.bins.len(),
        report.mean_iou,
        report.peak_iou,
        report.spiking_fraction
    )
}
