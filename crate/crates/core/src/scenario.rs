//! Synthetic event streams with ground truth, and per-bin tracking scores.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::event_camera::{render_log_intensity_from, CameraConfig, CameraModel, Event, SceneGate};
use crate::geometry::Vec3;
use crate::sim::ground_truth_box;
use crate::snn_detector::{iou, BoundingBox, LifConfig, SnnDetector};

/// Ground-truth box valid from `t` (microseconds) onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub t: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub events: Vec<Event>,
    /// One box per bin, stamped at the bin midpoint.
    pub truth: Vec<TruthBox>,
}

/// Static camera at `viewpoint` watching the gate for `duration` seconds,
/// rendered every `frame_dt` seconds. The sensor reference starts at the
/// first frame, so only motion produces events.
pub fn synthetic_stream(
    gate: &SceneGate,
    camera: &CameraConfig,
    viewpoint: Vec3,
    duration: f64,
    frame_dt: f64,
    bin_width: u64,
    seed: u64,
) -> Result<SyntheticStream> {
    if !(frame_dt > 0.0) || !(duration > 0.0) || bin_width == 0 {
        return Err(domain("duration, frame interval and bin width must be positive"));
    }
    let frame_us = libm::round(frame_dt * 1e6) as u64;
    if frame_us == 0 {
        return Err(domain("frame interval below one microsecond"));
    }
    let mut model = CameraModel::new(camera.clone())?;
    model.reset_reference(render_log_intensity_from(gate, camera, 0.0, viewpoint)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = libm::ceil(duration / frame_dt) as u64;
    let mut events = Vec::new();
    for k in 1..=frames {
        let (t0, t1) = ((k - 1) * frame_us, k * frame_us);
        let image = render_log_intensity_from(gate, camera, t1 as f64 * 1e-6, viewpoint)?;
        let mut batch = model.generate_events(&image, t0, t1)?;
        model.add_noise(&mut batch, t0, t1, &mut rng);
        events.extend(batch);
    }
    let end = frames * frame_us;
    let mut truth = Vec::new();
    let mut start = 0;
    while start + bin_width <= end {
        let mid = start + bin_width / 2;
        if let Some(bbox) = ground_truth_box(gate, camera, mid as f64 * 1e-6, viewpoint)? {
            truth.push(TruthBox { t: mid, bbox });
        }
        start += bin_width;
    }
    Ok(SyntheticStream { events, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScore {
    pub t_start: u64,
    pub event_count: usize,
    pub spike_count: usize,
    pub detection: Option<BoundingBox>,
    /// `None` when no truth box falls in the bin; a missed detection scores 0.
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub bins: Vec<BinScore>,
    pub mean_iou: f64,
    pub peak_iou: f64,
    /// Share of bins with at least one spiking pixel.
    pub spiking_fraction: f64,
}

/// Runs the detector over `[0, t_end)` in fixed bins and scores each bin
/// against the last truth box stamped inside it.
pub fn track_eval(
    events: &[Event],
    truth: &[TruthBox],
    lif: &LifConfig,
    dims: (usize, usize),
    t_end: u64,
) -> Result<TrackReport> {
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    let mut detector = SnnDetector::new(lif.clone(), dims.0, dims.1)?;
    let detections = detector.process_stream(&sorted, 0, t_end)?;
    let mut bins = Vec::with_capacity(detections.len());
    let (mut sum, mut n, mut peak, mut spiking) = (0.0, 0usize, 0.0f64, 0usize);
    for det in detections {
        let end = det.t_start + lif.bin_width;
        let gt = truth.iter().rfind(|g| g.t >= det.t_start && g.t < end);
        let score = gt.map(|g| det.bbox.map_or(0.0, |b| iou(&b, &g.bbox)));
        if let Some(s) = score {
            sum += s;
            n += 1;
            peak = peak.max(s);
        }
        if det.spike_count > 0 {
            spiking += 1;
        }
        bins.push(BinScore {
            t_start: det.t_start,
            event_count: det.event_count,
            spike_count: det.spike_count,
            detection: det.bbox,
            iou: score,
        });
    }
    let total = bins.len();
    Ok(TrackReport {
        bins,
        mean_iou: if n > 0 { sum / n as f64 } else { 0.0 },
        peak_iou: peak,
        spiking_fraction: if total > 0 { spiking as f64 / total as f64 } else { 0.0 },
    })
}
