//! Single-layer leaky integrate-and-fire detector.
//!
//! Events are binned into a count image `X`, convolved with a 3x3 kernel
//! `W` and integrated into a membrane grid:
//!
//! ```text
//! U[t] = beta * U[t-1] + (W * X)[t]
//! ```
//!
//! Pixels reaching `u_th` spike and reset to zero. Slow movers produce too
//! few events per bin to cross threshold, so the spike map isolates fast
//! objects; the tight box around the spikes locates the target.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::event_camera::Event;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifConfig {
    /// Leak factor in `[0, 1)`.
    pub beta: f64,
    /// Firing threshold.
    pub u_th: f64,
    pub kernel: [[f64; 3]; 3],
    /// Event integration bin (microseconds).
    pub bin_width: u64,
    /// Fewer spiking pixels than this yields no detection.
    pub min_spike_pixels: usize,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            u_th: 1.75,
            kernel: [[1.0 / 9.0; 3]; 3],
            bin_width: 10_000,
            min_spike_pixels: 3,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(domain("leak factor must lie in [0, 1)"));
        }
        if !(self.u_th > 0.0) {
            return Err(domain("firing threshold must be positive"));
        }
        if self.bin_width == 0 {
            return Err(domain("bin width must be positive"));
        }
        if self.min_spike_pixels == 0 {
            return Err(domain("min_spike_pixels must be at least 1"));
        }
        Ok(())
    }
}

/// Per-pixel membrane potential.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneGrid {
    pub potential: Grid<f64>,
}

impl MembraneGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            potential: Grid::filled(height, width, 0.0),
        }
    }

    pub fn reset(&mut self) {
        self.potential.fill(0.0);
    }
}

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub x_max: u32,
    pub y_min: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, x_max: u32, y_min: u32, y_max: u32) -> Result<Self> {
        if x_min > x_max || y_min > y_max {
            return Err(domain("bounding box must satisfy min <= max"));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// Integer center `min + floor((max - min) / 2)` on each axis.
    pub fn center(&self) -> (u32, u32) {
        (
            self.x_min + (self.x_max - self.x_min) / 2,
            self.y_min + (self.y_max - self.y_min) / 2,
        )
    }

    pub fn area(&self) -> f64 {
        f64::from(self.x_max - self.x_min) * f64::from(self.y_max - self.y_min)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

/// Free-function form of [`BoundingBox::center`].
pub fn bbox_center(b: &BoundingBox) -> (u32, u32) {
    b.center()
}

/// Intersection over union of the boxes read as continuous rectangles
/// `[x_min, x_max] x [y_min, y_max]`. Two identical zero-area boxes score 1.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = f64::from(a.x_max.min(b.x_max)) - f64::from(a.x_min.max(b.x_min));
    let ih = f64::from(a.y_max.min(b.y_max)) - f64::from(a.y_min.max(b.y_min));
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Counts events per pixel within `[t_a, t_b)`, ignoring polarity.
pub fn accumulate(events: &[Event], t_a: u64, t_b: u64, dims: (usize, usize)) -> Result<Grid<f64>> {
    if t_b <= t_a {
        return Err(domain("accumulation window must satisfy t_b > t_a"));
    }
    let (height, width) = dims;
    let mut counts = Grid::filled(height, width, 0.0);
    for e in events {
        if e.x as usize >= width || e.y as usize >= height {
            return Err(Error::OutOfBounds {
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
        if (t_a..t_b).contains(&e.t) {
            counts[(e.y as usize, e.x as usize)] += 1.0;
        }
    }
    Ok(counts)
}

/// Zero-padded 3x3 correlation of `input` with `kernel`.
pub fn conv3x3(input: &Grid<f64>, kernel: &[[f64; 3]; 3]) -> Grid<f64> {
    let (h, w) = input.dims();
    let src = input.as_slice();
    let mut out = Grid::filled(h, w, 0.0);
    let dst = out.as_mut_slice();
    for row in 0..h {
        for col in 0..w {
            let v = src[row * w + col];
            if v == 0.0 {
                continue;
            }
            // Scatter: every output within one pixel receives v * W[ky][kx].
            for (ky, krow) in kernel.iter().enumerate() {
                let Some(r) = (row + 1).checked_sub(ky).filter(|&r| r < h) else {
                    continue;
                };
                for (kx, &k) in krow.iter().enumerate() {
                    let Some(c) = (col + 1).checked_sub(kx).filter(|&c| c < w) else {
                        continue;
                    };
                    dst[r * w + c] += v * k;
                }
            }
        }
    }
    out
}

/// One integration step: leak, add the convolved input, spike and reset.
pub fn lif_step(state: &mut MembraneGrid, input: &Grid<f64>, config: &LifConfig) -> Result<Grid<bool>> {
    input.check_dims(state.potential.dims())?;
    let (h, w) = input.dims();
    let drive = conv3x3(input, &config.kernel);
    let mut spikes = Grid::filled(h, w, false);
    for ((u, &x), s) in state
        .potential
        .as_mut_slice()
        .iter_mut()
        .zip(drive.as_slice())
        .zip(spikes.as_mut_slice())
    {
        *u = config.beta * *u + x;
        if *u >= config.u_th {
            *s = true;
            *u = 0.0;
        }
    }
    Ok(spikes)
}

/// Tight box over all spiking pixels, or `None` below `min_spike_pixels`.
pub fn detect_bbox(spikes: &Grid<bool>, config: &LifConfig) -> Option<BoundingBox> {
    let mut count = 0usize;
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (u32::MAX, 0u32, u32::MAX, 0u32);
    for (row, col, &s) in spikes.iter_indexed() {
        if s {
            count += 1;
            let (x, y) = (col as u32, row as u32);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    (count >= config.min_spike_pixels.max(1)).then_some(BoundingBox {
        x_min,
        x_max,
        y_min,
        y_max,
    })
}

/// Result of feeding one bin through the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDetection {
    /// Bin start (microseconds).
    pub t_start: u64,
    pub event_count: usize,
    pub spike_count: usize,
    pub bbox: Option<BoundingBox>,
}

impl BinDetection {
    pub fn center(&self) -> Option<(u32, u32)> {
        self.bbox.as_ref().map(BoundingBox::center)
    }
}

/// Stateful detector: membrane grid plus configuration.
#[derive(Debug, Clone)]
pub struct SnnDetector {
    config: LifConfig,
    state: MembraneGrid,
}

impl SnnDetector {
    pub fn new(config: LifConfig, height: usize, width: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: MembraneGrid::zeros(height, width),
        })
    }

    pub fn config(&self) -> &LifConfig {
        &self.config
    }

    pub fn state(&self) -> &MembraneGrid {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Integrates the events of `[t_start, t_start + bin_width)`.
    pub fn process_bin(&mut self, events: &[Event], t_start: u64) -> Result<BinDetection> {
        let t_end = t_start + self.config.bin_width;
        let input = accumulate(events, t_start, t_end, self.state.potential.dims())?;
        let event_count = input.as_slice().iter().sum::<f64>() as usize;
        let spikes = lif_step(&mut self.state, &input, &self.config)?;
        let spike_count = spikes.as_slice().iter().filter(|&&s| s).count();
        Ok(BinDetection {
            t_start,
            event_count,
            spike_count,
            bbox: detect_bbox(&spikes, &self.config),
        })
    }

    /// Splits a time-sorted stream into consecutive bins starting at
    /// `t_start` and processes each; covers `[t_start, t_end)`.
    pub fn process_stream(&mut self, events: &[Event], t_start: u64, t_end: u64) -> Result<Vec<BinDetection>> {
        let bin = self.config.bin_width;
        let mut out = Vec::new();
        let mut lo = 0usize;
        let mut t = t_start;
        while t < t_end {
            let end = t + bin;
            // Skip anything before the bin, then take the bin's slice.
            while lo < events.len() && events[lo].t < t {
                lo += 1;
            }
            let mut hi = lo;
            while hi < events.len() && events[hi].t < end {
                hi += 1;
            }
            out.push(self.process_bin(&events[lo..hi], t)?);
            lo = hi;
            t = end;
        }
        Ok(out)
    }
}
