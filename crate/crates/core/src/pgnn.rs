//! Physics-guided MLP mapping gate depth to a near-minimum-energy cruise
//! velocity.
//!
//! The network is `1 -> 64 -> 128 -> 128 -> 1` with `tanh` hidden units. The
//! input is `d / d_max`; the output is squashed onto `[v_floor, v_ceil]` by a
//! logistic so the derived flight time `d / v` never blows up.
//!
//! Training minimizes `L_data + l1 L_phys + l2 L_energy` with Adam whose
//! steps are shrunk whenever they would raise the full-batch loss. All
//! gradients are computed by hand-written reverse-mode passes.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy_model::{self, EnergySample, PolyCoeffs};
use crate::error::{domain, Error, Result};

pub const HIDDEN_LAYERS: [usize; 3] = [64, 128, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Layer widths including the scalar input and output.
    pub dims: Vec<usize>,
    /// One row-major `out x in` matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Input scale: the network sees `d / d_max`.
    pub d_max: f64,
    pub v_floor: f64,
    pub v_ceil: f64,
    /// Seed used for initialization.
    pub seed: u64,
}

/// Activations kept for the backward pass.
struct Tape {
    /// `acts[0]` is the input; `acts[k]` the output of layer `k - 1`.
    acts: Vec<Vec<f64>>,
    /// Logistic of the output pre-activation.
    sig: f64,
}

impl MlpModel {
    /// Scaled-uniform initialization: every weight and bias of a layer with
    /// fan-in `n` is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new(hidden: &[usize], d_max: f64, v_floor: f64, v_ceil: f64, seed: u64) -> Result<Self> {
        if !(d_max > 0.0) || !(v_floor > 0.0) || !(v_ceil > v_floor) {
            return Err(domain("need d_max > 0 and 0 < v_floor < v_ceil"));
        }
        if hidden.contains(&0) {
            return Err(domain("hidden layers must be non-empty"));
        }
        let mut dims = vec![1];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect());
            biases.push((0..fan_out).map(|_| rng.random_range(-bound..bound)).collect());
        }
        Ok(Self {
            dims,
            weights,
            biases,
            d_max,
            v_floor,
            v_ceil,
            seed,
        })
    }

    pub fn from_config(cfg: &TrainConfig) -> Result<Self> {
        Self::new(&HIDDEN_LAYERS, cfg.d_max, cfg.v_floor, cfg.v_ceil, cfg.seed)
    }

    /// Checks shapes and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let layers = self.dims.len().saturating_sub(1);
        if layers == 0 || self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Config("layer count mismatch".into()));
        }
        if self.dims[0] != 1 || self.dims[layers] != 1 {
            return Err(Error::Config("network must be scalar in and out".into()));
        }
        for (k, pair) in self.dims.windows(2).enumerate() {
            if self.weights[k].len() != pair[0] * pair[1] || self.biases[k].len() != pair[1] {
                return Err(Error::Config("weight shape does not match layer dims".into()));
            }
        }
        if !self.params().iter().all(|p| p.is_finite()) {
            return Err(Error::Config("non-finite weight".into()));
        }
        if !(self.d_max > 0.0) || !(self.v_floor > 0.0) || !(self.v_ceil > self.v_floor) {
            return Err(Error::Config("invalid normalization constants".into()));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Flattened parameters: all weight matrices, then all bias vectors.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(domain("parameter vector has the wrong length"));
        }
        let mut it = flat.iter().copied();
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|p| *p = it.next().unwrap_or_default());
        }
        Ok(())
    }

    fn run(&self, depth: f64) -> Tape {
        let mut acts = vec![vec![depth / self.d_max]];
        let last = self.layer_count() - 1;
        let mut z_out = 0.0;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &acts[k];
            let n_in = input.len();
            let mut out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    bias + dot(row, input)
                })
                .collect();
            if k == last {
                z_out = out[0];
            } else {
                out.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            acts.push(out);
        }
        Tape {
            acts,
            sig: sigmoid(z_out),
        }
    }

    fn output(&self, sig: f64) -> f64 {
        self.v_floor + (self.v_ceil - self.v_floor) * sig
    }

    /// Predicted cruise velocity for a gate at `depth` metres.
    pub fn forward(&self, depth: f64) -> Result<f64> {
        if !(depth > 0.0) {
            return Err(domain("depth must be positive"));
        }
        Ok(self.output(self.run(depth).sig))
    }

    /// Adds `dL/dv * dv/dtheta` into `grad` (same layout as [`params`](Self::params)).
    fn backward(&self, tape: &Tape, dl_dv: f64, grad: &mut [f64]) {
        let layers = self.layer_count();
        let bias_base: usize = self.weights.iter().map(Vec::len).sum();
        let w_offsets: Vec<usize> = prefix_offsets(self.weights.iter().map(Vec::len));
        let b_offsets: Vec<usize> = prefix_offsets(self.biases.iter().map(Vec::len));

        // dL/dz for the current layer's pre-activations.
        let mut delta = vec![dl_dv * (self.v_ceil - self.v_floor) * tape.sig * (1.0 - tape.sig)];
        for k in (0..layers).rev() {
            let input = &tape.acts[k];
            let n_in = input.len();
            let w = &self.weights[k];
            let gw = &mut grad[w_offsets[k]..w_offsets[k] + w.len()];
            for (o, &d) in delta.iter().enumerate() {
                gw[o * n_in..(o + 1) * n_in]
                    .iter_mut()
                    .zip(input)
                    .for_each(|(g, x)| *g += d * x);
            }
            let gb = &mut grad[bias_base + b_offsets[k]..bias_base + b_offsets[k] + delta.len()];
            gb.iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if k == 0 {
                break;
            }
            // Through the weights, then through tanh of the previous layer.
            let mut next = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                next.iter_mut()
                    .zip(&w[o * n_in..(o + 1) * n_in])
                    .for_each(|(n, a)| *n += d * a);
            }
            next.iter_mut().zip(input).for_each(|(n, a)| *n *= 1.0 - a * a);
            delta = next;
        }
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn prefix_offsets(lens: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut acc = 0;
    lens.map(|l| {
        let at = acc;
        acc += l;
        at
    })
    .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `t_traj = d / v_pred`, zero for a zero distance.
pub fn predict_flight_time(model: &MlpModel, depth: f64) -> Result<f64> {
    if depth == 0.0 {
        return Ok(0.0);
    }
    if !(depth > 0.0) {
        return Err(domain("depth must be non-negative"));
    }
    Ok(depth / model.forward(depth)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_physics: f64,
    pub lambda_energy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_physics: 0.1,
            lambda_energy: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_physics >= 0.0 && self.lambda_energy >= 0.0 {
            Ok(())
        } else {
            Err(domain("loss weights must be non-negative"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhysicsVariant {
    /// Mean `|d(E / E_opt)/du|` at the prediction on the fitted curve.
    #[default]
    ZeroDerivative,
    /// Mean `|d - x_sim(t_traj)|`: the shortfall of the accel-limited flight
    /// after the kinematic flight time `d / v`.
    DynamicsConsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub physics: PhysicsVariant,
    pub d_max: f64,
    pub v_floor: f64,
    pub v_ceil: f64,
    /// Acceleration limit used by the dynamics-consistency term.
    pub max_accel: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 5000,
            batch_size: 0,
            seed: 7,
            grad_clip: 10.0,
            physics: PhysicsVariant::ZeroDerivative,
            d_max: 10.0,
            v_floor: 0.2,
            v_ceil: 8.0,
            max_accel: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(domain("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(domain("need at least one epoch"));
        }
        if !(self.grad_clip > 0.0) || !(self.max_accel > 0.0) {
            return Err(domain("grad_clip and max_accel must be positive"));
        }
        Ok(())
    }
}

/// A `(depth, v_opt)` supervision pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub depth: f64,
    pub v_opt: f64,
}

/// Supervision pairs plus the per-depth energy polynomials the physics and
/// energy terms are evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub samples: Vec<TrainSample>,
    pub polys: Vec<PolyCoeffs>,
}

impl TrainingSet {
    /// Fits one polynomial per depth and labels each depth with its minimizer.
    pub fn from_energy_samples(data: &[EnergySample]) -> Result<Self> {
        let polys = energy_model::fit_per_depth(data)?;
        Ok(Self::from_polys(polys))
    }

    pub fn from_polys(polys: Vec<PolyCoeffs>) -> Self {
        let samples = polys
            .iter()
            .map(|p| TrainSample {
                depth: p.depth,
                v_opt: energy_model::optimal_velocity(p).velocity,
            })
            .collect();
        Self { samples, polys }
    }

    pub fn distinct_depths(&self) -> usize {
        let mut d: Vec<f64> = self.samples.iter().map(|s| s.depth).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d.len()
    }
}

/// The polynomial fitted at the depth closest to `depth`.
pub fn nearest_poly(polys: &[PolyCoeffs], depth: f64) -> Result<&PolyCoeffs> {
    polys
        .iter()
        .min_by(|a, b| (a.depth - depth).abs().total_cmp(&(b.depth - depth).abs()))
        .ok_or_else(|| Error::Config("no energy polynomial available".into()))
}

/// `(gap, d gap / dv)` where `gap = d - x(d / v)` for a rest-to-rest flight
/// with cruise `v` and acceleration limit `a`.
pub fn dynamics_gap(depth: f64, v: f64, max_accel: f64) -> (f64, f64) {
    let a = max_accel;
    if v * v < depth * a {
        // Cruise phase ends exactly at t = d / v.
        (v * v / (2.0 * a), v / a)
    } else {
        // Still accelerating at t = d / v.
        let x = a * depth * depth / (2.0 * v * v);
        (depth - x, a * depth * depth / (v * v * v))
    }
}

/// Mean squared error.
pub fn loss_data(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(domain("predictions and targets must be non-empty and equal length"));
    }
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / preds.len() as f64)
}

/// Value and `d/dv` of one sample's physics term.
fn physics_term(
    poly: &PolyCoeffs,
    e_opt: f64,
    depth: f64,
    v: f64,
    variant: PhysicsVariant,
    max_accel: f64,
) -> (f64, f64) {
    match variant {
        PhysicsVariant::ZeroDerivative => {
            let u = poly.normalize(v);
            let g = poly.slope_extended_u(u) / e_opt;
            let dg_dv = poly.curvature_extended_u(u) / e_opt / poly.span();
            (g.abs(), signum(g) * dg_dv)
        }
        PhysicsVariant::DynamicsConsistency => {
            let (gap, dgap) = dynamics_gap(depth, v, max_accel);
            (gap.abs(), signum(gap) * dgap)
        }
    }
}

/// Value and `d/dv` of one sample's energy ratio.
fn energy_term(poly: &PolyCoeffs, e_opt: f64, v: f64) -> (f64, f64) {
    let u = poly.normalize(v);
    (poly.energy_extended_u(u) / e_opt, poly.slope_extended_u(u) / e_opt / poly.span())
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_samples(samples: &[TrainSample]) -> Result<()> {
    if samples.is_empty() {
        Err(domain("no training samples"))
    } else {
        Ok(())
    }
}

pub fn loss_physics(
    model: &MlpModel,
    samples: &[TrainSample],
    polys: &[PolyCoeffs],
    variant: PhysicsVariant,
    max_accel: f64,
) -> Result<f64> {
    check_samples(samples)?;
    let mut total = 0.0;
    for s in samples {
        let poly = nearest_poly(polys, s.depth)?;
        let e_opt = energy_model::optimal_velocity(poly).energy;
        total += physics_term(poly, e_opt, s.depth, model.forward(s.depth)?, variant, max_accel).0;
    }
    Ok(total / samples.len() as f64)
}

pub fn loss_energy(model: &MlpModel, samples: &[TrainSample], polys: &[PolyCoeffs]) -> Result<f64> {
    check_samples(samples)?;
    let mut total = 0.0;
    for s in samples {
        let poly = nearest_poly(polys, s.depth)?;
        let e_opt = energy_model::optimal_velocity(poly).energy;
        total += energy_term(poly, e_opt, model.forward(s.depth)?).0;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub physics: f64,
    pub energy: f64,
    pub total: f64,
}

/// Everything the composite loss needs besides the model and samples.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    polys: &'a [PolyCoeffs],
    /// Fitted minimum energy of each polynomial.
    optima: Vec<f64>,
    pub weights: LossWeights,
    pub variant: PhysicsVariant,
    pub max_accel: f64,
}

impl<'a> Objective<'a> {
    pub fn new(polys: &'a [PolyCoeffs], weights: LossWeights, variant: PhysicsVariant, max_accel: f64) -> Self {
        let optima = polys.iter().map(|p| energy_model::optimal_velocity(p).energy).collect();
        Self {
            polys,
            optima,
            weights,
            variant,
            max_accel,
        }
    }

    fn lookup(&self, depth: f64) -> Result<(&PolyCoeffs, f64)> {
        let poly = nearest_poly(self.polys, depth)?;
        let idx = self.polys.iter().position(|p| core::ptr::eq(p, poly)).unwrap_or_default();
        Ok((poly, self.optima[idx]))
    }

    pub fn total_loss(&self, model: &MlpModel, samples: &[TrainSample]) -> Result<LossBreakdown> {
        self.evaluate(model, samples, false).map(|(l, _)| l)
    }

    /// Loss terms and the gradient of the total with respect to
    /// [`MlpModel::params`].
    pub fn loss_and_grad(&self, model: &MlpModel, samples: &[TrainSample]) -> Result<(LossBreakdown, Vec<f64>)> {
        self.evaluate(model, samples, true)
    }

    fn evaluate(&self, model: &MlpModel, samples: &[TrainSample], with_grad: bool) -> Result<(LossBreakdown, Vec<f64>)> {
        check_samples(samples)?;
        for s in samples {
            if !(s.depth > 0.0) {
                return Err(domain("depth must be positive"));
            }
        }
        let n = samples.len() as f64;
        let (l1, l2) = (self.weights.lambda_physics, self.weights.lambda_energy);
        let mut grad = if with_grad { vec![0.0; model.num_params()] } else { Vec::new() };
        let mut acc = LossBreakdown {
            data: 0.0,
            physics: 0.0,
            energy: 0.0,
            total: 0.0,
        };
        for s in samples {
            let (poly, e_opt) = self.lookup(s.depth)?;
            let tape = model.run(s.depth);
            let v = model.output(tape.sig);
            let (phys, dphys) = physics_term(poly, e_opt, s.depth, v, self.variant, self.max_accel);
            let (en, den) = energy_term(poly, e_opt, v);
            acc.data += (v - s.v_opt) * (v - s.v_opt) / n;
            acc.physics += phys / n;
            acc.energy += en / n;
            if with_grad {
                let dl_dv = (2.0 * (v - s.v_opt) + l1 * dphys + l2 * den) / n;
                model.backward(&tape, dl_dv, &mut grad);
            }
        }
        acc.total = acc.data + l1 * acc.physics + l2 * acc.energy;
        Ok((acc, grad))
    }
}

/// Adam state over the flattened parameter vector.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// Advances the moment estimates and returns the bias-corrected step.
    fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        self.step += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.step as f64);
        (0..grad.len())
            .map(|i| {
                self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
                self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                -self.lr * m_hat / (libm::sqrt(v_hat) + Self::EPS)
            })
            .collect()
    }
}

/// Step shrink attempts before an update that raises the loss is dropped.
const MAX_BACKTRACKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-dataset loss after each epoch.
    pub history: Vec<LossBreakdown>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.history.last()
    }
}

/// True when `history[i + window] <= history[i]` for every `i`.
pub fn monotone_trend(history: &[f64], window: usize) -> bool {
    history.windows(window + 1).all(|w| w[window] <= w[0])
}

/// Trains `model` in place.
pub fn train(model: &mut MlpModel, data: &TrainingSet, weights: LossWeights, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    weights.validate()?;
    model.validate()?;
    if data.distinct_depths() < 4 {
        return Err(domain("training needs at least four distinct depths"));
    }
    train_unchecked(model, data, weights, cfg)
}

/// [`train`] without the distinct-depth requirement, for memorization checks.
pub fn train_unchecked(
    model: &mut MlpModel,
    data: &TrainingSet,
    weights: LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let objective = Objective::new(&data.polys, weights, cfg.physics, cfg.max_accel);
    let batch = match cfg.batch_size {
        0 => data.samples.len(),
        b => b.min(data.samples.len()),
    };
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut current = objective.total_loss(model, &data.samples)?;
    for epoch in 0..cfg.epochs {
        for chunk in data.samples.chunks(batch) {
            let (_, mut grad) = objective.loss_and_grad(model, chunk)?;
            let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch, loss: norm });
            }
            if norm > cfg.grad_clip {
                let s = cfg.grad_clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            let step = adam.step(&grad);
            // Guarded update: halve the step until the full-batch loss does
            // not rise; keep the old parameters if that never happens.
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACKS {
                let trial: Vec<f64> = params.iter().zip(&step).map(|(p, d)| p + scale * d).collect();
                model.set_params(&trial)?;
                let loss = objective.total_loss(model, &data.samples)?;
                if !loss.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        loss: loss.total,
                    });
                }
                if loss.total <= current.total {
                    params = trial;
                    current = loss;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                model.set_params(&params)?;
            }
        }
        history.push(current);
    }
    Ok(TrainReport { history })
}
