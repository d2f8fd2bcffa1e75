//! A small pixel-space video diffusion model trained on synthetic clips.
//!
//! Two 3D convolutions (5×3×3 then 3×3×3 over time×height×width) with a ReLU
//! in between predict the noise of a linear-β DDPM forward process. The text
//! prompt is reduced to a learned per-caption embedding added to the hidden
//! layer; the empty prompt (or an unseen caption) gets no embedding.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AdapterError, EpsilonAdapter, EpsilonModel, Prepared};
use crate::frame::{Frame, FrameSequence};
use crate::preprocess::{self, ModelSpec, OperatingSpace, ResolutionMode};

pub const SIDE: usize = 16;
pub const STEPS: u32 = 1000;
const KT: usize = 5;
const PATCH: usize = KT * 9;
const TAPS2: usize = 27;
const COND: usize = 3;
const SKIP: usize = 3;

pub fn toy_spec() -> ModelSpec {
    ModelSpec {
        model_id: "toy-denoiser".into(),
        family: "toy".into(),
        params_billions: 0.0,
        release_date: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
        operating_space: OperatingSpace::Pixel,
        resolution_mode: ResolutionMode::Fixed([SIDE as u32, SIDE as u32]),
        frame_window: 16,
        target_fps: super::synth::FPS,
        diffusion_steps_t: STEPS,
        adapter: None,
    }
}

/// Cumulative products `ᾱ_t` of a linear β schedule, index 0 = clean.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub alpha_bar: Vec<f64>,
}

impl Schedule {
    pub fn linear(steps: u32, beta_start: f64, beta_end: f64) -> Self {
        let mut alpha_bar = Vec::with_capacity(steps as usize + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=steps {
            let frac = if steps > 1 { (t - 1) as f64 / (steps - 1) as f64 } else { 0.0 };
            acc *= 1.0 - (beta_start + (beta_end - beta_start) * frac);
            alpha_bar.push(acc);
        }
        Self { alpha_bar }
    }

    fn at(&self, t: u32) -> f64 {
        self.alpha_bar[(t as usize).min(self.alpha_bar.len() - 1)]
    }
}

/// Weights in one flat vector; see [`Layout`] for the slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyWeights {
    pub hidden: usize,
    /// Training captions, in embedding order.
    pub classes: Vec<String>,
    pub params: Vec<f32>,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    h: usize,
    w1: usize,
    b1: usize,
    u: usize,
    w2: usize,
    b2: usize,
    skip: usize,
    emb: usize,
    len: usize,
}

impl Layout {
    fn new(h: usize, classes: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + h * PATCH;
        let u = b1 + h;
        let w2 = u + h * COND;
        let b2 = w2 + TAPS2 * h;
        let skip = b2 + 1;
        let emb = skip + SKIP;
        let len = emb + classes * h;
        Self { h, w1, b1, u, w2, b2, skip, emb, len }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToyError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("training example {index}: {message}")]
    BadExample { index: usize, message: String },
    #[error("weights file {path}: {message}")]
    Weights { path: String, message: String },
}

#[derive(Clone, Debug)]
pub struct ToyDenoiser {
    spec: ModelSpec,
    weights: ToyWeights,
    layout: Layout,
    schedule: Schedule,
}

pub type ToyAdapter = EpsilonAdapter<ToyDenoiser>;

struct Cache {
    patches: Vec<f32>,
    pre: Vec<f32>,
    act: Vec<f32>,
}

#[inline]
fn clamp(i: usize, d: isize, n: usize) -> usize {
    (i as isize + d).clamp(0, n as isize - 1) as usize
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ToyDenoiser {
    pub fn from_weights(weights: ToyWeights) -> Result<Self, ToyError> {
        let layout = Layout::new(weights.hidden, weights.classes.len());
        if weights.params.len() != layout.len {
            return Err(ToyError::Weights {
                path: String::new(),
                message: format!("expected {} parameters, found {}", layout.len, weights.params.len()),
            });
        }
        Ok(Self {
            spec: toy_spec(),
            weights,
            layout,
            schedule: Schedule::linear(STEPS, 1e-4, 0.02),
        })
    }

    fn init(hidden: usize, classes: Vec<String>, rng: &mut ChaCha8Rng) -> Self {
        let layout = Layout::new(hidden, classes.len());
        let mut params = vec![0f32; layout.len];
        let w1 = Normal::new(0.0, (2.0 / PATCH as f64).sqrt()).unwrap();
        for p in &mut params[layout.w1..layout.b1] {
            *p = w1.sample(rng) as f32;
        }
        let w2 = Normal::new(0.0, (1.0 / (TAPS2 * hidden) as f64).sqrt()).unwrap();
        for p in &mut params[layout.w2..layout.b2] {
            *p = w2.sample(rng) as f32;
        }
        Self::from_weights(ToyWeights { hidden, classes, params }).expect("consistent layout")
    }

    pub fn weights(&self) -> &ToyWeights {
        &self.weights
    }

    pub fn save(&self, path: &Path) -> Result<(), ToyError> {
        let text = serde_json::to_string(&self.weights).expect("serializable weights");
        crate::util::write_atomic(path, text.as_bytes()).map_err(|e| ToyError::Weights {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ToyError> {
        let err = |message: String| ToyError::Weights {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let weights: ToyWeights = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Self::from_weights(weights).map_err(|e| err(e.to_string()))
    }

    fn class_of(&self, prompt: &str) -> Option<usize> {
        if prompt.is_empty() {
            return None;
        }
        self.weights.classes.iter().position(|c| c == prompt)
    }

    fn features(&self, t: u32) -> ([f32; COND], [f32; SKIP]) {
        let ab = self.schedule.at(t);
        let (s, n) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        ([s, n, t as f32 / STEPS as f32], [1.0, s, n])
    }

    fn forward(&self, x: &[f32], frames: usize, t: u32, class: Option<usize>, keep: bool) -> (Vec<f32>, Option<Cache>) {
        let l = self.layout;
        let p = &self.weights.params;
        let h = l.h;
        let plane = SIDE * SIDE;
        let v_count = frames * plane;
        let (cf, sf) = self.features(t);

        let mut bias = p[l.b1..l.b1 + h].to_vec();
        for (c, b) in bias.iter_mut().enumerate() {
            *b += dot(&p[l.u + c * COND..l.u + (c + 1) * COND], &cf);
            if let Some(k) = class {
                *b += p[l.emb + k * h + c];
            }
        }

        let mut patches = vec![0f32; v_count * PATCH];
        let mut pre = vec![0f32; v_count * h];
        let mut act = vec![0f32; v_count * h];
        for f in 0..frames {
            for y in 0..SIDE {
                for x_ in 0..SIDE {
                    let v = f * plane + y * SIDE + x_;
                    let patch = &mut patches[v * PATCH..(v + 1) * PATCH];
                    let mut j = 0;
                    for dt in -2..=2isize {
                        let ff = clamp(f, dt, frames);
                        for dy in -1..=1isize {
                            let yy = clamp(y, dy, SIDE);
                            for dx in -1..=1isize {
                                patch[j] = x[ff * plane + yy * SIDE + clamp(x_, dx, SIDE)];
                                j += 1;
                            }
                        }
                    }
                    for c in 0..h {
                        let z = bias[c] + dot(&p[l.w1 + c * PATCH..l.w1 + (c + 1) * PATCH], patch);
                        pre[v * h + c] = z;
                        act[v * h + c] = z.max(0.0);
                    }
                }
            }
        }

        let skip = dot(&p[l.skip..l.skip + SKIP], &sf);
        let b2 = p[l.b2];
        let w2 = &p[l.w2..l.b2];
        let mut out = vec![0f32; v_count];
        for f in 0..frames {
            for y in 0..SIDE {
                for x_ in 0..SIDE {
                    let v = f * plane + y * SIDE + x_;
                    let mut acc = b2 + skip * x[v];
                    let mut o = 0;
                    for dt in -1..=1isize {
                        let ff = clamp(f, dt, frames);
                        for dy in -1..=1isize {
                            let yy = clamp(y, dy, SIDE);
                            for dx in -1..=1isize {
                                let n = ff * plane + yy * SIDE + clamp(x_, dx, SIDE);
                                acc += dot(&w2[o * h..(o + 1) * h], &act[n * h..(n + 1) * h]);
                                o += 1;
                            }
                        }
                    }
                    out[v] = acc;
                }
            }
        }
        let cache = keep.then_some(Cache { patches, pre, act });
        (out, cache)
    }

    /// Accumulates parameter gradients for upstream gradient `g` on the output.
    #[allow(clippy::too_many_arguments)]
    fn backward(&self, x: &[f32], frames: usize, t: u32, class: Option<usize>, cache: &Cache, g: &[f32], grad: &mut [f32]) {
        let l = self.layout;
        let p = &self.weights.params;
        let h = l.h;
        let plane = SIDE * SIDE;
        let v_count = frames * plane;
        let (cf, sf) = self.features(t);

        let mut gsum = 0f32;
        let mut gx = 0f32;
        for v in 0..v_count {
            gsum += g[v];
            gx += g[v] * x[v];
        }
        grad[l.b2] += gsum;
        for j in 0..SKIP {
            grad[l.skip + j] += gx * sf[j];
        }

        let mut dact = vec![0f32; v_count * h];
        let w2 = &p[l.w2..l.b2];
        for f in 0..frames {
            for y in 0..SIDE {
                for x_ in 0..SIDE {
                    let v = f * plane + y * SIDE + x_;
                    let gv = g[v];
                    if gv == 0.0 {
                        continue;
                    }
                    let mut o = 0;
                    for dt in -1..=1isize {
                        let ff = clamp(f, dt, frames);
                        for dy in -1..=1isize {
                            let yy = clamp(y, dy, SIDE);
                            for dx in -1..=1isize {
                                let n = ff * plane + yy * SIDE + clamp(x_, dx, SIDE);
                                let gw = &mut grad[l.w2 + o * h..l.w2 + (o + 1) * h];
                                for (gw, a) in gw.iter_mut().zip(&cache.act[n * h..(n + 1) * h]) {
                                    *gw += gv * a;
                                }
                                for (da, w) in dact[n * h..(n + 1) * h].iter_mut().zip(&w2[o * h..(o + 1) * h]) {
                                    *da += gv * w;
                                }
                                o += 1;
                            }
                        }
                    }
                }
            }
        }

        let mut dbias = vec![0f32; h];
        for v in 0..v_count {
            let patch = &cache.patches[v * PATCH..(v + 1) * PATCH];
            for c in 0..h {
                if cache.pre[v * h + c] <= 0.0 {
                    continue;
                }
                let d = dact[v * h + c];
                dbias[c] += d;
                for (gw, pv) in grad[l.w1 + c * PATCH..l.w1 + (c + 1) * PATCH].iter_mut().zip(patch) {
                    *gw += d * pv;
                }
            }
        }
        for c in 0..h {
            grad[l.b1 + c] += dbias[c];
            for j in 0..COND {
                grad[l.u + c * COND + j] += dbias[c] * cf[j];
            }
            if let Some(k) = class {
                grad[l.emb + k * h + c] += dbias[c];
            }
        }
    }

    fn noised(&self, x0: &[f32], noise: &[f32], t: u32) -> Vec<f32> {
        let ab = self.schedule.at(t);
        let (s, n) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        x0.iter().zip(noise).map(|(x, e)| s * x + n * e).collect()
    }
}

/// Grayscale values in `[0, 1]` to the model's `[-1, 1]` range.
fn to_model_space(frames: &[Frame]) -> Result<Vec<f32>, AdapterError> {
    let mut data = Vec::with_capacity(frames.len() * SIDE * SIDE);
    for (i, f) in frames.iter().enumerate() {
        if f.width != SIDE || f.height != SIDE {
            return Err(AdapterError::Failed(format!(
                "frame {i} is {}x{}, toy model expects {SIDE}x{SIDE}",
                f.width, f.height
            )));
        }
        data.extend(f.luma().into_iter().map(|v| 2.0 * v - 1.0));
    }
    Ok(data)
}

impl EpsilonModel for ToyDenoiser {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn prepare(&self, frames: &[Frame], loss_mask: &[bool]) -> Result<Prepared, AdapterError> {
        if frames.len() != loss_mask.len() {
            return Err(AdapterError::Failed("loss mask length differs from frame count".into()));
        }
        Ok(Prepared {
            data: to_model_space(frames)?,
            steps: frames.len(),
            step_mask: loss_mask.to_vec(),
        })
    }

    fn add_noise(&self, x0: &[f32], noise: &[f32], timestep: u32) -> Vec<f32> {
        self.noised(x0, noise, timestep)
    }

    fn predict_noise(&self, x_t: &Prepared, timestep: u32, prompt: &str) -> Result<Vec<f32>, AdapterError> {
        let class = self.class_of(prompt);
        Ok(self.forward(&x_t.data, x_t.steps, timestep, class, false).0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub frames: Vec<Frame>,
    pub caption: String,
}

impl From<super::synth::SyntheticClip> for TrainingExample {
    fn from(c: super::synth::SyntheticClip) -> Self {
        Self {
            frames: c.frames,
            caption: c.caption,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Examples per optimizer step.
    pub batch: usize,
    /// Noise draws per example per epoch.
    pub draws: usize,
    /// Probability of training an example with the null prompt.
    pub null_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            seed: 0,
            hidden: 16,
            learning_rate: 3e-3,
            batch: 4,
            draws: 2,
            null_prob: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean ε-prediction MSE over each epoch.
    pub loss_curve: Vec<f64>,
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: i32,
    lr: f32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, lr: lr as f32 }
    }

    fn update(&mut self, params: &mut [f32], grad: &[f32]) {
        const B1: f32 = 0.9;
        const B2: f32 = 0.999;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains on forward-direction clips with the ε-prediction MSE objective.
///
/// Clips are resized to the model resolution; they are assumed to be at the
/// spec frame rate already. `epochs = 0` returns the initialized model.
pub fn toy_train(examples: &[TrainingExample], config: &TrainConfig) -> Result<(ToyAdapter, TrainReport), ToyError> {
    if examples.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    let spec = toy_spec();
    let mut classes: Vec<String> = examples.iter().map(|e| e.caption.clone()).filter(|c| !c.is_empty()).collect();
    classes.sort();
    classes.dedup();

    let mut data = Vec::with_capacity(examples.len());
    for (index, ex) in examples.iter().enumerate() {
        if ex.frames.len() < 2 {
            return Err(ToyError::BadExample { index, message: "fewer than 2 frames".into() });
        }
        let seq = FrameSequence::new("train", crate::frame::Direction::Forward, ex.frames.clone());
        let adapted = preprocess::adapt_resolution(&seq, &spec);
        let x0 = to_model_space(&adapted.frames).map_err(|e| ToyError::BadExample { index, message: e.to_string() })?;
        let class = classes.iter().position(|c| *c == ex.caption);
        data.push((x0, adapted.frames.len(), class));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ToyDenoiser::init(config.hidden.max(1), classes, &mut rng);
    let mut adam = Adam::new(model.layout.len, config.learning_rate);
    let mut grad = vec![0f32; model.layout.len];
    let batch = config.batch.max(1);
    let draws = config.draws.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0f64;
        let mut count = 0usize;
        let mut pending = 0usize;
        for &i in &order {
            let (x0, frames, class) = &data[i];
            for _ in 0..draws {
                let t = rng.random_range(1..STEPS);
                let class = if rng.random_bool(config.null_prob.clamp(0.0, 1.0)) { None } else { *class };
                let noise: Vec<f32> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let x_t = model.noised(x0, &noise, t);
                let (pred, cache) = model.forward(&x_t, *frames, t, class, true);
                let n = pred.len() as f32;
                let mut loss = 0f64;
                let g: Vec<f32> = pred
                    .iter()
                    .zip(&noise)
                    .map(|(p, e)| {
                        let d = p - e;
                        loss += (d * d) as f64;
                        2.0 * d / n
                    })
                    .collect();
                loss /= n as f64;
                if !loss.is_finite() {
                    return Err(ToyError::Diverged { epoch, loss });
                }
                total += loss;
                count += 1;
                model.backward(&x_t, *frames, t, class, &cache.expect("cache kept"), &g, &mut grad);
                pending += 1;
                if pending == batch * draws {
                    step(&mut model, &mut adam, &mut grad, pending);
                    pending = 0;
                }
            }
        }
        if pending > 0 {
            step(&mut model, &mut adam, &mut grad, pending);
        }
        let mean = total / count as f64;
        if !mean.is_finite() || model.weights.params.iter().any(|p| !p.is_finite()) {
            return Err(ToyError::Diverged { epoch, loss: mean });
        }
        log::debug!("toy epoch {epoch}: loss {mean:.5}");
        curve.push(mean);
    }
    Ok((EpsilonAdapter::new(model), TrainReport { loss_curve: curve }))
}

fn step(model: &mut ToyDenoiser, adam: &mut Adam, grad: &mut [f32], n: usize) {
    let scale = 1.0 / n as f32;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    adam.update(&mut model.weights.params, grad);
    grad.fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::super::synth::{toy_generate, SynthKind};
    use super::super::{probe_sequence, DenoiserAdapter, LossRequest, ProbeConfig};
    use super::*;

    fn small_set(n: usize) -> Vec<TrainingExample> {
        let mut v: Vec<TrainingExample> = toy_generate(SynthKind::Shatter, n, 1).into_iter().map(Into::into).collect();
        v.extend(toy_generate(SynthKind::Smoke, n, 1).into_iter().map(Into::into));
        v
    }

    fn downsized(frames: &[Frame]) -> FrameSequence {
        let seq = FrameSequence::new("probe", crate::frame::Direction::Forward, frames.to_vec());
        preprocess::adapt_resolution(&seq, &toy_spec())
    }

    #[test]
    fn schedule_is_monotone() {
        let s = Schedule::linear(1000, 1e-4, 0.02);
        assert_eq!(s.alpha_bar.len(), 1001);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!((s.alpha_bar[1] - (1.0 - 1e-4)).abs() < 1e-12);
        assert!(s.alpha_bar[1000] < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = ToyDenoiser::init(3, vec!["a".into()], &mut rng);
        for p in model.weights.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1f32);
        }
        let frames = 3;
        let n = frames * SIDE * SIDE;
        let x: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0f32)).collect();
        let target: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0f32)).collect();
        let loss = |m: &ToyDenoiser| -> f64 {
            let (out, _) = m.forward(&x, frames, 300, Some(0), false);
            out.iter().zip(&target).map(|(o, t)| ((o - t) as f64).powi(2)).sum::<f64>() / n as f64
        };
        let (out, cache) = model.forward(&x, frames, 300, Some(0), true);
        let g: Vec<f32> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t) / n as f32).collect();
        let mut grad = vec![0f32; model.layout.len];
        model.backward(&x, frames, 300, Some(0), &cache.unwrap(), &g, &mut grad);
        let l = model.layout;
        for idx in [l.w1 + 7, l.b1 + 1, l.u + 2, l.w2 + 13, l.b2, l.skip + 1, l.emb + 2] {
            let eps = 1e-2f32;
            let mut plus = model.clone();
            plus.weights.params[idx] += eps;
            let mut minus = model.clone();
            minus.weights.params[idx] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps as f64);
            let analytic = grad[idx] as f64;
            assert!(
                (numeric - analytic).abs() <= 2e-3 + 2e-2 * analytic.abs(),
                "param {idx}: numeric {numeric} analytic {analytic}"
            );
        }
    }

    #[test]
    fn untrained_model_gives_finite_losses() {
        let (adapter, report) = toy_train(&small_set(1), &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert!(report.loss_curve.is_empty());
        let clip = &toy_generate(SynthKind::Shatter, 1, 99)[0];
        let out = probe_sequence(&downsized(&clip.frames), &clip.caption, &adapter, &ProbeConfig::default()).unwrap();
        assert!(out.outcome.forward_loss.is_finite() && out.outcome.reversed_loss.is_finite());
        assert!(out.forward.per_timestep_loss.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let cfg = TrainConfig { epochs: 3, hidden: 4, seed: 3, ..Default::default() };
        let set = small_set(6);
        let (a, report) = toy_train(&set, &cfg).unwrap();
        assert_eq!(report.loss_curve.len(), 3);
        assert!(report.loss_curve[2] < report.loss_curve[0], "{:?}", report.loss_curve);
        let (b, _) = toy_train(&set, &cfg).unwrap();
        let frames = downsized(&set[0].frames).frames;
        let mask = vec![true; frames.len()];
        let req = LossRequest { frames: &frames, loss_mask: &mask, timestep: 500, noise_seed: 11, prompt: &set[0].caption };
        assert_eq!(a.denoising_loss(&req).unwrap().to_bits(), b.denoising_loss(&req).unwrap().to_bits());
    }

    #[test]
    fn weights_roundtrip_through_json() {
        let (a, _) = toy_train(&small_set(1), &TrainConfig { epochs: 1, hidden: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        a.model.save(&path).unwrap();
        let b = ToyDenoiser::load(&path).unwrap();
        assert_eq!(b.weights(), a.model.weights());
    }

    #[test]
    fn wrong_resolution_is_an_adapter_error() {
        let (a, _) = toy_train(&small_set(1), &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        let frames = vec![Frame::zeros(8, 8, 1); 2];
        let req = LossRequest { frames: &frames, loss_mask: &[true, true], timestep: 5, noise_seed: 0, prompt: "" };
        assert!(a.denoising_loss(&req).is_err());
    }
}
