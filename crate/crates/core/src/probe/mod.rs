//! Denoising-loss probe: forward and reversed sequences scored under identical
//! timesteps and noise.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Catalog, CatalogError, MediaDecoder, VideoRecord};
use crate::frame::{Direction, Frame, FrameSequence};
use crate::preprocess::{self, ModelSpec, WindowPlan};

pub mod remote;
pub mod synth;
pub mod toy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Caption,
    Null,
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::Caption => "caption",
            PromptMode::Null => "null",
        })
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "caption" => Ok(PromptMode::Caption),
            "null" => Ok(PromptMode::Null),
            other => Err(format!("unknown prompt mode {other:?} (expected caption|null)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub n_noise: usize,
    pub base_seed: u64,
    pub prompt_mode: PromptMode,
    /// Fraction of the schedule excluded at each end before spacing timesteps.
    #[serde(default)]
    pub t_exclusion: f64,
    /// Re-issue the first adapter call and require a bit-identical loss.
    #[serde(default = "default_true")]
    pub check_determinism: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_noise: 1,
            base_seed: 0,
            prompt_mode: PromptMode::Caption,
            t_exclusion: 0.0,
            check_determinism: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("{0}")]
    Failed(String),
    #[error("adapter transport: {0}")]
    Transport(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("schedule too coarse: T = {t_max} must exceed K = {k}")]
    ScheduleTooCoarse { t_max: u32, k: usize },
    #[error("invalid probe config: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("adapter failed on video {video_id:?} at timestep {timestep}: {source}")]
    Adapter {
        video_id: String,
        timestep: u32,
        #[source]
        source: AdapterError,
    },
    #[error("adapter contract violation on video {video_id:?}: repeated call returned {first} then {second}")]
    Nondeterministic {
        video_id: String,
        first: f64,
        second: f64,
    },
}

/// One loss query: a window of preprocessed pixel frames plus the noise seed.
///
/// The adapter draws its own noise from `noise_seed` in whatever shape its
/// representation needs; that shape may depend only on the input shape.
#[derive(Clone, Debug)]
pub struct LossRequest<'a> {
    pub frames: &'a [Frame],
    /// Per frame: whether the frame counts toward the loss.
    pub loss_mask: &'a [bool],
    pub timestep: u32,
    pub noise_seed: u64,
    /// Empty for the null prompt.
    pub prompt: &'a str,
}

/// Scores `E‖ε − ε̂(x_t, t, prompt)‖²` for one timestep and noise draw.
///
/// Implementations must be deterministic in the request and must not apply
/// classifier-free guidance.
pub trait DenoiserAdapter: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    /// Mean squared noise-prediction error over loss-counted elements.
    fn denoising_loss(&self, req: &LossRequest<'_>) -> Result<f64, AdapterError>;
}

impl<A: DenoiserAdapter + ?Sized> DenoiserAdapter for Arc<A> {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }
    fn denoising_loss(&self, req: &LossRequest<'_>) -> Result<f64, AdapterError> {
        (**self).denoising_loss(req)
    }
}

/// A model in its own input representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub data: Vec<f32>,
    /// Temporal length in the model's representation.
    pub steps: usize,
    /// Per representation step: whether it counts toward the loss.
    pub step_mask: Vec<bool>,
}

impl Prepared {
    pub fn per_step(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.data.len() / self.steps
        }
    }
}

/// Building blocks of an ε-prediction diffusion model.
pub trait EpsilonModel: Send + Sync {
    fn spec(&self) -> &ModelSpec;
    /// Pixel frames (values in `[0, 1]`) to the model's input representation.
    fn prepare(&self, frames: &[Frame], loss_mask: &[bool]) -> Result<Prepared, AdapterError>;
    /// Forward-process sample `x_t` from clean `x0` and noise.
    fn add_noise(&self, x0: &[f32], noise: &[f32], timestep: u32) -> Vec<f32>;
    /// Predicted noise for `x_t` (same layout as the prepared input).
    fn predict_noise(&self, x_t: &Prepared, timestep: u32, prompt: &str) -> Result<Vec<f32>, AdapterError>;
}

/// Standard normal noise of length `len` from `seed`.
pub fn gaussian_noise(seed: u64, len: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Masked MSE between target and predicted noise.
pub fn masked_mse(noise: &[f32], predicted: &[f32], prepared: &Prepared) -> f64 {
    let per = prepared.per_step();
    let mut sum = 0f64;
    let mut count = 0usize;
    for (step, counted) in prepared.step_mask.iter().enumerate() {
        if !counted {
            continue;
        }
        for i in step * per..(step + 1) * per {
            let d = (noise[i] - predicted[i]) as f64;
            sum += d * d;
        }
        count += per;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Adapts an [`EpsilonModel`] to the loss contract: prepare, draw seeded
/// noise in the prepared shape, noise, predict, masked MSE.
#[derive(Clone, Debug)]
pub struct EpsilonAdapter<M> {
    pub model: M,
}

impl<M: EpsilonModel> EpsilonAdapter<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

impl<M: EpsilonModel> DenoiserAdapter for EpsilonAdapter<M> {
    fn spec(&self) -> &ModelSpec {
        self.model.spec()
    }

    fn denoising_loss(&self, req: &LossRequest<'_>) -> Result<f64, AdapterError> {
        let x0 = self.model.prepare(req.frames, req.loss_mask)?;
        let noise = gaussian_noise(req.noise_seed, x0.data.len());
        let x_t = Prepared {
            data: self.model.add_noise(&x0.data, &noise, req.timestep),
            steps: x0.steps,
            step_mask: x0.step_mask.clone(),
        };
        let predicted = self.model.predict_noise(&x_t, req.timestep, req.prompt)?;
        if predicted.len() != noise.len() {
            return Err(AdapterError::Failed(format!(
                "predicted {} values for {} noise elements",
                predicted.len(),
                noise.len()
            )));
        }
        Ok(masked_mse(&noise, &predicted, &x0))
    }
}

/// `K` timesteps evenly spaced over the open interior of the schedule:
/// `t_k = round(lo + (hi − lo)(k+1)/(K+1))` with `lo = e·T`, `hi = (1−e)·T`.
pub fn sample_timesteps(config: &ProbeConfig, t_max: u32) -> Result<Vec<u32>, ProbeError> {
    if config.k == 0 {
        return Err(ProbeError::Config("K must be at least 1".into()));
    }
    if config.n_noise == 0 {
        return Err(ProbeError::Config("n_noise must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&config.t_exclusion) {
        return Err(ProbeError::Config("t_exclusion must lie in [0, 0.5)".into()));
    }
    if t_max as usize <= config.k {
        return Err(ProbeError::ScheduleTooCoarse { t_max, k: config.k });
    }
    let t = t_max as f64;
    let lo = config.t_exclusion * t;
    let hi = (1.0 - config.t_exclusion) * t;
    let steps: Vec<u32> = (0..config.k)
        .map(|k| (lo + (hi - lo) * (k + 1) as f64 / (config.k + 1) as f64).round() as u32)
        .collect();
    if steps.iter().any(|&s| s == 0 || s >= t_max) {
        return Err(ProbeError::ScheduleTooCoarse { t_max, k: config.k });
    }
    Ok(steps)
}

/// Seed for one adapter call. Independent of direction, so both directions
/// see identical noise.
pub fn noise_seed(base_seed: u64, video_id: &str, k: usize, draw: usize, window: usize) -> u64 {
    seed!(base_seed, video_id, k, draw, window)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub video_id: String,
    pub model_id: String,
    pub direction: Direction,
    pub mean_loss: f64,
    pub per_timestep_loss: Vec<f64>,
    pub timestep_fracs: Vec<f64>,
    pub window_count: usize,
    pub counted_frames: usize,
    pub prompt_mode: PromptMode,
    pub base_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub video_id: String,
    pub forward_loss: f64,
    pub reversed_loss: f64,
    /// Strictly `reversed_loss > forward_loss`; exact ties are incorrect.
    pub correct: bool,
}

impl PairOutcome {
    pub fn new(video_id: impl Into<String>, forward_loss: f64, reversed_loss: f64) -> Self {
        Self {
            video_id: video_id.into(),
            forward_loss,
            reversed_loss,
            correct: reversed_loss > forward_loss,
        }
    }

    /// Pairs a forward and a reversed record of the same video.
    pub fn from_records(forward: &LossRecord, reversed: &LossRecord) -> Option<Self> {
        if forward.video_id != reversed.video_id
            || forward.direction != Direction::Forward
            || reversed.direction != Direction::Reversed
        {
            return None;
        }
        Some(Self::new(forward.video_id.clone(), forward.mean_loss, reversed.mean_loss))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub outcome: PairOutcome,
    pub forward: LossRecord,
    pub reversed: LossRecord,
}

/// Scores one preprocessed sequence in one direction.
fn score_direction(
    seq: &FrameSequence,
    plan: &WindowPlan,
    timesteps: &[u32],
    adapter: &dyn DenoiserAdapter,
    config: &ProbeConfig,
    prompt: &str,
) -> Result<Vec<f64>, ProbeError> {
    let video_id = &seq.source_video_id;
    let mut per_timestep = Vec::with_capacity(timesteps.len() * config.n_noise);
    let masks: Vec<Vec<bool>> = plan.windows.iter().map(|w| w.loss_mask()).collect();
    let counted: usize = plan.windows.iter().map(|w| w.counted_len()).sum();
    for (k, &t) in timesteps.iter().enumerate() {
        for draw in 0..config.n_noise {
            let mut weighted = 0f64;
            for (wi, window) in plan.windows.iter().enumerate() {
                let req = LossRequest {
                    frames: &seq.frames[window.frame_range[0]..window.frame_range[1]],
                    loss_mask: &masks[wi],
                    timestep: t,
                    noise_seed: noise_seed(config.base_seed, video_id, k, draw, wi),
                    prompt,
                };
                let call = || {
                    adapter.denoising_loss(&req).map_err(|source| ProbeError::Adapter {
                        video_id: video_id.clone(),
                        timestep: t,
                        source,
                    })
                };
                let loss = call()?;
                if !loss.is_finite() || loss < 0.0 {
                    return Err(ProbeError::Adapter {
                        video_id: video_id.clone(),
                        timestep: t,
                        source: AdapterError::Failed(format!("loss {loss} is not a finite non-negative number")),
                    });
                }
                if config.check_determinism && k == 0 && draw == 0 && wi == 0 {
                    let again = call()?;
                    if again.to_bits() != loss.to_bits() {
                        return Err(ProbeError::Nondeterministic {
                            video_id: video_id.clone(),
                            first: loss,
                            second: again,
                        });
                    }
                }
                weighted += loss * window.counted_len() as f64;
            }
            per_timestep.push(if counted == 0 { 0.0 } else { weighted / counted as f64 });
        }
    }
    Ok(per_timestep)
}

/// Probes an already preprocessed forward sequence.
pub fn probe_sequence(
    forward: &FrameSequence,
    caption: &str,
    adapter: &dyn DenoiserAdapter,
    config: &ProbeConfig,
) -> Result<ProbeOutput, ProbeError> {
    let spec = adapter.spec();
    let timesteps = sample_timesteps(config, spec.diffusion_steps_t)?;
    let prompt = match config.prompt_mode {
        PromptMode::Caption => {
            if caption.trim().is_empty() {
                return Err(CatalogError::EmptyCaption(forward.source_video_id.clone()).into());
            }
            caption
        }
        PromptMode::Null => "",
    };
    let reversed = forward.reversed();
    let plan = preprocess::plan_windows(forward.len(), spec.frame_window);
    let fracs: Vec<f64> = timesteps
        .iter()
        .flat_map(|&t| std::iter::repeat_n(t as f64 / spec.diffusion_steps_t as f64, config.n_noise))
        .collect();
    let counted_frames = plan.windows.iter().map(|w| w.counted_len()).sum();
    let make_record = |direction, losses: Vec<f64>| {
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        LossRecord {
            video_id: forward.source_video_id.clone(),
            model_id: spec.model_id.clone(),
            direction,
            mean_loss: mean,
            per_timestep_loss: losses,
            timestep_fracs: fracs.clone(),
            window_count: plan.windows.len(),
            counted_frames,
            prompt_mode: config.prompt_mode,
            base_seed: config.base_seed,
        }
    };
    let fwd = make_record(
        Direction::Forward,
        score_direction(forward, &plan, &timesteps, adapter, config, prompt)?,
    );
    let rev = make_record(
        Direction::Reversed,
        score_direction(&reversed, &plan, &timesteps, adapter, config, prompt)?,
    );
    Ok(ProbeOutput {
        outcome: PairOutcome::new(forward.source_video_id.clone(), fwd.mean_loss, rev.mean_loss),
        forward: fwd,
        reversed: rev,
    })
}

/// Decodes, preprocesses for the adapter's spec, reverses in pixel space and
/// scores both directions.
pub fn probe_pair(
    catalog: &Catalog,
    record: &VideoRecord,
    adapter: &dyn DenoiserAdapter,
    config: &ProbeConfig,
    decoder: &dyn MediaDecoder,
) -> Result<ProbeOutput, ProbeError> {
    if config.prompt_mode == PromptMode::Caption && record.caption.trim().is_empty() {
        return Err(CatalogError::EmptyCaption(record.video_id.clone()).into());
    }
    let decoded = catalog::decode(catalog, record, Direction::Forward, decoder)?;
    let prepared = preprocess::prepare_sequence(&decoded, record.fps_native, adapter.spec());
    probe_sequence(&prepared, &record.caption, adapter, config)
}

/// Probes many records on `workers` threads. Output order follows `records`.
pub fn probe_many(
    catalog: &Catalog,
    records: &[&VideoRecord],
    adapter: &dyn DenoiserAdapter,
    config: &ProbeConfig,
    decoder: &dyn MediaDecoder,
    workers: usize,
) -> Vec<Result<ProbeOutput, ProbeError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        records
            .par_iter()
            .map(|r| probe_pair(catalog, r, adapter, config, decoder))
            .collect()
    })
}

/// Pairs forward/reversed loss records by video id (first occurrence wins).
pub fn outcomes_from_records(records: &[LossRecord]) -> Vec<PairOutcome> {
    use std::collections::BTreeMap;
    let mut fwd: BTreeMap<&str, &LossRecord> = BTreeMap::new();
    let mut rev: BTreeMap<&str, &LossRecord> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let slot = match r.direction {
            Direction::Forward => &mut fwd,
            Direction::Reversed => &mut rev,
        };
        if !slot.contains_key(r.video_id.as_str()) {
            slot.insert(&r.video_id, r);
            if r.direction == Direction::Forward {
                order.push(r.video_id.as_str());
            }
        }
    }
    order
        .into_iter()
        .filter_map(|id| PairOutcome::from_records(fwd[id], rev.get(id)?))
        .collect()
}
