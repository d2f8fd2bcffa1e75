//! Per-model input adaptation: FPS resampling, resolution adaptation and
//! long-video windowing.
//!
//! The fixed stage order is decode → FPS resample → resolution adapt → window,
//! see [`PREPROCESS_ORDER`].

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::frame::{Frame, FrameSequence};

pub const PREPROCESS_ORDER: &str = "decode>fps_resample>resolution_adapt>window";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingSpace {
    Latent,
    Pixel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionMode {
    Fixed([u32; 2]),
    Buckets(Vec<[u32; 2]>),
}

/// Officially recommended input configuration of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub family: String,
    pub params_billions: f64,
    pub release_date: NaiveDate,
    pub operating_space: OperatingSpace,
    pub resolution_mode: ResolutionMode,
    pub frame_window: usize,
    pub target_fps: f64,
    #[serde(rename = "diffusion_steps_T")]
    pub diffusion_steps_t: u32,
    /// Adapter declaration, e.g. `toy:weights.json` or `process:python adapter.py`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("model {model_id:?}: {message}")]
    Invalid { model_id: String, message: String },
    #[error("cannot read registry {path}: {message}")]
    Registry { path: String, message: String },
    #[error("duplicate model_id {0:?} in registry")]
    Duplicate(String),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: &str| SpecError::Invalid {
            model_id: self.model_id.clone(),
            message: m.into(),
        };
        if self.frame_window < 2 {
            return Err(bad("frame_window must be at least 2"));
        }
        if !(self.target_fps.is_finite() && self.target_fps > 0.0) {
            return Err(bad("target_fps must be positive"));
        }
        match &self.resolution_mode {
            ResolutionMode::Fixed([w, h]) if *w == 0 || *h == 0 => return Err(bad("zero target resolution")),
            ResolutionMode::Buckets(b) if b.is_empty() => return Err(bad("no resolution buckets")),
            ResolutionMode::Buckets(b) if b.iter().any(|[w, h]| *w == 0 || *h == 0) => {
                return Err(bad("zero bucket resolution"))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Registry {
    #[serde(default, rename = "model")]
    models: Vec<ModelSpec>,
}

/// Parses a TOML registry of `[[model]]` tables.
pub fn parse_registry(text: &str) -> Result<Vec<ModelSpec>, SpecError> {
    let reg: Registry = toml::from_str(text).map_err(|e| SpecError::Registry {
        path: "<inline>".into(),
        message: e.to_string(),
    })?;
    let mut seen = std::collections::HashSet::new();
    for m in &reg.models {
        m.validate()?;
        if !seen.insert(m.model_id.clone()) {
            return Err(SpecError::Duplicate(m.model_id.clone()));
        }
    }
    Ok(reg.models)
}

pub fn load_registry(path: &Path) -> Result<Vec<ModelSpec>, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Registry {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_registry(&text).map_err(|e| match e {
        SpecError::Registry { message, .. } => SpecError::Registry {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn registry_to_toml(models: &[ModelSpec]) -> String {
    toml::to_string(&Registry {
        models: models.to_vec(),
    })
    .expect("registry serializes")
}

/// Nearest even integer, never below `floor_at`.
fn round_even(x: f64, floor_at: u32) -> u32 {
    let even = (x / 2.0).round() * 2.0;
    (even.max(0.0) as u32).max(floor_at)
}

/// Picks the bucket closest to `aspect` in log-ratio; equal distances go to the larger area.
pub fn choose_bucket(width: usize, height: usize, buckets: &[[u32; 2]]) -> [u32; 2] {
    let ar = (width as f64 / height as f64).ln();
    let mut best = buckets[0];
    let mut best_d = f64::INFINITY;
    for &b in buckets {
        let d = (ar - (b[0] as f64 / b[1] as f64).ln()).abs();
        let area = b[0] as u64 * b[1] as u64;
        let best_area = best[0] as u64 * best[1] as u64;
        if d < best_d - 1e-12 || ((d - best_d).abs() <= 1e-12 && area > best_area) {
            best = b;
            best_d = d;
        }
    }
    best
}

/// Target `(w, h)` for input dimensions under a spec's resolution mode.
pub fn target_resolution(width: usize, height: usize, mode: &ResolutionMode) -> [u32; 2] {
    match mode {
        ResolutionMode::Fixed(wh) => *wh,
        ResolutionMode::Buckets(b) => choose_bucket(width, height, b),
    }
}

/// Scaled size before the center crop, using one scale factor for both axes.
pub fn scaled_size(width: usize, height: usize, target: [u32; 2]) -> (u32, u32) {
    let [tw, th] = target;
    let scale = (tw as f64 / width as f64).max(th as f64 / height as f64);
    (
        round_even(width as f64 * scale, tw),
        round_even(height as f64 * scale, th),
    )
}

fn triangle_weights(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = in_len as f64 / out_len as f64;
    let support = scale.max(1.0);
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor().max(0.0) as usize;
            let hi = ((center + support).ceil() as usize).min(in_len - 1);
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|j| (j, (1.0 - ((j as f64 - center) / support).abs()).max(0.0)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            if taps.is_empty() {
                taps.push((center.round().clamp(0.0, (in_len - 1) as f64) as usize, 1.0));
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(j, w)| (j, (w / total) as f32)).collect()
        })
        .collect()
}

/// Separable triangle-filter resize (antialiased when shrinking).
pub fn resize_frame(frame: &Frame, new_w: usize, new_h: usize) -> Frame {
    if frame.width == new_w && frame.height == new_h {
        return frame.clone();
    }
    let c = frame.channels;
    let wx = triangle_weights(frame.width, new_w);
    let wy = triangle_weights(frame.height, new_h);
    let mut horiz = vec![0f32; frame.height * new_w * c];
    for y in 0..frame.height {
        for (x, taps) in wx.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0f32;
                for &(sx, w) in taps {
                    acc += w * frame.get(y, sx, ch);
                }
                horiz[(y * new_w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = Frame::zeros(new_w, new_h, c);
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..new_w {
            for ch in 0..c {
                let mut acc = 0f32;
                for &(sy, w) in taps {
                    acc += w * horiz[(sy * new_w + x) * c + ch];
                }
                out.set(y, x, ch, acc);
            }
        }
    }
    out
}

pub fn center_crop(frame: &Frame, w: usize, h: usize) -> Frame {
    assert!(w <= frame.width && h <= frame.height, "crop larger than frame");
    if w == frame.width && h == frame.height {
        return frame.clone();
    }
    let x0 = (frame.width - w) / 2;
    let y0 = (frame.height - h) / 2;
    let c = frame.channels;
    let mut data = Vec::with_capacity(w * h * c);
    for y in y0..y0 + h {
        let start = (y * frame.width + x0) * c;
        data.extend_from_slice(&frame.data[start..start + w * c]);
    }
    Frame::new(w, h, c, data)
}

/// Rescales (aspect preserving) then center-crops to the model's resolution.
pub fn adapt_resolution(seq: &FrameSequence, spec: &ModelSpec) -> FrameSequence {
    let (w, h) = seq.resolution();
    if w == 0 || h == 0 {
        return seq.clone();
    }
    let target = target_resolution(w, h, &spec.resolution_mode);
    let (sw, sh) = scaled_size(w, h, target);
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let scaled = resize_frame(f, sw as usize, sh as usize);
            center_crop(&scaled, target[0] as usize, target[1] as usize)
        })
        .collect();
    FrameSequence {
        frames,
        direction: seq.direction,
        source_video_id: seq.source_video_id.clone(),
    }
}

/// Source indices for nearest-frame resampling: frame `k` takes source
/// `⌊k · fps_in / fps_out⌋`, clamped, with `max(2, round(n · fps_out / fps_in))` outputs.
pub fn resample_indices(num_frames: usize, fps_in: f64, fps_out: f64) -> Vec<usize> {
    assert!(fps_in > 0.0 && fps_out > 0.0, "fps must be positive");
    if num_frames == 0 {
        return Vec::new();
    }
    let ratio = fps_in / fps_out;
    let count = ((num_frames as f64 / ratio).round() as usize).max(2);
    (0..count)
        .map(|k| ((k as f64 * ratio + 1e-9).floor() as usize).min(num_frames - 1))
        .collect()
}

pub fn resample_fps(seq: &FrameSequence, fps_in: f64, fps_out: f64) -> FrameSequence {
    if fps_in == fps_out {
        return seq.clone();
    }
    let frames = resample_indices(seq.len(), fps_in, fps_out)
        .into_iter()
        .map(|i| seq.frames[i].clone())
        .collect();
    FrameSequence {
        frames,
        direction: seq.direction,
        source_video_id: seq.source_video_id.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// `[start, end)` including the context prefix.
    pub frame_range: [usize; 2],
    /// Leading frames that only provide temporal context and carry no loss.
    pub context_prefix_len: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.frame_range[1] - self.frame_range[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss-counted frames, `[start + context, end)`.
    pub fn counted_range(&self) -> std::ops::Range<usize> {
        self.frame_range[0] + self.context_prefix_len..self.frame_range[1]
    }

    pub fn counted_len(&self) -> usize {
        self.len() - self.context_prefix_len
    }

    /// Per-frame loss mask within the window.
    pub fn loss_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| i >= self.context_prefix_len).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub windows: Vec<Window>,
    pub total_frames: usize,
}

/// Splits a clip into `frame_window`-sized segments. A short trailing segment is
/// padded in front with frames from the preceding segment, marked as context.
pub fn plan_windows(total_frames: usize, frame_window: usize) -> WindowPlan {
    assert!(frame_window >= 2, "frame_window must be at least 2");
    if total_frames <= frame_window {
        return WindowPlan {
            windows: vec![Window {
                frame_range: [0, total_frames],
                context_prefix_len: 0,
            }],
            total_frames,
        };
    }
    let mut windows = Vec::new();
    let full = total_frames / frame_window;
    for i in 0..full {
        windows.push(Window {
            frame_range: [i * frame_window, (i + 1) * frame_window],
            context_prefix_len: 0,
        });
    }
    let remainder = total_frames % frame_window;
    if remainder > 0 {
        windows.push(Window {
            frame_range: [total_frames - frame_window, total_frames],
            context_prefix_len: frame_window - remainder,
        });
    }
    WindowPlan {
        windows,
        total_frames,
    }
}

/// Applies FPS resampling and resolution adaptation for `spec`.
pub fn prepare_sequence(seq: &FrameSequence, fps_native: f64, spec: &ModelSpec) -> FrameSequence {
    let resampled = resample_fps(seq, fps_native, spec.target_fps);
    adapt_resolution(&resampled, spec)
}

/// What preprocessing does to one record, without touching pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub video_id: String,
    pub model_id: String,
    pub order: String,
    pub resampled_frames: usize,
    pub scaled_size: [u32; 2],
    pub target_resolution: [u32; 2],
    pub windows: WindowPlan,
}

pub fn plan_record(record: &crate::catalog::VideoRecord, spec: &ModelSpec) -> PreprocessPlan {
    let frames = if record.fps_native == spec.target_fps {
        record.num_frames
    } else {
        resample_indices(record.num_frames, record.fps_native, spec.target_fps).len()
    };
    let (w, h) = (record.width as usize, record.height as usize);
    let target = target_resolution(w, h, &spec.resolution_mode);
    let (sw, sh) = scaled_size(w, h, target);
    PreprocessPlan {
        video_id: record.video_id.clone(),
        model_id: spec.model_id.clone(),
        order: PREPROCESS_ORDER.into(),
        resampled_frames: frames,
        scaled_size: [sw, sh],
        target_resolution: target,
        windows: plan_windows(frames, spec.frame_window),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Direction;
    use proptest::prelude::*;

    pub(crate) fn spec(mode: ResolutionMode) -> ModelSpec {
        ModelSpec {
            model_id: "m".into(),
            family: "f".into(),
            params_billions: 1.0,
            release_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            operating_space: OperatingSpace::Pixel,
            resolution_mode: mode,
            frame_window: 16,
            target_fps: 8.0,
            diffusion_steps_t: 1000,
            adapter: None,
        }
    }

    fn seq_of(n: usize, w: usize, h: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|i| {
                let data = (0..w * h).map(|p| ((p * 7 + i * 13) % 17) as f32 / 16.0).collect();
                Frame::new(w, h, 1, data)
            })
            .collect();
        FrameSequence::new("v", Direction::Forward, frames)
    }

    #[test]
    fn full_hd_to_square() {
        assert_eq!(scaled_size(1920, 1080, [480, 480]), (854, 480));
        let out = adapt_resolution(&seq_of(2, 1920, 1080), &spec(ResolutionMode::Fixed([480, 480])));
        assert_eq!(out.resolution(), (480, 480));
    }

    #[test]
    fn identity_when_already_at_target() {
        let s = seq_of(3, 32, 24);
        let out = adapt_resolution(&s, &spec(ResolutionMode::Fixed([32, 24])));
        assert_eq!(out, s);
    }

    #[test]
    fn bucket_by_log_aspect() {
        assert_eq!(choose_bucket(1280, 720, &[[832, 480], [480, 832]]), [832, 480]);
        assert_eq!(choose_bucket(720, 1280, &[[832, 480], [480, 832]]), [480, 832]);
        // square input is equidistant from 2:1 and 1:2, larger area wins
        assert_eq!(choose_bucket(100, 100, &[[200, 100], [100, 200], [300, 600]]), [300, 600]);
    }

    #[test]
    fn crop_always_fits_when_aspects_differ() {
        // 4:3 into a 16:9-ish fixed target
        let (sw, sh) = scaled_size(640, 480, [832, 480]);
        assert!(sw >= 832 && sh >= 480);
        let out = adapt_resolution(&seq_of(2, 640, 480), &spec(ResolutionMode::Fixed([832, 480])));
        assert_eq!(out.resolution(), (832, 480));
    }

    #[test]
    fn resize_preserves_constant_images() {
        let f = Frame::new(7, 5, 2, vec![0.25; 70]);
        let g = resize_frame(&f, 3, 11);
        assert!(g.data.iter().all(|v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn fps_resampling_index_rule() {
        assert_eq!(resample_indices(10, 30.0, 15.0), vec![0, 2, 4, 6, 8]);
        assert_eq!(resample_indices(4, 15.0, 30.0), vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let s = seq_of(5, 2, 2);
        assert_eq!(resample_fps(&s, 24.0, 24.0), s);
        // never fewer than two frames
        assert_eq!(resample_indices(3, 60.0, 1.0).len(), 2);
    }

    #[test]
    fn window_examples() {
        let p = plan_windows(37, 16);
        assert_eq!(
            p.windows,
            vec![
                Window { frame_range: [0, 16], context_prefix_len: 0 },
                Window { frame_range: [16, 32], context_prefix_len: 0 },
                Window { frame_range: [21, 37], context_prefix_len: 11 },
            ]
        );
        assert_eq!(p.windows[2].counted_range(), 32..37);
        assert_eq!(plan_windows(16, 16).windows, vec![Window { frame_range: [0, 16], context_prefix_len: 0 }]);
        assert_eq!(plan_windows(10, 16).windows, vec![Window { frame_range: [0, 10], context_prefix_len: 0 }]);
    }

    #[test]
    fn registry_roundtrip_and_field_names() {
        let text = r#"
[[model]]
model_id = "wan-14b"
family = "wan"
params_billions = 14.0
release_date = "2025-02-25"
operating_space = "latent"
resolution_mode = { buckets = [[832, 480], [480, 832]] }
frame_window = 81
target_fps = 16.0
diffusion_steps_T = 1000
"#;
        let models = parse_registry(text).unwrap();
        assert_eq!(models[0].diffusion_steps_t, 1000);
        assert_eq!(models[0].resolution_mode, ResolutionMode::Buckets(vec![[832, 480], [480, 832]]));
        let again = parse_registry(&registry_to_toml(&models)).unwrap();
        assert_eq!(again, models);
        assert!(registry_to_toml(&models).contains("diffusion_steps_T"));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(ResolutionMode::Buckets(vec![]));
        assert!(s.validate().is_err());
        s.resolution_mode = ResolutionMode::Fixed([4, 4]);
        s.frame_window = 1;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn windows_tile_exactly(total in 2usize..400, window in 2usize..64) {
            let plan = plan_windows(total, window);
            let mut hits = vec![0u32; total];
            for w in &plan.windows {
                prop_assert!(w.frame_range[1] <= total);
                if total >= window {
                    prop_assert_eq!(w.len(), window);
                } else {
                    prop_assert_eq!(w.context_prefix_len, 0);
                }
                for f in w.counted_range() {
                    hits[f] += 1;
                }
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
        }

        #[test]
        fn scaling_is_aspect_preserving(w in 16usize..4000, h in 16usize..4000, tw in 1u32..200, th in 1u32..200) {
            let (tw, th) = (tw * 2, th * 2);
            let (sw, sh) = scaled_size(w, h, [tw, th]);
            prop_assert!(sw >= tw && sh >= th);
            let scale = (tw as f64 / w as f64).max(th as f64 / h as f64);
            // even rounding moves each axis by at most one pixel from the common scale
            prop_assert!((sw as f64 - w as f64 * scale).abs() <= 1.0 + 1e-9);
            prop_assert!((sh as f64 - h as f64 * scale).abs() <= 1.0 + 1e-9);
        }
    }
}
