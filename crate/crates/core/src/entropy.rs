//! Motion-magnitude trajectories and the temporal-asymmetry filter.
//!
//! `a = ‖M − reverse(M)‖₂ / ‖M‖₂` over the per-transition mean flow
//! magnitudes `M`. Videos with the lowest `a` have motion profiles that look
//! alike played either way; RSI restricted to them is less driven by plain
//! entropy change.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::frame::{Frame, FrameSequence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EntropyError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("flow estimation failed between frames {index} and {next}: {message}", next = index + 1)]
    Estimator { index: usize, message: String },
    #[error("magnitude sequence has zero norm")]
    ZeroNorm,
    #[error("fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("no profile has a defined asymmetry")]
    AllUndefined,
    #[error("no profiles")]
    Empty,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    pub video_id: String,
    /// Mean displacement (pixels/frame) per consecutive frame pair.
    pub magnitudes: Vec<f64>,
    /// `None` when the magnitudes have zero norm.
    pub asymmetry: Option<f64>,
}

impl FlowProfile {
    pub fn new(video_id: impl Into<String>, magnitudes: Vec<f64>) -> Self {
        let asymmetry = asymmetry_score(&magnitudes).ok();
        Self {
            video_id: video_id.into(),
            magnitudes,
            asymmetry,
        }
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.magnitudes.is_empty() {
            0.0
        } else {
            self.magnitudes.iter().sum::<f64>() / self.magnitudes.len() as f64
        }
    }
}

pub fn asymmetry_score(m: &[f64]) -> Result<f64, EntropyError> {
    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EntropyError::ZeroNorm);
    }
    let diff = m
        .iter()
        .zip(m.iter().rev())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Mean displacement magnitude between two frames.
pub trait FlowEstimator: Send + Sync {
    fn mean_magnitude(&self, a: &Frame, b: &Frame) -> Result<f64, String>;
}

/// Coarse-to-fine block matching on a 2×2 mean pyramid.
///
/// Each block gets the integer displacement minimizing the sum of absolute
/// differences within `radius` of the estimate propagated from the coarser
/// level (ties go to the shorter displacement). A block whose source pixels
/// are all equal carries no motion information; the reported magnitude is
/// the mean over pixels of informative blocks, 0 when there are none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMatcher {
    pub levels: usize,
    pub block: usize,
    pub radius: i64,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        Self {
            levels: 3,
            block: 8,
            radius: 4,
        }
    }
}

#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f32>,
}

impl Plane {
    fn from_frame(f: &Frame) -> Self {
        Self { w: f.width, h: f.height, v: f.luma() }
    }

    fn half(&self) -> Self {
        let (w, h) = ((self.w / 2).max(1), (self.h / 2).max(1));
        let mut v = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0f32;
                let mut n = 0f32;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let (yy, xx) = (2 * y + dy, 2 * x + dx);
                    if yy < self.h && xx < self.w {
                        s += self.v[yy * self.w + xx];
                        n += 1.0;
                    }
                }
                v[y * w + x] = s / n;
            }
        }
        Self { w, h, v }
    }
}

impl BlockMatcher {
    fn blocks(&self, p: &Plane) -> (usize, usize) {
        (p.w.div_ceil(self.block), p.h.div_ceil(self.block))
    }

    fn sad(&self, a: &Plane, b: &Plane, x0: usize, y0: usize, dx: i64, dy: i64) -> Option<f32> {
        let x1 = (x0 + self.block).min(a.w);
        let y1 = (y0 + self.block).min(a.h);
        if x0 as i64 + dx < 0 || y0 as i64 + dy < 0 || x1 as i64 + dx > b.w as i64 || y1 as i64 + dy > b.h as i64 {
            return None;
        }
        let mut s = 0f32;
        for y in y0..y1 {
            let yb = (y as i64 + dy) as usize;
            for x in x0..x1 {
                let xb = (x as i64 + dx) as usize;
                s += (a.v[y * a.w + x] - b.v[yb * b.w + xb]).abs();
            }
        }
        Some(s)
    }

    fn match_level(&self, a: &Plane, b: &Plane, init: &dyn Fn(usize, usize) -> (i64, i64)) -> Vec<(i64, i64)> {
        let (bw, bh) = self.blocks(a);
        let mut out = Vec::with_capacity(bw * bh);
        for by in 0..bh {
            for bx in 0..bw {
                let (x0, y0) = (bx * self.block, by * self.block);
                let (cx, cy) = init(x0 + self.block / 2, y0 + self.block / 2);
                let mut best: Option<(f32, i64, (i64, i64))> = None;
                for dy in cy - self.radius..=cy + self.radius {
                    for dx in cx - self.radius..=cx + self.radius {
                        let Some(s) = self.sad(a, b, x0, y0, dx, dy) else { continue };
                        let len = dx * dx + dy * dy;
                        let better = match best {
                            None => true,
                            Some((bs, bl, _)) => s < bs || (s == bs && len < bl),
                        };
                        if better {
                            best = Some((s, len, (dx, dy)));
                        }
                    }
                }
                out.push(best.map(|b| b.2).unwrap_or((0, 0)));
            }
        }
        out
    }

    /// Per-block displacements at full resolution, row-major.
    pub fn block_flow(&self, a: &Frame, b: &Frame) -> Vec<(i64, i64)> {
        let mut pa = vec![Plane::from_frame(a)];
        let mut pb = vec![Plane::from_frame(b)];
        for _ in 1..self.levels.max(1) {
            let (na, nb) = (pa.last().unwrap().half(), pb.last().unwrap().half());
            pa.push(na);
            pb.push(nb);
        }
        let mut flow: Vec<(i64, i64)> = Vec::new();
        let mut coarse_blocks = (0usize, 0usize);
        for level in (0..pa.len()).rev() {
            let prev = flow.clone();
            let (cbw, cbh) = coarse_blocks;
            let block = self.block;
            let init = |cx: usize, cy: usize| -> (i64, i64) {
                if prev.is_empty() {
                    return (0, 0);
                }
                let bx = (cx / 2 / block).min(cbw - 1);
                let by = (cy / 2 / block).min(cbh - 1);
                let (dx, dy) = prev[by * cbw + bx];
                (2 * dx, 2 * dy)
            };
            flow = self.match_level(&pa[level], &pb[level], &init);
            coarse_blocks = self.blocks(&pa[level]);
        }
        flow
    }
}

impl FlowEstimator for BlockMatcher {
    fn mean_magnitude(&self, a: &Frame, b: &Frame) -> Result<f64, String> {
        if (a.width, a.height) != (b.width, b.height) {
            return Err(format!("frame sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height));
        }
        if a.width == 0 || a.height == 0 {
            return Err("empty frame".into());
        }
        let flow = self.block_flow(a, b);
        let plane = Plane::from_frame(a);
        let (bw, _) = self.blocks(&plane);
        let mut sum = 0f64;
        let mut pixels = 0usize;
        for (i, (dx, dy)) in flow.iter().enumerate() {
            let (x0, y0) = ((i % bw) * self.block, (i / bw) * self.block);
            let x1 = (x0 + self.block).min(plane.w);
            let y1 = (y0 + self.block).min(plane.h);
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = plane.v[y * plane.w + x];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if hi > lo {
                let n = (x1 - x0) * (y1 - y0);
                sum += ((dx * dx + dy * dy) as f64).sqrt() * n as f64;
                pixels += n;
            }
        }
        Ok(if pixels == 0 { 0.0 } else { sum / pixels as f64 })
    }
}

pub fn flow_magnitudes(seq: &FrameSequence, estimator: &dyn FlowEstimator) -> Result<FlowProfile, EntropyError> {
    if seq.len() < 2 {
        return Err(EntropyError::TooFewFrames(seq.len()));
    }
    let magnitudes = seq
        .frames
        .windows(2)
        .enumerate()
        .map(|(index, w)| {
            estimator
                .mean_magnitude(&w[0], &w[1])
                .map_err(|message| EntropyError::Estimator { index, message })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(FlowProfile::new(seq.source_video_id.clone(), magnitudes))
}

/// Ids of the `⌊fraction · N⌋` profiles with the smallest asymmetry, `N`
/// counting only profiles with a defined score. Ties go to the
/// lexicographically smaller id.
pub fn symmetric_subset(profiles: &[FlowProfile], fraction: f64) -> Result<Vec<String>, EntropyError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EntropyError::Fraction(fraction));
    }
    if profiles.is_empty() {
        return Err(EntropyError::Empty);
    }
    let mut ranked: Vec<(f64, &str)> = profiles
        .iter()
        .filter_map(|p| p.asymmetry.map(|a| (a, p.video_id.as_str())))
        .collect();
    if ranked.is_empty() {
        return Err(EntropyError::AllUndefined);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    // guard against products like 0.29 · 100 landing just under an integer
    let keep = (fraction * ranked.len() as f64 + 1e-9).floor() as usize;
    Ok(ranked.into_iter().take(keep).map(|(_, id)| id.to_string()).collect())
}

/// Reads `video_id, m_1, ..., m_{F−1}` lines (comma separated).
pub fn load_magnitudes(path: &Path) -> Result<Vec<FlowProfile>, EntropyError> {
    let text = std::fs::read_to_string(path).map_err(|e| EntropyError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_magnitudes(&text).map_err(|(line, message)| EntropyError::Parse {
        path: path.display().to_string(),
        line,
        message,
    })
}

pub fn parse_magnitudes(text: &str) -> Result<Vec<FlowProfile>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let id = parts.next().filter(|s| !s.is_empty()).ok_or((i + 1, "missing video_id".to_string()))?;
        let mags = parts
            .map(|p| p.parse::<f64>().map_err(|e| (i + 1, format!("{p:?}: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if mags.is_empty() {
            return Err((i + 1, "no magnitudes".into()));
        }
        out.push(FlowProfile::new(id, mags));
    }
    Ok(out)
}

pub fn magnitudes_to_string(profiles: &[FlowProfile]) -> String {
    let mut s = String::new();
    for p in profiles {
        s.push_str(&p.video_id);
        for m in &p.magnitudes {
            s.push_str(&format!(",{m}"));
        }
        s.push('\n');
    }
    s
}

/// video_id → mean magnitude, for motion-confound checks.
pub fn mean_motion(profiles: &[FlowProfile]) -> BTreeMap<String, f64> {
    profiles.iter().map(|p| (p.video_id.clone(), p.mean_magnitude())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Direction;
    use proptest::prelude::*;

    #[test]
    fn formula_cases() {
        assert_eq!(asymmetry_score(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        let a = asymmetry_score(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((a - (20f64).sqrt() / (14f64).sqrt()).abs() < 1e-15);
        assert!((a - 1.195).abs() < 1e-3);
        assert!((asymmetry_score(&[1.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(asymmetry_score(&[0.0, 0.0]), Err(EntropyError::ZeroNorm));
    }

    fn dot_clip(step: usize, n: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|t| {
                let mut f = Frame::zeros(48, 32, 1);
                f.set(15, 5 + step * t, 0, 1.0);
                f
            })
            .collect();
        FrameSequence::new("dot", Direction::Forward, frames)
    }

    #[test]
    fn translating_pixel_moves_two_per_frame() {
        let p = flow_magnitudes(&dot_clip(2, 8), &BlockMatcher::default()).unwrap();
        assert_eq!(p.magnitudes.len(), 7);
        for m in &p.magnitudes {
            assert!((m - 2.0).abs() <= 0.5, "{:?}", p.magnitudes);
        }
    }

    #[test]
    fn static_video_is_undefined() {
        let frames = vec![Frame::new(8, 8, 1, (0..64).map(|i| i as f32 / 64.0).collect()); 4];
        let p = flow_magnitudes(&FrameSequence::new("s", Direction::Forward, frames), &BlockMatcher::default()).unwrap();
        assert_eq!(p.magnitudes, vec![0.0; 3]);
        assert_eq!(p.asymmetry, None);
    }

    #[test]
    fn textured_shift_is_recovered_through_the_pyramid() {
        // smooth texture shifted 3 px down and 5 px right per frame
        let tex = |x: i64, y: i64| ((x as f32 * 0.37).sin() + (y as f32 * 0.23).cos() + ((x * y) as f32 * 0.01).sin()) / 3.0 + 0.5;
        let frames = (0..3)
            .map(|t| {
                let mut f = Frame::zeros(64, 64, 1);
                for y in 0..64 {
                    for x in 0..64 {
                        f.set(y, x, 0, tex(x as i64 - 5 * t, y as i64 - 3 * t));
                    }
                }
                f
            })
            .collect();
        let seq = FrameSequence::new("tex", Direction::Forward, frames);
        let flow = BlockMatcher::default().block_flow(&seq.frames[0], &seq.frames[1]);
        let interior = flow[2 * 8 + 2];
        assert_eq!(interior, (5, 3));
    }

    #[test]
    fn ingestion_passthrough() {
        let p = parse_magnitudes("# id, m...\nv1, 1, 2, 3\n").unwrap();
        assert_eq!(p[0].magnitudes, vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_magnitudes(&magnitudes_to_string(&p)).unwrap(), p);
        assert!(parse_magnitudes("v1\n").is_err());
        assert!(parse_magnitudes("v1, x\n").is_err());
    }

    fn profile(id: &str, a: f64) -> FlowProfile {
        FlowProfile { video_id: id.into(), magnitudes: vec![], asymmetry: Some(a) }
    }

    #[test]
    fn subset_selection() {
        let ps: Vec<FlowProfile> = [("a", 0.1), ("b", 0.9), ("c", 0.2), ("d", 0.5)].iter().map(|(i, a)| profile(i, *a)).collect();
        assert_eq!(symmetric_subset(&ps, 0.5).unwrap(), vec!["a", "c"]);
        let ties: Vec<FlowProfile> = (0..10).rev().map(|i| profile(&format!("v{i}"), 0.4)).collect();
        assert_eq!(symmetric_subset(&ties, 0.3).unwrap(), vec!["v0", "v1", "v2"]);
        let mut undefined = ps.clone();
        undefined.push(FlowProfile { video_id: "z".into(), magnitudes: vec![0.0], asymmetry: None });
        assert!(!symmetric_subset(&undefined, 1.0).unwrap().contains(&"z".to_string()));
        assert_eq!(symmetric_subset(&ps, 0.0), Err(EntropyError::Fraction(0.0)));
        let hundred: Vec<FlowProfile> = (0..100).map(|i| profile(&format!("{i:03}"), i as f64)).collect();
        assert_eq!(symmetric_subset(&hundred, 0.29).unwrap().len(), 29);
    }

    proptest! {
        #[test]
        fn reversal_and_scale_invariance(m in prop::collection::vec(0.0f64..10.0, 1..20), c in 0.01f64..100.0) {
            prop_assume!(m.iter().any(|v| *v > 0.0));
            let a = asymmetry_score(&m).unwrap();
            let rev: Vec<f64> = m.iter().rev().copied().collect();
            prop_assert!((asymmetry_score(&rev).unwrap() - a).abs() < 1e-12);
            let scaled: Vec<f64> = m.iter().map(|v| v * c).collect();
            prop_assert!((asymmetry_score(&scaled).unwrap() - a).abs() < 1e-9);
            let mut pal = m.clone();
            pal.extend(rev);
            prop_assert!(asymmetry_score(&pal).unwrap() == 0.0);
        }

        #[test]
        fn retained_sets_nest(scores in prop::collection::vec(0.0f64..1.0, 1..40), f in 0.05f64..1.0, g in 0.05f64..1.0) {
            let ps: Vec<FlowProfile> = scores.iter().enumerate().map(|(i, a)| profile(&format!("v{i:02}"), *a)).collect();
            let (lo, hi) = if f < g { (f, g) } else { (g, f) };
            let small = symmetric_subset(&ps, lo).unwrap();
            let large = symmetric_subset(&ps, hi).unwrap();
            prop_assert!(small.iter().all(|id| large.contains(id)));
        }
    }
}
