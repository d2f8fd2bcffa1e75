//! Synthetic grayscale clips with known temporal structure.
//!
//! * `shatter`: a block falls under gravity and breaks into fragments that
//!   scatter from the impact point (irreversible, salient cause and effect).
//! * `smoke`: a Gaussian puff spreads while conserving mass (irreversible, no
//!   discrete event).
//! * `drift`: a wrapped texture translates at constant velocity; velocities are
//!   drawn symmetrically so the set is time symmetric in distribution.
//! * `palindrome`: a half-length clip followed by its own reversal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::Frame;

pub const WIDTH: usize = 32;
pub const HEIGHT: usize = 32;
pub const FRAMES: usize = 16;
pub const FPS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Shatter,
    Smoke,
    Drift,
    Palindrome,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [SynthKind::Shatter, SynthKind::Smoke, SynthKind::Drift, SynthKind::Palindrome];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Shatter => "shatter",
            SynthKind::Smoke => "smoke",
            SynthKind::Drift => "drift",
            SynthKind::Palindrome => "palindrome",
        }
    }

    pub fn caption(self) -> &'static str {
        match self {
            SynthKind::Shatter => "a block falls and shatters on the ground",
            SynthKind::Smoke => "a puff of smoke spreads out",
            SynthKind::Drift => "a pattern slides across the frame",
            SynthKind::Palindrome => "an event plays out and then rewinds",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown synthetic kind {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticClip {
    pub kind: SynthKind,
    pub index: usize,
    pub caption: String,
    pub frames: Vec<Frame>,
}

/// Generates `n` clips of one kind. Clip `i` depends only on `(seed, kind, i)`.
pub fn toy_generate(kind: SynthKind, n: usize, seed: u64) -> Vec<SyntheticClip> {
    (0..n).map(|i| generate_one(kind, i, seed)).collect()
}

pub fn generate_one(kind: SynthKind, index: usize, seed: u64) -> SyntheticClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed!(seed, kind.name(), index));
    let frames = match kind {
        SynthKind::Shatter => shatter(&mut rng, FRAMES),
        SynthKind::Smoke => smoke(&mut rng, FRAMES),
        SynthKind::Drift => drift(&mut rng, FRAMES),
        SynthKind::Palindrome => {
            let half = FRAMES / 2;
            let mut base = if rng.random_bool(0.5) {
                shatter(&mut rng, half)
            } else {
                smoke(&mut rng, half)
            };
            let tail: Vec<Frame> = base.iter().rev().cloned().collect();
            base.extend(tail);
            base
        }
    };
    SyntheticClip {
        kind,
        index,
        caption: kind.caption().to_string(),
        frames,
    }
}

fn paint_square(frame: &mut Frame, cx: f64, cy: f64, size: usize) {
    let x0 = (cx - size as f64 / 2.0).round() as i64;
    let y0 = (cy - size as f64 / 2.0).round() as i64;
    for y in y0..y0 + size as i64 {
        for x in x0..x0 + size as i64 {
            if (0..frame.height as i64).contains(&y) && (0..frame.width as i64).contains(&x) {
                frame.set(y as usize, x as usize, 0, 1.0);
            }
        }
    }
}

/// 4-connected components of pixels above 0.5.
pub fn count_components(frame: &Frame) -> usize {
    let (w, h) = (frame.width, frame.height);
    let luma = frame.luma();
    let mut parent: Vec<usize> = (0..w * h).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let on = |i: usize| luma[i] > 0.5;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !on(i) {
                continue;
            }
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                if on(j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    (0..w * h).filter(|&i| on(i) && find(&mut parent, i) == i).count()
}

fn shatter(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Frame> {
    // rejection sampling keeps the fragment count monotone after rasterization
    loop {
        let clip = shatter_attempt(rng, frames);
        let counts: Vec<usize> = clip.iter().map(count_components).collect();
        if counts.windows(2).all(|w| w[0] <= w[1]) {
            return clip;
        }
    }
}

fn shatter_attempt(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Frame> {
    let block = 6usize;
    let floor_y = 26.0;
    let impact = rng.random_range(frames * 3 / 8..=frames * 5 / 8).max(1);
    let cx = rng.random_range(11.0..21.0);
    let start_y = rng.random_range(4.0..9.0);
    let g = 2.0 * (floor_y - start_y) / (impact * impact) as f64;
    let n_frag = rng.random_range(4..=7usize);
    let spread = std::f64::consts::PI / n_frag as f64;
    let dirs: Vec<(f64, f64)> = (0..n_frag)
        .map(|i| {
            // upward half-plane, one sector per fragment
            let a = -std::f64::consts::PI + spread * (i as f64 + rng.random_range(0.25..0.75));
            let speed = rng.random_range(1.6..2.4);
            (a.cos() * speed, a.sin() * speed)
        })
        .collect();
    (0..frames)
        .map(|t| {
            let mut f = Frame::zeros(WIDTH, HEIGHT, 1);
            if t <= impact {
                let y = start_y + 0.5 * g * (t * t) as f64;
                paint_square(&mut f, cx, y.min(floor_y), block);
            } else {
                let dt = (t - impact) as f64;
                // common decelerating travel keeps pairwise distances growing
                let s = dt - 0.04 * dt * dt;
                for &(vx, vy) in &dirs {
                    paint_square(&mut f, cx + vx * s, floor_y + 1.0 + vy * s, 2);
                }
            }
            f
        })
        .collect()
}

fn smoke(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Frame> {
    let cx = rng.random_range(11.0..21.0);
    let cy = rng.random_range(11.0..21.0);
    let s0 = rng.random_range(1.4..2.2f64);
    let rate = rng.random_range(0.8..1.4);
    let peak = rng.random_range(0.85..1.0);
    (0..frames)
        .map(|t| {
            let var = s0 * s0 + rate * t as f64;
            let amp = peak * s0 * s0 / var;
            let mut f = Frame::zeros(WIDTH, HEIGHT, 1);
            for y in 0..HEIGHT {
                for x in 0..WIDTH {
                    let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    f.set(y, x, 0, (amp * (-r2 / (2.0 * var)).exp()) as f32);
                }
            }
            f
        })
        .collect()
}

fn drift(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Frame> {
    // smooth periodic texture from a few wrapped bumps
    let mut base = vec![0f64; WIDTH * HEIGHT];
    for _ in 0..rng.random_range(3..=5) {
        let bx = rng.random_range(0.0..WIDTH as f64);
        let by = rng.random_range(0.0..HEIGHT as f64);
        let s = rng.random_range(1.5..3.5f64);
        let a = rng.random_range(0.4..1.0);
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let dx = wrap_dist(x as f64 - bx, WIDTH as f64);
                let dy = wrap_dist(y as f64 - by, HEIGHT as f64);
                base[y * WIDTH + x] += a * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            }
        }
    }
    let velocity = |rng: &mut ChaCha8Rng| -> i64 {
        let mag = rng.random_range(0..=2i64);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    let (mut vx, vy) = (velocity(rng), velocity(rng));
    if vx == 0 && vy == 0 {
        vx = if rng.random_bool(0.5) { 1 } else { -1 };
    }
    (0..frames)
        .map(|t| {
            let mut f = Frame::zeros(WIDTH, HEIGHT, 1);
            for y in 0..HEIGHT {
                for x in 0..WIDTH {
                    let sx = (x as i64 - vx * t as i64).rem_euclid(WIDTH as i64) as usize;
                    let sy = (y as i64 - vy * t as i64).rem_euclid(HEIGHT as i64) as usize;
                    f.set(y, x, 0, base[sy * WIDTH + sx].min(1.0) as f32);
                }
            }
            f
        })
        .collect()
}

fn wrap_dist(d: f64, period: f64) -> f64 {
    let d = d.rem_euclid(period);
    d.min(period - d)
}
