//! Decoded video frames and direction-tagged frame sequences.

use serde::{Deserialize, Serialize};

/// One decoded frame, row-major `height × width × channels`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            width * height * channels,
            "frame buffer does not match {width}x{height}x{channels}"
        );
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// 8-bit RGB PNG bytes (grayscale is replicated).
    pub fn to_png(&self) -> Vec<u8> {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let rgb: Vec<u8> = self
            .data
            .chunks_exact(self.channels.max(1))
            .flat_map(|px| {
                if px.len() >= 3 {
                    [q(px[0]), q(px[1]), q(px[2])]
                } else {
                    [q(px[0]); 3]
                }
            })
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, rgb).expect("sized buffer");
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .expect("png encode");
        png
    }

    /// Channel-averaged intensity plane.
    pub fn luma(&self) -> Vec<f32> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f32>() / self.channels as f32)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reversed,
            Direction::Reversed => Direction::Forward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reversed => "reversed",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Frames of one clip in a given temporal direction.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub direction: Direction,
    pub source_video_id: String,
}

impl FrameSequence {
    pub fn new(source_video_id: impl Into<String>, direction: Direction, frames: Vec<Frame>) -> Self {
        Self {
            frames,
            direction,
            source_video_id: source_video_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the first frame, `(0, 0)` when empty.
    pub fn resolution(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0))
    }

    /// Temporal reversal; an involution.
    pub fn reversed(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.reverse();
        Self {
            frames,
            direction: self.direction.flipped(),
            source_video_id: self.source_video_id.clone(),
        }
    }

    pub fn into_reversed(mut self) -> Self {
        self.frames.reverse();
        self.direction = self.direction.flipped();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(tag: f32) -> Frame {
        Frame::new(2, 1, 1, vec![tag, tag])
    }

    #[test]
    fn reversal_orders_frames_backwards() {
        let seq = FrameSequence::new("v", Direction::Forward, vec![tagged(0.1), tagged(0.2), tagged(0.3)]);
        let rev = seq.reversed();
        assert_eq!(rev.direction, Direction::Reversed);
        let tags: Vec<f32> = rev.frames.iter().map(|f| f.data[0]).collect();
        assert_eq!(tags, vec![0.3, 0.2, 0.1]);
        assert_eq!(rev.reversed(), seq);
    }

    #[test]
    fn luma_averages_channels() {
        let f = Frame::new(1, 1, 3, vec![0.0, 0.3, 0.6]);
        assert!((f.luma()[0] - 0.3).abs() < 1e-6);
    }
}
