//! Minimal raw clip container (`.rvclip`).
//!
//! Layout, little-endian:
//!
//! ```text
//! magic   b"RVCL"
//! version u8   (1)
//! dtype   u8   (0 = u8 scaled by 1/255, 1 = f32)
//! chans   u8
//! pad     u8
//! frames  u32
//! height  u32
//! width   u32
//! data    frames × height × width × chans samples
//! ```
//!
//! Used for synthetic clips and for handing preprocessed frames to
//! out-of-process adapters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::frame::Frame;

pub const EXTENSION: &str = "rvclip";
const MAGIC: &[u8; 4] = b"RVCL";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleType {
    U8,
    F32,
}

#[derive(Debug, thiserror::Error)]
pub enum ClipFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a clip file (bad magic)")]
    BadMagic,
    #[error("unsupported clip version {0}")]
    Version(u8),
    #[error("unsupported sample type {0}")]
    SampleType(u8),
    #[error("frames have inconsistent shapes")]
    Ragged,
    #[error("truncated clip payload")]
    Truncated,
}

pub fn write_clip(path: &Path, frames: &[Frame], dtype: SampleType) -> Result<(), ClipFileError> {
    let (w, h, c) = match frames.first() {
        Some(f) => (f.width, f.height, f.channels),
        None => (0, 0, 1),
    };
    if frames.iter().any(|f| f.width != w || f.height != h || f.channels != c) {
        return Err(ClipFileError::Ragged);
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    let code = match dtype {
        SampleType::U8 => 0u8,
        SampleType::F32 => 1u8,
    };
    out.write_all(&[VERSION, code, c as u8, 0])?;
    out.write_all(&(frames.len() as u32).to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    for f in frames {
        match dtype {
            SampleType::U8 => {
                let bytes: Vec<u8> = f
                    .data
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect();
                out.write_all(&bytes)?;
            }
            SampleType::F32 => {
                for v in &f.data {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_clip(path: &Path) -> Result<Vec<Frame>, ClipFileError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut header = [0u8; 20];
    input.read_exact(&mut header).map_err(|_| ClipFileError::Truncated)?;
    if &header[0..4] != MAGIC {
        return Err(ClipFileError::BadMagic);
    }
    if header[4] != VERSION {
        return Err(ClipFileError::Version(header[4]));
    }
    let dtype = match header[5] {
        0 => SampleType::U8,
        1 => SampleType::F32,
        other => return Err(ClipFileError::SampleType(other)),
    };
    let c = header[6] as usize;
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    let per_frame = w * h * c;
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let data = match dtype {
            SampleType::U8 => {
                let mut buf = vec![0u8; per_frame];
                input.read_exact(&mut buf).map_err(|_| ClipFileError::Truncated)?;
                buf.into_iter().map(|b| b as f32 / 255.0).collect()
            }
            SampleType::F32 => {
                let mut buf = vec![0u8; per_frame * 4];
                input.read_exact(&mut buf).map_err(|_| ClipFileError::Truncated)?;
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            }
        };
        frames.push(Frame::new(w, h, c, data));
    }
    Ok(frames)
}
