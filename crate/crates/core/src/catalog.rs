//! Dataset catalog: thematic subsets, clip metadata and frame decoding.
//!
//! A manifest is a line-delimited JSON file. Each line is either a subset
//! declaration or a video record:
//!
//! ```text
//! {"kind":"subset","subset_id":"general","display_name":"General","intended_clip_seconds":3.0}
//! {"kind":"video","video_id":"g0001","subset_id":"general","uri":"clips/g0001.mp4","caption":"...",
//!  "duration_s":3.0,"fps_native":30.0,"num_frames":90,"width":640,"height":360}
//! ```
//!
//! New subsets and records can be appended to an existing manifest.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::clipfile;
use crate::frame::{Direction, Frame, FrameSequence};
use crate::probe::PromptMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub subset_id: String,
    pub uri: String,
    pub caption: String,
    pub duration_s: f64,
    pub fps_native: f64,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub subset_id: String,
    pub display_name: String,
    pub intended_clip_seconds: f64,
    #[serde(default)]
    pub record_ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ManifestLine {
    Subset {
        subset_id: String,
        display_name: String,
        intended_clip_seconds: f64,
    },
    Video(VideoRecord),
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate video_id {0:?}")]
    DuplicateVideo(String),
    #[error("duplicate subset_id {0:?}")]
    DuplicateSubset(String),
    #[error("video {video_id:?} references undeclared subset {subset_id:?}")]
    DanglingSubset { video_id: String, subset_id: String },
    #[error("video {video_id:?}: duration {duration_s}s disagrees with {num_frames} frames at {fps} fps")]
    DurationMismatch {
        video_id: String,
        duration_s: f64,
        num_frames: usize,
        fps: f64,
    },
    #[error("video {video_id:?}: {message}")]
    InvalidRecord { video_id: String, message: String },
    #[error("video {0:?} has an empty caption but prompt mode is caption")]
    EmptyCaption(String),
    #[error("video {video_id:?}: cannot decode {uri}: {message}")]
    Decode {
        video_id: String,
        uri: String,
        message: String,
    },
    #[error("video {video_id:?}: decoded {frames} frame(s), need at least 2")]
    TooFewFrames { video_id: String, frames: usize },
    #[error("unknown video {0:?}")]
    UnknownVideo(String),
}

impl VideoRecord {
    /// Checks the per-record invariants (frame count, duration, sizes).
    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |message: &str| CatalogError::InvalidRecord {
            video_id: self.video_id.clone(),
            message: message.to_string(),
        };
        if self.video_id.is_empty() {
            return Err(invalid("empty video_id"));
        }
        if self.num_frames < 2 {
            return Err(invalid("num_frames must be at least 2"));
        }
        if !(self.fps_native.is_finite() && self.fps_native > 0.0) {
            return Err(invalid("fps_native must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("width and height must be positive"));
        }
        let expected = self.num_frames as f64 / self.fps_native;
        let tolerance = 1.0 / self.fps_native + 1e-9;
        if !self.duration_s.is_finite() || (self.duration_s - expected).abs() > tolerance {
            return Err(CatalogError::DurationMismatch {
                video_id: self.video_id.clone(),
                duration_s: self.duration_s,
                num_frames: self.num_frames,
                fps: self.fps_native,
            });
        }
        Ok(())
    }
}

/// Validated, read-only collection of subsets and records.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    subsets: Vec<SubsetManifest>,
    records: Vec<VideoRecord>,
    index: HashMap<String, usize>,
    base_dir: Option<PathBuf>,
}

impl Catalog {
    /// Builds a catalog from subset declarations and records, enforcing every invariant.
    pub fn new(
        subsets: Vec<SubsetManifest>,
        records: Vec<VideoRecord>,
    ) -> Result<Self, CatalogError> {
        let mut by_subset: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut order = Vec::with_capacity(subsets.len());
        for s in &subsets {
            if by_subset.insert(s.subset_id.clone(), Vec::new()).is_some() {
                return Err(CatalogError::DuplicateSubset(s.subset_id.clone()));
            }
            order.push(s.subset_id.clone());
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.video_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateVideo(r.video_id.clone()));
            }
            r.validate()?;
            match by_subset.get_mut(&r.subset_id) {
                Some(ids) => ids.push(r.video_id.clone()),
                None => {
                    return Err(CatalogError::DanglingSubset {
                        video_id: r.video_id.clone(),
                        subset_id: r.subset_id.clone(),
                    })
                }
            }
        }
        let subsets = subsets
            .into_iter()
            .map(|mut s| {
                s.record_ids = by_subset.remove(&s.subset_id).unwrap_or_default();
                s
            })
            .collect();
        Ok(Self {
            subsets,
            records,
            index,
            base_dir: None,
        })
    }

    /// Sets the directory relative `uri`s resolve against.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    pub fn subsets(&self) -> &[SubsetManifest] {
        &self.subsets
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.index.get(video_id).map(|&i| &self.records[i])
    }

    /// `video_id → subset_id` for every record.
    pub fn subset_map(&self) -> BTreeMap<String, String> {
        self.records
            .iter()
            .map(|r| (r.video_id.clone(), r.subset_id.clone()))
            .collect()
    }

    /// Rejects empty captions unless the probe runs with the null prompt.
    pub fn validate_captions(&self, mode: PromptMode) -> Result<(), CatalogError> {
        if mode == PromptMode::Null {
            return Ok(());
        }
        match self.records.iter().find(|r| r.caption.trim().is_empty()) {
            Some(r) => Err(CatalogError::EmptyCaption(r.video_id.clone())),
            None => Ok(()),
        }
    }

    /// Resolved media location of a record.
    pub fn resolve_uri(&self, record: &VideoRecord) -> PathBuf {
        let p = PathBuf::from(&record.uri);
        match (&self.base_dir, p.is_relative()) {
            (Some(base), true) => base.join(p),
            _ => p,
        }
    }

    /// Manifest text for this catalog (subsets first, then records).
    pub fn to_manifest_string(&self) -> String {
        let mut lines: Vec<ManifestLine> = self
            .subsets
            .iter()
            .map(|s| ManifestLine::Subset {
                subset_id: s.subset_id.clone(),
                display_name: s.display_name.clone(),
                intended_clip_seconds: s.intended_clip_seconds,
            })
            .collect();
        lines.extend(self.records.iter().cloned().map(ManifestLine::Video));
        crate::util::to_jsonl_string(&lines)
    }
}

/// Parses manifest text. Relative URIs are left unresolved.
pub fn parse_manifest(text: &str) -> Result<Catalog, CatalogError> {
    let mut subsets = Vec::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(trimmed).map_err(|e| CatalogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            ManifestLine::Subset {
                subset_id,
                display_name,
                intended_clip_seconds,
            } => subsets.push(SubsetManifest {
                subset_id,
                display_name,
                intended_clip_seconds,
                record_ids: Vec::new(),
            }),
            ManifestLine::Video(r) => records.push(r),
        }
    }
    Catalog::new(subsets, records)
}

/// Loads and validates a manifest; relative URIs resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<Catalog, CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(parse_manifest(&text)?.with_base_dir(base))
}

/// Source of decoded frames for a record, in forward order.
pub trait MediaDecoder: Send + Sync {
    fn decode_frames(&self, catalog: &Catalog, record: &VideoRecord) -> Result<Vec<Frame>, CatalogError>;
}

/// Decodes `.rvclip` files, directories of still images (sorted by file name),
/// and anything else through an `ffmpeg` executable on `PATH`.
#[derive(Clone, Debug, Default)]
pub struct HostDecoder;

impl HostDecoder {
    fn decode_image_dir(dir: &Path) -> Result<Vec<Frame>, String> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("png" | "jpg" | "jpeg")
                )
            })
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let img = image::open(p).map_err(|e| format!("{}: {e}", p.display()))?.to_rgb8();
                let (w, h) = img.dimensions();
                let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
                Ok(Frame::new(w as usize, h as usize, 3, data))
            })
            .collect()
    }

    fn decode_ffmpeg(path: &Path, width: usize, height: usize) -> Result<Vec<Frame>, String> {
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-vf"])
            .arg(format!("scale={width}:{height}"))
            .arg("-")
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot run ffmpeg: {e}"))?;
        let mut raw = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut raw)
            .map_err(|e| e.to_string())?;
        let status = child.wait().map_err(|e| e.to_string())?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = s.read_to_string(&mut err);
            }
            return Err(format!("ffmpeg failed: {}", err.trim()));
        }
        let per_frame = width * height * 3;
        if per_frame == 0 || raw.len() % per_frame != 0 {
            return Err("ffmpeg output is not a whole number of frames".into());
        }
        Ok(raw
            .chunks_exact(per_frame)
            .map(|chunk| Frame::new(width, height, 3, chunk.iter().map(|&b| b as f32 / 255.0).collect()))
            .collect())
    }
}

impl MediaDecoder for HostDecoder {
    fn decode_frames(&self, catalog: &Catalog, record: &VideoRecord) -> Result<Vec<Frame>, CatalogError> {
        let path = catalog.resolve_uri(record);
        let fail = |message: String| CatalogError::Decode {
            video_id: record.video_id.clone(),
            uri: path.display().to_string(),
            message,
        };
        if path.is_dir() {
            return Self::decode_image_dir(&path).map_err(fail);
        }
        if path.extension().and_then(|e| e.to_str()) == Some(clipfile::EXTENSION) {
            return clipfile::read_clip(&path).map_err(|e| fail(e.to_string()));
        }
        Self::decode_ffmpeg(&path, record.width as usize, record.height as usize).map_err(fail)
    }
}

/// Decodes a record in the requested direction.
///
/// Reversal happens on the decoded pixel frames.
pub fn decode(
    catalog: &Catalog,
    record: &VideoRecord,
    direction: Direction,
    decoder: &dyn MediaDecoder,
) -> Result<FrameSequence, CatalogError> {
    let frames = decoder.decode_frames(catalog, record)?;
    if frames.len() < 2 {
        return Err(CatalogError::TooFewFrames {
            video_id: record.video_id.clone(),
            frames: frames.len(),
        });
    }
    let seq = FrameSequence::new(record.video_id.clone(), Direction::Forward, frames);
    Ok(match direction {
        Direction::Forward => seq,
        Direction::Reversed => seq.into_reversed(),
    })
}
