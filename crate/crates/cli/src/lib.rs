//! Pipeline stages behind the `revprobe` binary.
//!
//! Every stage reads its inputs from, and writes its artifacts to, the run's
//! output directory as plain line-delimited or JSON files, so a run can be
//! inspected and resumed stage by stage.

use std::path::{Path, PathBuf};

pub mod config;
pub mod report;
pub mod stages;
pub mod toy;

pub use config::{Config, ConfigError, Overrides};

/// A stage's input is absent.
#[derive(Debug, thiserror::Error)]
#[error("missing {}: run `{stage}` first", artifact.display())]
pub struct MissingArtifact {
    pub artifact: PathBuf,
    pub stage: &'static str,
}

/// Artifact paths inside an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn catalog(&self) -> PathBuf {
        self.root.join("catalog.jsonl")
    }

    pub fn registry(&self) -> PathBuf {
        self.root.join("models.toml")
    }

    pub fn preprocess(&self, model_id: &str) -> PathBuf {
        self.root.join("preprocess").join(format!("{}.jsonl", file_stem(model_id)))
    }

    pub fn losses_dir(&self) -> PathBuf {
        self.root.join("losses")
    }

    pub fn losses(&self, model_id: &str, mode: revprobe::probe::PromptMode) -> PathBuf {
        self.losses_dir().join(format!("{}.{mode}.jsonl", file_stem(model_id)))
    }

    pub fn label_cache(&self) -> PathBuf {
        self.root.join("labels.jsonl")
    }

    pub fn partition(&self) -> PathBuf {
        self.root.join("partition.json")
    }

    pub fn rsi(&self) -> PathBuf {
        self.root.join("rsi.json")
    }

    pub fn cci(&self) -> PathBuf {
        self.root.join("cci.json")
    }

    pub fn flow(&self) -> PathBuf {
        self.root.join("flow.csv")
    }

    pub fn entropy(&self) -> PathBuf {
        self.root.join("entropy.json")
    }

    pub fn aggregate(&self) -> PathBuf {
        self.root.join("aggregate.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }

    /// Fails with the producing stage's name when `path` is absent.
    pub fn require(path: &Path, stage: &'static str) -> Result<(), MissingArtifact> {
        if path.exists() {
            Ok(())
        } else {
            Err(MissingArtifact { artifact: path.to_path_buf(), stage })
        }
    }
}

/// Model ids may contain `/`; file names may not.
pub fn file_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}
