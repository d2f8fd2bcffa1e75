//! Run configuration (TOML) and command-line overrides.

use std::path::{Path, PathBuf};

use revprobe::probe::PromptMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "one")]
    pub n_noise: usize,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    #[serde(default)]
    pub t_exclusion: f64,
}

fn default_k() -> usize {
    10
}

fn one() -> usize {
    1
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self { k: 10, n_noise: 1, prompt_mode: PromptMode::Caption, t_exclusion: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_resamples() -> usize {
    2000
}

fn default_confidence() -> f64 {
    0.9
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { resamples: 2000, confidence: 0.9 }
    }
}

/// Where causal labels come from: a VLM endpoint, or a label file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Cache/source id for the judge; defaults to the model name.
    pub id: Option<String>,
    pub prompt_file: Option<PathBuf>,
    /// Human or precomputed labels; used instead of the endpoint when set.
    pub labels: Option<PathBuf>,
    #[serde(default = "one")]
    pub concurrency: usize,
    #[serde(default)]
    pub min_interval_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySection {
    #[serde(default = "default_fraction")]
    pub symmetric_fraction: f64,
    /// Precomputed `video_id, m_1, ...` magnitudes; flow is estimated otherwise.
    pub magnitudes: Option<PathBuf>,
}

fn default_fraction() -> f64 {
    0.3
}

impl Default for EntropySection {
    fn default() -> Self {
        Self { symmetric_fraction: 0.3, magnitudes: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_replays")]
    pub replay_limit: u32,
    #[serde(default = "default_r")]
    pub rankings_per_group: usize,
    #[serde(default = "default_g")]
    pub groups_per_annotator: usize,
    /// JSONL of ranking groups.
    pub groups: Option<PathBuf>,
    #[serde(default)]
    pub annotators: Vec<String>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_replays() -> u32 {
    3
}

fn default_r() -> usize {
    3
}

fn default_g() -> usize {
    6
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            data_dir: None,
            replay_limit: 3,
            rankings_per_group: 3,
            groups_per_annotator: 6,
            groups: None,
            annotators: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub catalog: PathBuf,
    pub registry: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub judge: JudgeSection,
    #[serde(default)]
    pub entropy: EntropySection,
    #[serde(default)]
    pub annotate: AnnotateSection,
    /// `metric, model_id, value[, higher|lower]` rows for cross-metric τ.
    pub external_metrics: Option<PathBuf>,
    /// Exported direction judgments for the human baseline row.
    pub human_judgments: Option<PathBuf>,
    /// Exported preference rankings.
    pub human_rankings: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Flag values that win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub prompt_mode: Option<PromptMode>,
    pub symmetric_fraction: Option<f64>,
    pub bootstrap_resamples: Option<usize>,
    pub confidence: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Config {
    /// Parses and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c: Config = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.resolve(base);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.catalog);
        fix(&mut self.registry);
        fix(&mut self.output_dir);
        for p in [
            &mut self.judge.prompt_file,
            &mut self.judge.labels,
            &mut self.entropy.magnitudes,
            &mut self.annotate.data_dir,
            &mut self.annotate.groups,
            &mut self.external_metrics,
            &mut self.human_judgments,
            &mut self.human_rankings,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(m) = o.prompt_mode {
            self.probe.prompt_mode = m;
        }
        if let Some(f) = o.symmetric_fraction {
            self.entropy.symmetric_fraction = f;
        }
        if let Some(b) = o.bootstrap_resamples {
            self.bootstrap.resamples = b;
        }
        if let Some(c) = o.confidence {
            self.bootstrap.confidence = c;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.probe.k == 0 || self.probe.n_noise == 0 {
            return bad("probe.K and probe.n_noise must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.probe.t_exclusion) {
            return bad(format!("probe.t_exclusion {} outside [0, 0.5)", self.probe.t_exclusion));
        }
        if self.bootstrap.resamples < 100 {
            return bad(format!("bootstrap.resamples {} < 100", self.bootstrap.resamples));
        }
        if !(self.bootstrap.confidence > 0.0 && self.bootstrap.confidence < 1.0) {
            return bad(format!("bootstrap.confidence {} outside (0, 1)", self.bootstrap.confidence));
        }
        let f = self.entropy.symmetric_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("entropy.symmetric_fraction {f} outside (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults_and_absolute_paths() {
        let c = Config::from_toml("catalog = \"cat.jsonl\"\nregistry = \"/abs/models.toml\"\n", Path::new("/runs/a")).unwrap();
        assert_eq!(c.catalog, PathBuf::from("/runs/a/cat.jsonl"));
        assert_eq!(c.registry, PathBuf::from("/abs/models.toml"));
        assert_eq!(c.output_dir, PathBuf::from("/runs/a/out"));
        assert_eq!(c.probe.k, 10);
        assert_eq!(c.bootstrap.resamples, 2000);
        assert_eq!(c.annotate.rankings_per_group, 3);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_and_validation() {
        let mut c = Config::from_toml("catalog = \"c\"\nregistry = \"r\"\n[probe]\nK = 4\n", Path::new(".")).unwrap();
        assert_eq!(c.probe.k, 4);
        c.apply(&Overrides { confidence: Some(1.5), ..Default::default() });
        assert!(c.validate().is_err());
        assert!(Config::from_toml("catalog = \"c\"\nregistry = \"r\"\nbogus = 1\n", Path::new(".")).is_err());
    }
}
