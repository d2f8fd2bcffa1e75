//! Unattended end-to-end run on synthetic clips with the toy denoiser.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use revprobe::catalog::{Catalog, HostDecoder, SubsetManifest, VideoRecord};
use revprobe::clipfile::{self, SampleType};
use revprobe::metrics::{self, BootstrapConfig, BootstrapInterval, CciReport, RsiReport};
use revprobe::partition::CausalClass;
use revprobe::preprocess;
use revprobe::probe::synth::{self, SynthKind};
use revprobe::probe::toy::{self, TrainConfig, TrainingExample};
use revprobe::probe::{PairOutcome, PromptMode};
use revprobe::seed;
use revprobe::util;
use serde::{Deserialize, Serialize};

use crate::config::{Config, JudgeSection};
use crate::{stages, Layout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyOptions {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    /// Training clips per irreversible kind (shatter, smoke).
    pub train_per_kind: usize,
    /// Held-out shatter and smoke clips, each.
    pub eval_irreversible_per_kind: usize,
    /// Held-out drift and palindrome clips, each.
    pub eval_control: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
}

impl ToyOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            seed: 0,
            workers: 1,
            train_per_kind: 200,
            eval_irreversible_per_kind: 50,
            eval_control: 100,
            epochs: 8,
            hidden: 16,
            bootstrap_resamples: 2000,
            confidence: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub seed: u64,
    pub train_clips: usize,
    pub train_loss_curve: Vec<f64>,
    /// Shatter and smoke subsets together.
    pub irreversible: RsiReport,
    pub palindrome: RsiReport,
    pub drift: RsiReport,
    /// Shatter as the causal side, smoke as the non-causal side.
    pub cci: CciReport,
    pub irreversible_null_prompt: RsiReport,
}

const IRREVERSIBLE: [SynthKind; 2] = [SynthKind::Shatter, SynthKind::Smoke];

fn eval_counts(o: &ToyOptions) -> [(SynthKind, usize); 4] {
    [
        (SynthKind::Shatter, o.eval_irreversible_per_kind),
        (SynthKind::Smoke, o.eval_irreversible_per_kind),
        (SynthKind::Drift, o.eval_control),
        (SynthKind::Palindrome, o.eval_control),
    ]
}

/// Writes held-out clips and their manifest; returns the manifest path.
fn write_inputs(o: &ToyOptions, input: &Path) -> Result<PathBuf> {
    let clips = input.join("clips");
    std::fs::create_dir_all(&clips).with_context(|| format!("creating {}", clips.display()))?;
    let eval_seed = seed!(o.seed, "toy", "eval");
    let mut subsets = Vec::new();
    let mut records = Vec::new();
    let mut labels = String::from("video_id,label\n");
    for (kind, n) in eval_counts(o) {
        if n == 0 {
            continue;
        }
        subsets.push(SubsetManifest {
            subset_id: kind.name().into(),
            display_name: kind.name().into(),
            intended_clip_seconds: synth::FRAMES as f64 / synth::FPS,
            record_ids: vec![],
        });
        for clip in synth::toy_generate(kind, n, eval_seed) {
            let id = format!("{}-{:03}", kind.name(), clip.index);
            let file = format!("clips/{id}.{}", clipfile::EXTENSION);
            clipfile::write_clip(&input.join(&file), &clip.frames, SampleType::F32)?;
            match kind {
                SynthKind::Shatter => labels.push_str(&format!("{id},causal\n")),
                SynthKind::Smoke => labels.push_str(&format!("{id},noncausal\n")),
                _ => {}
            }
            records.push(VideoRecord {
                video_id: id,
                subset_id: kind.name().into(),
                uri: file,
                caption: clip.caption,
                duration_s: clip.frames.len() as f64 / synth::FPS,
                fps_native: synth::FPS,
                num_frames: clip.frames.len(),
                width: synth::WIDTH as u32,
                height: synth::HEIGHT as u32,
            });
        }
    }
    let manifest = input.join("catalog.jsonl");
    util::write_atomic(&manifest, Catalog::new(subsets, records)?.to_manifest_string().as_bytes())?;
    util::write_atomic(&input.join("labels.csv"), labels.as_bytes())?;
    Ok(manifest)
}

/// Trains (or reuses) the toy weights; returns the training loss curve.
fn train(o: &ToyOptions, weights: &Path) -> Result<(usize, Vec<f64>)> {
    let curve_path = weights.with_extension("curve.json");
    let n = o.train_per_kind * IRREVERSIBLE.len();
    if weights.exists() && curve_path.exists() {
        let curve = serde_json::from_str(&std::fs::read_to_string(&curve_path)?)?;
        return Ok((n, curve));
    }
    let train_seed = seed!(o.seed, "toy", "train");
    let examples: Vec<TrainingExample> = IRREVERSIBLE
        .iter()
        .flat_map(|&k| synth::toy_generate(k, o.train_per_kind, train_seed))
        .map(TrainingExample::from)
        .collect();
    let tcfg = TrainConfig {
        epochs: o.epochs,
        seed: seed!(o.seed, "toy", "init"),
        hidden: o.hidden,
        ..TrainConfig::default()
    };
    log::info!("training toy denoiser on {} clips for {} epochs", examples.len(), o.epochs);
    let (adapter, report) = toy::toy_train(&examples, &tcfg)?;
    adapter.model.save(weights)?;
    util::write_atomic(&curve_path, serde_json::to_string(&report.loss_curve)?.as_bytes())?;
    Ok((examples.len(), report.loss_curve))
}

fn select(groups: &BTreeMap<String, Vec<PairOutcome>>, kinds: &[SynthKind]) -> BTreeMap<String, Vec<PairOutcome>> {
    kinds
        .iter()
        .filter_map(|k| groups.get(k.name()).map(|v| (k.name().to_string(), v.clone())))
        .collect()
}

fn outcome_groups(cfg: &Config, catalog: &Catalog) -> Result<BTreeMap<String, Vec<PairOutcome>>> {
    let models = stages::load_models(&Layout::new(&cfg.output_dir))?;
    let outcomes = stages::load_outcomes(cfg, &models)?;
    let all = outcomes.into_values().next().unwrap_or_default();
    Ok(metrics::group_by_subset(&all, &catalog.subset_map())?)
}

/// Runs every stage on synthetic data and appends a toy section to the report.
pub fn toy_e2e(o: &ToyOptions) -> Result<ToySummary> {
    let input = o.output_dir.join("input");
    let manifest = write_inputs(o, &input)?;
    let weights = input.join("toy_weights.json");
    let (train_clips, curve) = train(o, &weights)?;
    let mut spec = toy::toy_spec();
    spec.adapter = Some("toy:toy_weights.json".into());
    let registry = input.join("models.toml");
    util::write_atomic(&registry, preprocess::registry_to_toml(&[spec]).as_bytes())?;

    let mut cfg = Config::from_toml(
        &format!("catalog = {:?}\nregistry = {:?}\n", manifest.display().to_string(), registry.display().to_string()),
        Path::new("."),
    )?;
    cfg.output_dir = o.output_dir.clone();
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    cfg.bootstrap.resamples = o.bootstrap_resamples;
    cfg.bootstrap.confidence = o.confidence;
    cfg.judge = JudgeSection { labels: Some(input.join("labels.csv")), concurrency: 1, ..Default::default() };
    cfg.validate()?;

    let decoder = HostDecoder;
    stages::ingest(&cfg)?;
    stages::preprocess(&cfg)?;
    stages::probe(&cfg, &decoder)?;
    stages::partition(&cfg, &decoder)?;
    stages::rsi(&cfg)?;
    stages::cci(&cfg)?;
    stages::entropy(&cfg, &decoder)?;
    stages::aggregate(&cfg)?;
    let mut report = stages::report(&cfg)?;

    let layout = Layout::new(&cfg.output_dir);
    let catalog = stages::load_catalog(&layout)?;
    let groups = outcome_groups(&cfg, &catalog)?;
    let boot = |domain: &str| BootstrapConfig {
        resamples: o.bootstrap_resamples,
        confidence: o.confidence,
        seed: seed!(o.seed, "toy", domain),
    };
    let irreversible = metrics::dataset_rsi_with_ci(&select(&groups, &IRREVERSIBLE), &boot("irreversible"))?;
    let palindrome = metrics::dataset_rsi_with_ci(&select(&groups, &[SynthKind::Palindrome]), &boot("palindrome"))?;
    let drift = metrics::dataset_rsi_with_ci(&select(&groups, &[SynthKind::Drift]), &boot("drift"))?;
    let labels: BTreeMap<String, CausalClass> = groups
        .iter()
        .flat_map(|(s, os)| {
            let class = if s == SynthKind::Shatter.name() { CausalClass::Causal } else { CausalClass::Noncausal };
            os.iter().map(move |o| (o.video_id.clone(), class))
        })
        .collect();
    let cci = metrics::cci_with_ci(&select(&groups, &IRREVERSIBLE), &labels, &boot("cci"))?;

    let mut null_cfg = cfg.clone();
    null_cfg.probe.prompt_mode = PromptMode::Null;
    stages::probe(&null_cfg, &decoder)?;
    let null_groups = outcome_groups(&null_cfg, &catalog)?;
    let irreversible_null_prompt =
        metrics::dataset_rsi_with_ci(&select(&null_groups, &IRREVERSIBLE), &boot("irreversible-null"))?;

    let summary = ToySummary {
        seed: o.seed,
        train_clips,
        train_loss_curve: curve,
        irreversible,
        palindrome,
        drift,
        cci,
        irreversible_null_prompt,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    util::write_atomic(&o.output_dir.join("toy_summary.json"), text.as_bytes())?;
    report.push_str(&render_summary(&summary));
    util::write_atomic(&layout.report(), report.as_bytes())?;
    Ok(summary)
}

pub fn render_summary(s: &ToySummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Toy run (seed {}, {} training clips)\n", s.seed, s.train_clips);
    let _ = writeln!(out, "| set | videos | value | CI | lower bound | > baseline |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    let ci = |c: Option<&BootstrapInterval>| match c {
        Some(c) => format!(
            "[{:.4}, {:.4}] | {:.4} | {}",
            c.low,
            c.high,
            c.one_sided_low,
            if c.exceeds_baseline { "yes" } else { "no" }
        ),
        None => "n/a | n/a | n/a".into(),
    };
    for (name, r) in [
        ("shatter + smoke", &s.irreversible),
        ("palindrome", &s.palindrome),
        ("drift", &s.drift),
        ("shatter + smoke, null prompt", &s.irreversible_null_prompt),
    ] {
        let _ = writeln!(out, "| {name} | {} | {:.4} | {} |", r.n_total, r.overall, ci(r.ci.as_ref()));
    }
    let _ = writeln!(
        out,
        "| CCI shatter vs smoke | {} | {:.4} | {} |\n",
        s.cci.rsi_c.n_total + s.cci.rsi_nc.n_total,
        s.cci.cci,
        ci(s.cci.ci.as_ref())
    );
    if let Some(last) = s.train_loss_curve.last() {
        let _ = writeln!(out, "Final training loss {last:.5} after {} epochs.", s.train_loss_curve.len());
    }
    out
}
