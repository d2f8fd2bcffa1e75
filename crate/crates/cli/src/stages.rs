//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use revprobe::aggregate::{self, AggregateRow, Correlation, ExternalMetric, PreferenceSummary};
use revprobe::catalog::{self, Catalog, MediaDecoder, VideoRecord};
use revprobe::entropy::{self, BlockMatcher, FlowProfile};
use revprobe::frame::Direction;
use revprobe::judgment::{DirectionJudgment, PreferenceRanking};
use revprobe::metrics::{self, BootstrapConfig, CciReport, RsiReport};
use revprobe::partition::{self, HttpJudge, JudgeContext, LabelCache, Partition, RateLimiter, RetryPolicy};
use revprobe::preprocess::{self, ModelSpec};
use revprobe::probe::remote::ProcessAdapter;
use revprobe::probe::toy::{ToyAdapter, ToyDenoiser};
use revprobe::probe::{self, AdapterError, DenoiserAdapter, LossRecord, LossRequest, PairOutcome, ProbeConfig, PromptMode};
use revprobe::seed;
use revprobe::util;
use serde::{Deserialize, Serialize};

use crate::{Config, Layout};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    util::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: &'static str) -> Result<T> {
    Layout::require(path, stage)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_catalog(layout: &Layout) -> Result<Catalog> {
    Layout::require(&layout.catalog(), "ingest")?;
    Ok(catalog::load_manifest(&layout.catalog())?)
}

pub fn load_models(layout: &Layout) -> Result<Vec<ModelSpec>> {
    Layout::require(&layout.registry(), "ingest")?;
    Ok(preprocess::load_registry(&layout.registry())?)
}

fn bootstrap_config(cfg: &Config, domain: &str, key: &str) -> BootstrapConfig {
    BootstrapConfig {
        resamples: cfg.bootstrap.resamples,
        confidence: cfg.bootstrap.confidence,
        seed: seed!(cfg.seed, "bootstrap", domain, key),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub subsets: usize,
    pub videos: usize,
    pub models: usize,
}

/// Validates the manifest and registry and copies both into the output
/// directory with media and adapter paths made absolute.
pub fn ingest(cfg: &Config) -> Result<IngestSummary> {
    let layout = Layout::new(&cfg.output_dir);
    std::fs::create_dir_all(&layout.root).with_context(|| format!("creating {}", layout.root.display()))?;
    let source = catalog::load_manifest(&cfg.catalog)?;
    source.validate_captions(cfg.probe.prompt_mode)?;
    let records: Vec<VideoRecord> = source
        .records()
        .iter()
        .map(|r| VideoRecord { uri: source.resolve_uri(r).display().to_string(), ..r.clone() })
        .collect();
    let resolved = Catalog::new(source.subsets().to_vec(), records)?;
    util::write_atomic(&layout.catalog(), resolved.to_manifest_string().as_bytes())?;

    let reg_dir = cfg.registry.parent().unwrap_or(Path::new("."));
    let models: Vec<ModelSpec> = preprocess::load_registry(&cfg.registry)?
        .into_iter()
        .map(|mut m| {
            if let Some(path) = m.adapter.as_deref().and_then(|a| a.strip_prefix("toy:")) {
                let p = PathBuf::from(path);
                if p.is_relative() {
                    m.adapter = Some(format!("toy:{}", reg_dir.join(p).display()));
                }
            }
            m
        })
        .collect();
    util::write_atomic(&layout.registry(), preprocess::registry_to_toml(&models).as_bytes())?;
    Ok(IngestSummary { subsets: resolved.subsets().len(), videos: resolved.len(), models: models.len() })
}

/// Writes each model's per-video preprocessing plan.
pub fn preprocess(cfg: &Config) -> Result<usize> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let models = load_models(&layout)?;
    for m in &models {
        let plans: Vec<_> = catalog.records().iter().map(|r| preprocess::plan_record(r, m)).collect();
        util::write_jsonl(&layout.preprocess(&m.model_id), &plans)?;
    }
    Ok(models.len())
}

/// Presents an adapter under the registry's spec.
struct Registered<A> {
    spec: ModelSpec,
    inner: A,
}

impl<A: DenoiserAdapter> DenoiserAdapter for Registered<A> {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn denoising_loss(&self, req: &LossRequest<'_>) -> Result<f64, AdapterError> {
        self.inner.denoising_loss(req)
    }
}

/// `toy:<weights.json>` or `process:<command line>`.
pub fn build_adapter(spec: &ModelSpec) -> Result<Option<Box<dyn DenoiserAdapter>>> {
    let Some(decl) = spec.adapter.as_deref() else { return Ok(None) };
    if let Some(path) = decl.strip_prefix("toy:") {
        let model = ToyDenoiser::load(Path::new(path))?;
        return Ok(Some(Box::new(Registered { spec: spec.clone(), inner: ToyAdapter::new(model) })));
    }
    if decl.starts_with("process:") {
        return Ok(Some(Box::new(ProcessAdapter::from_declaration(spec.clone(), decl)?)));
    }
    bail!("model {}: unknown adapter declaration {decl:?}", spec.model_id)
}

pub fn probe_config(cfg: &Config) -> ProbeConfig {
    ProbeConfig {
        k: cfg.probe.k,
        n_noise: cfg.probe.n_noise,
        base_seed: seed!(cfg.seed, "probe"),
        prompt_mode: cfg.probe.prompt_mode,
        t_exclusion: cfg.probe.t_exclusion,
        check_determinism: true,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub model_id: String,
    pub already_done: usize,
    pub probed: usize,
}

fn completed(records: &[LossRecord]) -> BTreeSet<String> {
    probe::outcomes_from_records(records).into_iter().map(|o| o.video_id).collect()
}

/// Probes every catalog video for every model with an adapter, appending
/// loss records as videos finish; videos already recorded are skipped.
pub fn probe(cfg: &Config, decoder: &dyn MediaDecoder) -> Result<Vec<ProbeSummary>> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let models = load_models(&layout)?;
    let pcfg = probe_config(cfg);
    let mut out = Vec::new();
    for spec in &models {
        Layout::require(&layout.preprocess(&spec.model_id), "preprocess")?;
        let Some(adapter) = build_adapter(spec)? else {
            log::warn!("model {} declares no adapter; skipped", spec.model_id);
            continue;
        };
        let path = layout.losses(&spec.model_id, cfg.probe.prompt_mode);
        let existing: Vec<LossRecord> = if path.exists() { util::read_jsonl(&path)? } else { Vec::new() };
        let done = completed(&existing);
        let todo: Vec<&VideoRecord> = catalog.records().iter().filter(|r| !done.contains(&r.video_id)).collect();
        log::info!("{}: {} done, {} to probe", spec.model_id, done.len(), todo.len());
        let mut probed = 0;
        for chunk in todo.chunks(8 * cfg.workers.max(1)) {
            let results = probe::probe_many(&catalog, chunk, adapter.as_ref(), &pcfg, decoder, cfg.workers);
            let mut failure = None;
            for (record, result) in chunk.iter().zip(results) {
                match result {
                    Ok(o) => {
                        util::append_jsonl(&path, &o.forward)?;
                        util::append_jsonl(&path, &o.reversed)?;
                        probed += 1;
                    }
                    Err(e) if failure.is_none() => {
                        failure = Some(anyhow!(e).context(format!("probing {} with {}", record.video_id, spec.model_id)))
                    }
                    Err(_) => {}
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        out.push(ProbeSummary { model_id: spec.model_id.clone(), already_done: done.len(), probed });
    }
    Ok(out)
}

/// Outcomes per model for the configured prompt mode.
pub fn load_outcomes(cfg: &Config, models: &[ModelSpec]) -> Result<BTreeMap<String, Vec<PairOutcome>>> {
    let layout = Layout::new(&cfg.output_dir);
    let mut out = BTreeMap::new();
    for m in models {
        let path = layout.losses(&m.model_id, cfg.probe.prompt_mode);
        if !path.exists() {
            log::warn!("no {} loss records for {}", cfg.probe.prompt_mode, m.model_id);
            continue;
        }
        let records: Vec<LossRecord> = util::read_jsonl(&path)?;
        out.insert(m.model_id.clone(), probe::outcomes_from_records(&records));
    }
    if out.is_empty() {
        return Err(crate::MissingArtifact { artifact: layout.losses_dir(), stage: "probe" }.into());
    }
    Ok(out)
}

fn load_judgments(cfg: &Config) -> Result<Option<Vec<DirectionJudgment>>> {
    match &cfg.human_judgments {
        Some(p) => Ok(Some(util::read_jsonl(p)?)),
        None => Ok(None),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsiArtifact {
    pub prompt_mode: PromptMode,
    pub models: BTreeMap<String, RsiReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<RsiReport>,
}

pub fn rsi(cfg: &Config) -> Result<RsiArtifact> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let models = load_models(&layout)?;
    let subset_of = catalog.subset_map();
    let mut reports = BTreeMap::new();
    for (model, outcomes) in load_outcomes(cfg, &models)? {
        if outcomes.len() < catalog.len() {
            log::warn!("{model}: {} of {} videos probed", outcomes.len(), catalog.len());
        }
        let groups = metrics::group_by_subset(&outcomes, &subset_of)?;
        let report = metrics::dataset_rsi_with_ci(&groups, &bootstrap_config(cfg, "rsi", &model))?;
        reports.insert(model, report);
    }
    let human = match load_judgments(cfg)? {
        Some(j) => Some(metrics::human_rsi_with_ci(&j, &subset_of, &bootstrap_config(cfg, "rsi", "human"))?),
        None => None,
    };
    let art = RsiArtifact { prompt_mode: cfg.probe.prompt_mode, models: reports, human };
    write_json(&layout.rsi(), &art)?;
    Ok(art)
}

/// Labels the catalog with the configured judge, or reads a label file.
pub fn partition(cfg: &Config, decoder: &dyn MediaDecoder) -> Result<Partition> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let labels = if let Some(path) = &cfg.judge.labels {
        partition::load_human_labels(path)?
    } else if let Some(endpoint) = &cfg.judge.endpoint {
        let model = cfg.judge.model.clone().unwrap_or_else(|| "default".into());
        let id = cfg.judge.id.clone().unwrap_or_else(|| model.clone());
        let judge = HttpJudge::new(id, endpoint.clone(), model);
        let prompt = match &cfg.judge.prompt_file {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => partition::DEFAULT_PROMPT.to_string(),
        };
        let cache = LabelCache::open(&layout.label_cache())?;
        let limiter = RateLimiter::new(std::time::Duration::from_millis(cfg.judge.min_interval_ms));
        let ctx = JudgeContext {
            catalog: &catalog,
            decoder,
            judge: &judge,
            cache: &cache,
            prompt: &prompt,
            retry: RetryPolicy::default(),
            limiter: &limiter,
        };
        let records: Vec<&VideoRecord> = catalog.records().iter().collect();
        partition::judge_all(&ctx, &records, cfg.judge.concurrency)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
    } else {
        bail!("partition needs judge.labels or judge.endpoint in the config");
    };
    let known: BTreeSet<&str> = catalog.records().iter().map(|r| r.video_id.as_str()).collect();
    let labels: Vec<_> = labels.into_iter().filter(|l| known.contains(l.video_id.as_str())).collect();
    let p = partition::partition_dataset(&labels)?;
    write_json(&layout.partition(), &p)?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CciArtifact {
    pub prompt_mode: PromptMode,
    pub n_causal: usize,
    pub n_noncausal: usize,
    /// Videos without a label (abstained or absent); left out of both sides.
    pub n_unlabeled: usize,
    pub models: BTreeMap<String, CciReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<CciReport>,
}

pub fn cci(cfg: &Config) -> Result<CciArtifact> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let models = load_models(&layout)?;
    let part: Partition = read_json(&layout.partition(), "partition")?;
    let labels = part.label_map();
    let subset_of = catalog.subset_map();
    let n_unlabeled = catalog.records().iter().filter(|r| !labels.contains_key(&r.video_id)).count();
    let mut reports = BTreeMap::new();
    for (model, outcomes) in load_outcomes(cfg, &models)? {
        let labeled: Vec<PairOutcome> = outcomes.into_iter().filter(|o| labels.contains_key(&o.video_id)).collect();
        let groups = metrics::group_by_subset(&labeled, &subset_of)?;
        let report = metrics::cci_with_ci(&groups, &labels, &bootstrap_config(cfg, "cci", &model))?;
        reports.insert(model, report);
    }
    let human = match load_judgments(cfg)? {
        Some(j) => {
            let labeled: Vec<DirectionJudgment> = j.into_iter().filter(|j| labels.contains_key(&j.video_id)).collect();
            let bc = bootstrap_config(cfg, "cci", "human");
            Some(metrics::human_cci(&labeled, &subset_of, &labels, Some(&bc))?)
        }
        None => None,
    };
    let art = CciArtifact {
        prompt_mode: cfg.probe.prompt_mode,
        n_causal: part.causal.len(),
        n_noncausal: part.noncausal.len(),
        n_unlabeled,
        models: reports,
        human,
    };
    write_json(&layout.cci(), &art)?;
    Ok(art)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyArtifact {
    pub fraction: f64,
    pub n_profiles: usize,
    /// Profiles with a defined asymmetry score (non-zero motion).
    pub n_defined: usize,
    pub retained: Vec<String>,
    pub models: BTreeMap<String, RsiReport>,
}

/// Flow profiles, the low-asymmetry subset, and RSI restricted to it.
pub fn entropy(cfg: &Config, decoder: &dyn MediaDecoder) -> Result<EntropyArtifact> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let models = load_models(&layout)?;
    let profiles: Vec<FlowProfile> = if let Some(path) = &cfg.entropy.magnitudes {
        entropy::load_magnitudes(path)?
    } else if layout.flow().exists() {
        entropy::load_magnitudes(&layout.flow())?
    } else {
        let matcher = BlockMatcher::default();
        let mut profiles = Vec::with_capacity(catalog.len());
        for r in catalog.records() {
            let seq = catalog::decode(&catalog, r, Direction::Forward, decoder)?;
            profiles.push(entropy::flow_magnitudes(&seq, &matcher)?);
        }
        util::write_atomic(&layout.flow(), entropy::magnitudes_to_string(&profiles).as_bytes())?;
        profiles
    };
    let retained = entropy::symmetric_subset(&profiles, cfg.entropy.symmetric_fraction)?;
    let keep: BTreeSet<&str> = retained.iter().map(String::as_str).collect();
    let subset_of = catalog.subset_map();
    let mut reports = BTreeMap::new();
    for (model, outcomes) in load_outcomes(cfg, &models)? {
        let kept: Vec<PairOutcome> = outcomes.into_iter().filter(|o| keep.contains(o.video_id.as_str())).collect();
        if kept.is_empty() {
            log::warn!("{model}: no probed video in the retained subset");
            continue;
        }
        let groups = metrics::group_by_subset(&kept, &subset_of)?;
        reports.insert(model.clone(), metrics::dataset_rsi_with_ci(&groups, &bootstrap_config(cfg, "entropy", &model))?);
    }
    let art = EntropyArtifact {
        fraction: cfg.entropy.symmetric_fraction,
        n_profiles: profiles.len(),
        n_defined: profiles.iter().filter(|p| p.asymmetry.is_some()).count(),
        retained,
        models: reports,
    };
    write_json(&layout.entropy(), &art)?;
    Ok(art)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateArtifact {
    pub rows: Vec<AggregateRow>,
    /// How equal rank sums are ordered.
    #[serde(default)]
    pub tie_break: String,
    pub correlations: BTreeMap<String, Correlation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferenceSummary>,
}

pub const TIE_BREAK: &str = "equal rank sums go to the model with the better (numerically smaller) RSI rank";

pub fn aggregate(cfg: &Config) -> Result<AggregateArtifact> {
    let layout = Layout::new(&cfg.output_dir);
    let models = load_models(&layout)?;
    let rsi: RsiArtifact = read_json(&layout.rsi(), "rsi")?;
    let cci: CciArtifact = read_json(&layout.cci(), "cci")?;
    let rsi_scores: BTreeMap<String, f64> = rsi.models.iter().map(|(m, r)| (m.clone(), r.overall)).collect();
    let cci_scores: BTreeMap<String, f64> = cci.models.iter().map(|(m, r)| (m.clone(), r.cci)).collect();
    let rows = aggregate::aggregate_rank(&rsi_scores, &cci_scores)?;

    let mut external: BTreeMap<String, ExternalMetric> = aggregate::registry_metrics(&models);
    if let Some(p) = &cfg.external_metrics {
        external.extend(aggregate::load_external(p)?);
    }
    let preference = match &cfg.human_rankings {
        Some(p) => {
            let rankings: Vec<PreferenceRanking> = util::read_jsonl(p)?;
            let summary = aggregate::preference_aggregate(&rankings)?;
            external.insert(
                "human_preference".into(),
                ExternalMetric { values: summary.scores.clone(), higher_is_better: true },
            );
            Some(summary)
        }
        None => None,
    };
    let final_ranks: BTreeMap<String, u32> = rows.iter().map(|r| (r.model_id.clone(), r.final_rank)).collect();
    let art = AggregateArtifact {
        correlations: aggregate::cross_correlations(&final_ranks, &external),
        rows,
        tie_break: TIE_BREAK.into(),
        preference,
    };
    write_json(&layout.aggregate(), &art)?;
    Ok(art)
}

/// Renders and writes the report from the metric artifacts.
pub fn report(cfg: &Config) -> Result<String> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let rsi: RsiArtifact = read_json(&layout.rsi(), "rsi")?;
    let cci: CciArtifact = read_json(&layout.cci(), "cci")?;
    let agg: AggregateArtifact = read_json(&layout.aggregate(), "aggregate")?;
    let ent: Option<EntropyArtifact> =
        if layout.entropy().exists() { Some(read_json(&layout.entropy(), "entropy")?) } else { None };
    let text = crate::report::render(&catalog, &rsi, &cci, &agg, ent.as_ref());
    util::write_atomic(&layout.report(), text.as_bytes())?;
    Ok(text)
}

/// Builds the annotation service from the config and the ingested catalog.
pub fn annotate_service(cfg: &Config) -> Result<Arc<revprobe_annotate::Service>> {
    let layout = Layout::new(&cfg.output_dir);
    let catalog = load_catalog(&layout)?;
    let a = &cfg.annotate;
    let mut study = revprobe_annotate::StudyConfig::new(a.data_dir.clone().unwrap_or_else(|| layout.root.join("annotations")));
    study.replay_limit = a.replay_limit;
    study.rankings_per_group = a.rankings_per_group;
    study.groups_per_annotator = a.groups_per_annotator;
    study.seed = seed!(cfg.seed, "annotate");
    let (groups, base) = match &a.groups {
        Some(p) => (revprobe_annotate::load_groups(p)?, p.parent().map(Path::to_path_buf)),
        None => (Vec::new(), None),
    };
    let svc = revprobe_annotate::Service::open(
        study,
        catalog,
        groups,
        &a.annotators,
        base.as_deref(),
        Arc::new(catalog::HostDecoder),
    )?;
    Ok(Arc::new(svc))
}
