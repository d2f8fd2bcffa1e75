//! Causal / non-causal split from a vision-language judge or human labels,
//! plus agreement statistics between two labelings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::catalog::{self, Catalog, MediaDecoder, VideoRecord};
use crate::frame::{Direction, Frame};
use crate::util::{self, JsonlError};

pub const DEFAULT_PROMPT: &str = include_str!("../assets/judge_prompt.txt");
pub const API_KEY_ENV: &str = "YOCAUSAL_VLM_KEY";
pub const MAX_JUDGE_FRAMES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalClass {
    Causal,
    Noncausal,
}

impl std::fmt::Display for CausalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CausalClass::Causal => "causal",
            CausalClass::Noncausal => "noncausal",
        })
    }
}

impl std::str::FromStr for CausalClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "causal" | "1" | "true" => Ok(CausalClass::Causal),
            "noncausal" | "non-causal" | "non_causal" | "0" | "false" => Ok(CausalClass::Noncausal),
            other => Err(format!("unknown causal label {other:?}")),
        }
    }
}

/// One judgment. `label = None` records an abstention (unparseable answer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalLabel {
    pub video_id: String,
    pub label: Option<CausalClass>,
    pub source: String,
    pub raw_response: String,
    pub timestamp: String,
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("judge transport: {0}")]
    Transport(String),
    #[error("judge rejected request: {0}")]
    Rejected(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Catalog(#[from] catalog::CatalogError),
    #[error("judging {video_id:?} failed after {attempts} attempts: {source}")]
    Judge {
        video_id: String,
        attempts: usize,
        #[source]
        source: JudgeError,
    },
    #[error(transparent)]
    Cache(#[from] JsonlError),
    #[error("labels come from several sources: {0:?}")]
    MixedSources(Vec<String>),
    #[error("conflicting labels for {video_id:?} from {source_id:?}")]
    Conflict { video_id: String, source_id: String },
    #[error("judge and reference labels share no videos")]
    Disjoint,
    #[error("cannot read labels {path}: {message}")]
    Labels { path: String, message: String },
}

/// A vision-language model answering a prompt about a frame sample.
pub trait VlmJudge: Send + Sync {
    fn judge_id(&self) -> &str;
    fn ask(&self, prompt: &str, frames: &[Frame]) -> Result<String, JudgeError>;
}

/// Reads the verdict from the first non-empty line: `CAUSAL` or `NON-CAUSAL`,
/// optionally preceded by `verdict:` and wrapped in punctuation.
pub fn parse_verdict(response: &str) -> Option<CausalClass> {
    let line = response.lines().map(str::trim).find(|l| !l.is_empty())?;
    let mut tokens = line
        .split(|c: char| c.is_whitespace() || c == ':')
        .map(|t| t.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_'))
        .filter(|t| !t.is_empty());
    let mut token = tokens.next()?.to_ascii_uppercase();
    if token == "VERDICT" {
        token = tokens.next()?.to_ascii_uppercase();
    }
    match token.trim_matches(|c| c == '-' || c == '_') {
        "CAUSAL" => Some(CausalClass::Causal),
        "NON-CAUSAL" | "NONCAUSAL" | "NON_CAUSAL" => Some(CausalClass::Noncausal),
        _ => None,
    }
}

/// Up to `max` uniformly spaced frames, always including the first.
pub fn sample_frames(frames: &[Frame], max: usize) -> Vec<Frame> {
    if frames.len() <= max || max == 0 {
        return frames.to_vec();
    }
    (0..max)
        .map(|i| frames[i * (frames.len() - 1) / (max - 1).max(1)].clone())
        .collect()
}

/// Append-only label cache keyed by (video_id, source); the last record wins.
pub struct LabelCache {
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<(String, String), CausalLabel>>,
}

impl LabelCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: Mutex::new(BTreeMap::new()) }
    }

    /// Opens (or creates on first write) a cache file. A torn final line from
    /// an interrupted run is skipped.
    pub fn open(path: &Path) -> Result<Self, PartitionError> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| JsonlError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<CausalLabel>(line) {
                    Ok(l) => {
                        entries.insert((l.video_id.clone(), l.source.clone()), l);
                    }
                    Err(e) if i + 1 == lines.len() => {
                        log::warn!("{}: skipping torn last line: {e}", path.display());
                    }
                    Err(e) => {
                        return Err(JsonlError::Parse { path: path.display().to_string(), line: i + 1, source: e }.into())
                    }
                }
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), entries: Mutex::new(entries) })
    }

    pub fn get(&self, video_id: &str, source: &str) -> Option<CausalLabel> {
        self.entries.lock().unwrap().get(&(video_id.to_string(), source.to_string())).cloned()
    }

    pub fn insert(&self, label: CausalLabel) -> Result<(), PartitionError> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(path) = &self.path {
            util::append_jsonl(path, &label)?;
        }
        entries.insert((label.video_id.clone(), label.source.clone()), label);
        Ok(())
    }

    pub fn labels(&self, source: &str) -> Vec<CausalLabel> {
        self.entries.lock().unwrap().values().filter(|l| l.source == source).cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff_ms: u64,
    /// Minimum spacing between judge calls across threads.
    pub min_interval_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 4, initial_backoff_ms: 500, min_interval_ms: 0 }
    }
}

/// Shared pacing for judge calls.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        Self { interval: min_interval, next: Mutex::new(Instant::now()) }
    }

    pub fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap();
            let slot = (*next).max(Instant::now());
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub struct JudgeContext<'a> {
    pub catalog: &'a Catalog,
    pub decoder: &'a dyn MediaDecoder,
    pub judge: &'a dyn VlmJudge,
    pub cache: &'a LabelCache,
    pub prompt: &'a str,
    pub retry: RetryPolicy,
    pub limiter: &'a RateLimiter,
}

fn now_stamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Labels one video, consulting the cache first.
pub fn judge_video(ctx: &JudgeContext<'_>, record: &VideoRecord) -> Result<CausalLabel, PartitionError> {
    let judge_id = ctx.judge.judge_id();
    if let Some(hit) = ctx.cache.get(&record.video_id, judge_id) {
        return Ok(hit);
    }
    let decoded = catalog::decode(ctx.catalog, record, Direction::Forward, ctx.decoder)?;
    let frames = sample_frames(&decoded.frames, MAX_JUDGE_FRAMES);
    let prompt = ctx.prompt.replace("{caption}", &record.caption);
    let attempts = ctx.retry.attempts.max(1);
    let mut backoff = Duration::from_millis(ctx.retry.initial_backoff_ms);
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        ctx.limiter.wait();
        match ctx.judge.ask(&prompt, &frames) {
            Ok(text) => break text,
            Err(JudgeError::Transport(msg)) if attempt < attempts => {
                log::warn!("judge transport error on {} (attempt {attempt}): {msg}", record.video_id);
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            Err(source) => {
                return Err(PartitionError::Judge { video_id: record.video_id.clone(), attempts: attempt, source })
            }
        }
    };
    let label = parse_verdict(&raw);
    if label.is_none() {
        log::warn!("unparseable judge answer for {}; recorded as abstention", record.video_id);
    }
    let out = CausalLabel {
        video_id: record.video_id.clone(),
        label,
        source: judge_id.to_string(),
        raw_response: raw,
        timestamp: now_stamp(),
    };
    ctx.cache.insert(out.clone())?;
    Ok(out)
}

/// Judges many records on up to `concurrency` threads; output follows input order.
pub fn judge_all(
    ctx: &JudgeContext<'_>,
    records: &[&VideoRecord],
    concurrency: usize,
) -> Vec<Result<CausalLabel, PartitionError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| records.par_iter().map(|r| judge_video(ctx, r)).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub causal: BTreeSet<String>,
    pub noncausal: BTreeSet<String>,
    pub abstained: BTreeSet<String>,
}

impl Partition {
    pub fn label_map(&self) -> BTreeMap<String, CausalClass> {
        self.causal
            .iter()
            .map(|v| (v.clone(), CausalClass::Causal))
            .chain(self.noncausal.iter().map(|v| (v.clone(), CausalClass::Noncausal)))
            .collect()
    }
}

/// Splits single-source labels into D_c and D_nc; abstentions go to neither.
pub fn partition_dataset(labels: &[CausalLabel]) -> Result<Partition, PartitionError> {
    let sources: BTreeSet<&str> = labels.iter().map(|l| l.source.as_str()).collect();
    if sources.len() > 1 {
        return Err(PartitionError::MixedSources(sources.into_iter().map(String::from).collect()));
    }
    let mut seen: BTreeMap<&str, Option<CausalClass>> = BTreeMap::new();
    for l in labels {
        if let Some(prev) = seen.insert(&l.video_id, l.label) {
            if prev != l.label {
                return Err(PartitionError::Conflict { video_id: l.video_id.clone(), source_id: l.source.clone() });
            }
        }
    }
    let mut p = Partition::default();
    for (id, label) in seen {
        let set = match label {
            Some(CausalClass::Causal) => &mut p.causal,
            Some(CausalClass::Noncausal) => &mut p.noncausal,
            None => &mut p.abstained,
        };
        set.insert(id.to_string());
    }
    Ok(p)
}

/// Reads human labels: JSONL `{"video_id", "label"}` objects, or CSV
/// `video_id,label` rows (a header row is skipped).
pub fn load_human_labels(path: &Path) -> Result<Vec<CausalLabel>, PartitionError> {
    let err = |message: String| PartitionError::Labels { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    #[derive(Deserialize)]
    struct Row {
        video_id: String,
        label: String,
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (video_id, label) = if line.starts_with('{') {
            let row: Row = serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            (row.video_id, row.label)
        } else {
            let (v, l) = line.split_once(',').ok_or_else(|| err(format!("line {}: expected video_id,label", i + 1)))?;
            if i == 0 && v.trim() == "video_id" {
                continue;
            }
            (v.trim().to_string(), l.trim().to_string())
        };
        let label = label.parse::<CausalClass>().map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        out.push(CausalLabel {
            video_id,
            label: Some(label),
            source: "human".into(),
            raw_response: String::new(),
            timestamp: String::new(),
        });
    }
    Ok(out)
}

/// Judge (rows) against reference (columns), causal = positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            // no positives anywhere: the two labelings agree trivially
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    pub fn transposed(&self) -> Self {
        Self { tp: self.tp, fp: self.fn_, fn_: self.fp, tn: self.tn }
    }
}

pub fn confusion(judge: &Partition, reference: &Partition) -> Result<Confusion, PartitionError> {
    let j = judge.label_map();
    let r = reference.label_map();
    let mut c = Confusion::default();
    for (id, truth) in &r {
        let Some(pred) = j.get(id) else { continue };
        match (pred, truth) {
            (CausalClass::Causal, CausalClass::Causal) => c.tp += 1,
            (CausalClass::Causal, CausalClass::Noncausal) => c.fp += 1,
            (CausalClass::Noncausal, CausalClass::Causal) => c.fn_ += 1,
            (CausalClass::Noncausal, CausalClass::Noncausal) => c.tn += 1,
        }
    }
    if c.total() == 0 {
        return Err(PartitionError::Disjoint);
    }
    Ok(c)
}

/// Standardized mean difference `(mean_a − mean_b) / s_pooled`, Bessel
/// corrected. `None` when either group has fewer than two values or the
/// pooled deviation is zero with a nonzero gap.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return None;
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let pooled = ((ss(a, ma) + ss(b, mb)) / (na + nb - 2) as f64).sqrt();
    let gap = ma - mb;
    if pooled == 0.0 {
        return if gap == 0.0 { Some(0.0) } else { None };
    }
    Some(gap / pooled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub confusion: Confusion,
    pub f1: f64,
    pub accuracy: f64,
    /// τ-b between the model rankings induced by the two splits.
    pub kendall_tau_rankings: Option<f64>,
    /// Positive when the judge's D_c moves more than its D_nc.
    pub cohens_d_motion: Option<f64>,
}

/// `rankings_*` map model_id → rank under each split's CCI; `motion` maps
/// video_id → mean flow magnitude.
pub fn agreement_stats(
    judge: &Partition,
    reference: &Partition,
    rankings_judge: &BTreeMap<String, f64>,
    rankings_reference: &BTreeMap<String, f64>,
    motion: &BTreeMap<String, f64>,
) -> Result<AgreementStats, PartitionError> {
    let c = confusion(judge, reference)?;
    let common: Vec<&String> = rankings_judge.keys().filter(|m| rankings_reference.contains_key(*m)).collect();
    let tau = if common.len() >= 2 {
        let a: Vec<f64> = common.iter().map(|m| rankings_judge[*m]).collect();
        let b: Vec<f64> = common.iter().map(|m| rankings_reference[*m]).collect();
        crate::aggregate::kendall_tau(&a, &b)
    } else {
        None
    };
    let pick = |set: &BTreeSet<String>| -> Vec<f64> { set.iter().filter_map(|v| motion.get(v).copied()).collect() };
    Ok(AgreementStats {
        confusion: c,
        f1: c.f1(),
        accuracy: c.accuracy(),
        kendall_tau_rankings: tau,
        cohens_d_motion: cohens_d(&pick(&judge.causal), &pick(&judge.noncausal)),
    })
}

/// Chat-style HTTP judge. Sends `{"model", "prompt", "images": [base64 PNG]}`
/// and reads the reply text from `text`, `output`, or
/// `choices[0].message.content`.
pub struct HttpJudge {
    pub id: String,
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpJudge {
    /// API key from the environment, if set.
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout: Duration::from_secs(120),
        }
    }
}

fn frame_png_base64(frame: &Frame) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(frame.to_png())
}

impl VlmJudge for HttpJudge {
    fn judge_id(&self) -> &str {
        &self.id
    }

    fn ask(&self, prompt: &str, frames: &[Frame]) -> Result<String, JudgeError> {
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "images": frames.iter().map(frame_png_base64).collect::<Vec<_>>(),
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| JudgeError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| JudgeError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(JudgeError::Transport(format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err(JudgeError::Rejected(format!("HTTP {status}: {text}")));
        }
        Ok(extract_reply(&text))
    }
}

fn extract_reply(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<serde_json::Value>(body) else {
        return body.to_string();
    };
    for ptr in ["/text", "/output", "/choices/0/message/content", "/content/0/text"] {
        if let Some(s) = v.pointer(ptr).and_then(|x| x.as_str()) {
            return s.to_string();
        }
    }
    body.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{SubsetManifest, VideoRecord};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fixed {
        reply: String,
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl Fixed {
        fn new(reply: &str) -> Self {
            Self { reply: reply.into(), calls: AtomicUsize::new(0), fail_first: 0 }
        }
    }

    impl VlmJudge for Fixed {
        fn judge_id(&self) -> &str {
            "stub"
        }
        fn ask(&self, _: &str, frames: &[Frame]) -> Result<String, JudgeError> {
            assert!(frames.len() <= MAX_JUDGE_FRAMES);
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(JudgeError::Transport("503".into()));
            }
            Ok(self.reply.clone())
        }
    }

    struct Gray;

    impl MediaDecoder for Gray {
        fn decode_frames(&self, _: &Catalog, r: &VideoRecord) -> Result<Vec<Frame>, catalog::CatalogError> {
            Ok(vec![Frame::zeros(4, 4, 1); r.num_frames])
        }
    }

    fn catalog(n: usize) -> Catalog {
        let records: Vec<VideoRecord> = (0..n)
            .map(|i| VideoRecord {
                video_id: format!("v{i}"),
                subset_id: "s".into(),
                uri: format!("v{i}.rvclip"),
                caption: "a ball hits a cup".into(),
                duration_s: 5.0,
                fps_native: 8.0,
                num_frames: 40,
                width: 4,
                height: 4,
            })
            .collect();
        let subsets = vec![SubsetManifest {
            subset_id: "s".into(),
            display_name: "s".into(),
            intended_clip_seconds: 5.0,
            record_ids: vec![],
        }];
        Catalog::new(subsets, records).unwrap()
    }

    fn run(judge: &dyn VlmJudge, cache: &LabelCache, cat: &Catalog) -> Vec<CausalLabel> {
        let limiter = RateLimiter::new(Duration::ZERO);
        let ctx = JudgeContext {
            catalog: cat,
            decoder: &Gray,
            judge,
            cache,
            prompt: DEFAULT_PROMPT,
            retry: RetryPolicy { initial_backoff_ms: 1, ..Default::default() },
            limiter: &limiter,
        };
        let recs: Vec<&VideoRecord> = cat.records().iter().collect();
        judge_all(&ctx, &recs, 1).into_iter().map(Result::unwrap).collect()
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("CAUSAL\nthe ball pushes"), Some(CausalClass::Causal));
        assert_eq!(parse_verdict("\n  NON-CAUSAL because"), Some(CausalClass::Noncausal));
        assert_eq!(parse_verdict("**Verdict: non-causal**"), Some(CausalClass::Noncausal));
        assert_eq!(parse_verdict("Causal."), Some(CausalClass::Causal));
        assert_eq!(parse_verdict("I think it is causal"), None);
        assert_eq!(parse_verdict(""), None);
    }

    #[test]
    fn stub_judge_labels_and_cache_short_circuits() {
        let cat = catalog(3);
        let cache = LabelCache::in_memory();
        let judge = Fixed::new("CAUSAL\nreason");
        let labels = run(&judge, &cache, &cat);
        assert!(labels.iter().all(|l| l.label == Some(CausalClass::Causal)));
        assert_eq!(judge.calls.load(Ordering::SeqCst), 3);
        run(&judge, &cache, &cat);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn malformed_answers_abstain() {
        let cat = catalog(2);
        let labels = run(&Fixed::new("maybe?"), &LabelCache::in_memory(), &cat);
        let p = partition_dataset(&labels).unwrap();
        assert!(p.causal.is_empty() && p.noncausal.is_empty());
        assert_eq!(p.abstained.len(), 2);
    }

    #[test]
    fn transport_errors_are_retried() {
        let cat = catalog(1);
        let judge = Fixed { fail_first: 2, ..Fixed::new("NON-CAUSAL") };
        let labels = run(&judge, &LabelCache::in_memory(), &cat);
        assert_eq!(labels[0].label, Some(CausalClass::Noncausal));
        assert_eq!(judge.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn cache_persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let cat = catalog(4);
        let first = run(&Fixed::new("CAUSAL"), &LabelCache::open(&path).unwrap(), &cat);
        let replay_judge = Fixed::new("NON-CAUSAL");
        let cache = LabelCache::open(&path).unwrap();
        let second = run(&replay_judge, &cache, &cat);
        assert_eq!(first, second);
        assert_eq!(replay_judge.calls.load(Ordering::SeqCst), 0);
        assert_eq!(partition_dataset(&first).unwrap(), partition_dataset(&second).unwrap());
        // a torn trailing line is tolerated
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"video_id\":\"v9\",\"la");
        std::fs::write(&path, text).unwrap();
        assert_eq!(LabelCache::open(&path).unwrap().labels("stub").len(), 4);
    }

    fn label(id: &str, l: Option<CausalClass>) -> CausalLabel {
        CausalLabel { video_id: id.into(), label: l, source: "s".into(), raw_response: String::new(), timestamp: String::new() }
    }

    #[test]
    fn partitions() {
        use CausalClass::*;
        let p = partition_dataset(&[label("a", Some(Causal)), label("b", Some(Noncausal)), label("c", Some(Causal))]).unwrap();
        assert_eq!(p.causal, ["a".to_string(), "c".to_string()].into());
        assert_eq!(p.noncausal, ["b".to_string()].into());
        assert_eq!(partition_dataset(&[]).unwrap(), Partition::default());
        assert!(matches!(
            partition_dataset(&[label("a", Some(Causal)), label("a", Some(Noncausal))]),
            Err(PartitionError::Conflict { .. })
        ));
        let mut other = label("b", Some(Causal));
        other.source = "t".into();
        assert!(matches!(partition_dataset(&[label("a", Some(Causal)), other]), Err(PartitionError::MixedSources(_))));
    }

    fn split(c: usize, n: usize, offset: usize) -> Partition {
        Partition {
            causal: (offset..offset + c).map(|i| format!("v{i}")).collect(),
            noncausal: (offset + c..offset + c + n).map(|i| format!("v{i}")).collect(),
            abstained: BTreeSet::new(),
        }
    }

    #[test]
    fn f1_worked_case() {
        // reference: v0..v28 causal; judge: v0..v23 and v29..v33 causal
        let reference = split(29, 31, 0);
        let mut judge = Partition::default();
        for i in 0..60 {
            let id = format!("v{i}");
            if i < 24 || (29..34).contains(&i) {
                judge.causal.insert(id);
            } else {
                judge.noncausal.insert(id);
            }
        }
        let c = confusion(&judge, &reference).unwrap();
        assert_eq!(c, Confusion { tp: 24, fp: 5, fn_: 5, tn: 26 });
        assert!((c.f1() - 48.0 / 58.0).abs() < 1e-15);
        assert!((c.f1() - 0.8276).abs() < 5e-5);
        let back = confusion(&reference, &judge).unwrap();
        assert_eq!(back, c.transposed());
        assert_eq!(back.accuracy(), c.accuracy());
    }

    #[test]
    fn identical_labelings_agree() {
        let p = split(5, 5, 0);
        let s = agreement_stats(&p, &p, &BTreeMap::new(), &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.confusion.fp + s.confusion.fn_, 0);
        assert!(matches!(confusion(&p, &split(2, 2, 100)), Err(PartitionError::Disjoint)));
    }

    #[test]
    fn cohens_d_cases() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(0.0));
        // means 3 and 1, both sample variances 1 → d = 2
        assert_eq!(cohens_d(&[2.0, 3.0, 4.0], &[0.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(cohens_d(&[1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn frame_sampling_is_uniform() {
        let frames: Vec<Frame> = (0..31).map(|i| Frame::new(1, 1, 1, vec![i as f32])).collect();
        let s = sample_frames(&frames, 16);
        assert_eq!(s.len(), 16);
        assert_eq!(s[0].data[0], 0.0);
        assert_eq!(s[15].data[0], 30.0);
        assert_eq!(sample_frames(&frames[..3], 16).len(), 3);
    }

    #[test]
    fn reply_extraction() {
        assert_eq!(extract_reply(r#"{"text":"CAUSAL"}"#), "CAUSAL");
        assert_eq!(extract_reply(r#"{"choices":[{"message":{"content":"NON-CAUSAL"}}]}"#), "NON-CAUSAL");
        assert_eq!(extract_reply("CAUSAL plain"), "CAUSAL plain");
        assert!(!frame_png_base64(&Frame::zeros(2, 2, 1)).is_empty());
    }
}
