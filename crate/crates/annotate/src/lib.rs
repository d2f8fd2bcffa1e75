//! Backend for the two human studies.
//!
//! * Direction study: each annotator sees every catalog video twice, forward
//!   and reversed in a seeded random slot order, and names the reversed one
//!   (or answers "unknown"). Which slot holds the forward clip stays on the
//!   server until the judgment is stored.
//! * Preference study: annotators rank the candidate videos of their assigned
//!   prompt groups, ties allowed.
//!
//! Judgments and rankings are appended to line-delimited files in the data
//! directory and reloaded on start.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use revprobe::catalog::{self, Catalog, MediaDecoder, SubsetManifest, VideoRecord};
use revprobe::frame::Direction;
use revprobe::judgment::{validate_tie_structure, Choice, DirectionJudgment, PreferenceRanking, Slot};
use revprobe::seed;
use revprobe::util::{self, JsonlError};
use serde::{Deserialize, Serialize};

pub mod http;
pub mod plan;

pub use plan::{plan_assignments, AssignmentPlan, PlanError};

pub const DIRECTION_FILE: &str = "direction.jsonl";
pub const RANKING_FILE: &str = "rankings.jsonl";
pub const ANNOTATOR_FILE: &str = "annotators.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub data_dir: PathBuf,
    pub replay_limit: u32,
    pub rankings_per_group: usize,
    pub groups_per_annotator: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            replay_limit: 3,
            rankings_per_group: 3,
            groups_per_annotator: 6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: String,
    pub uri: String,
    pub fps_native: f64,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
}

/// One prompt of the preference study and the generated videos to rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingGroup {
    pub prompt_id: String,
    pub prompt: String,
    pub candidates: Vec<Candidate>,
}

pub fn load_groups(path: &Path) -> Result<Vec<RankingGroup>, JsonlError> {
    util::read_jsonl(path)
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Catalog(#[from] catalog::CatalogError),
    #[error("ranking group {0:?}: {1}")]
    Group(String, String),
}

/// Why a request was refused; `code` is stable for clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: RejectCode,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    UnknownAnnotator,
    NoOpenTask,
    Duplicate,
    ReplayLimit,
    Malformed,
    NotAssigned,
    MissingCandidate,
    UnknownCandidate,
    InvalidTies,
    NotFound,
    Storage,
}

fn reject(code: RejectCode, reason: impl Into<String>) -> Rejection {
    Rejection { code, reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub annotator_id: String,
    pub direction_remaining: usize,
    pub ranking_remaining: usize,
    pub replay_limit: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipHandle {
    pub slot: Slot,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionTask {
    pub video_id: String,
    pub prompt: String,
    pub clips: [ClipHandle; 2],
    pub replay_limit: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Next<T> {
    Task(T),
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSubmission {
    pub annotator_id: String,
    pub video_id: String,
    pub choice: Choice,
    #[serde(default)]
    pub replays_a: u32,
    #[serde(default)]
    pub replays_b: u32,
    #[serde(default)]
    pub prompt_shown: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateHandle {
    pub handle: String,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    pub prompt_id: String,
    pub prompt: String,
    /// Seeds the client-side display shuffle so both sides know the order.
    pub display_seed: u64,
    pub candidates: Vec<CandidateHandle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingSubmission {
    pub annotator_id: String,
    pub prompt_id: String,
    /// Candidate handle → rank.
    pub ranks: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipPayload {
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    /// Base64 PNG frames in playback order.
    pub frames: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportKind {
    Direction,
    Preference,
}

impl std::str::FromStr for ExportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direction" => Ok(ExportKind::Direction),
            "preference" | "ranking" => Ok(ExportKind::Preference),
            other => Err(format!("unknown export kind {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
enum ClipRef {
    Video { video_id: String, direction: Direction },
    Candidate { prompt_id: String, model_id: String },
}

#[derive(Default)]
struct Inner {
    annotators: BTreeSet<String>,
    judgments: Vec<DirectionJudgment>,
    judged: BTreeSet<(String, String)>,
    rankings: Vec<PreferenceRanking>,
    ranked: BTreeSet<(String, String)>,
    issued: BTreeSet<(String, String)>,
    clips: HashMap<String, ClipRef>,
}

pub struct Service {
    config: StudyConfig,
    videos: Catalog,
    candidates: Catalog,
    groups: BTreeMap<String, RankingGroup>,
    plan: AssignmentPlan,
    decoder: Arc<dyn MediaDecoder>,
    inner: Mutex<Inner>,
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn now_stamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn candidate_catalog(groups: &[RankingGroup], base: Option<&Path>) -> Result<Catalog, ServiceError> {
    let mut records = Vec::new();
    for g in groups {
        if g.candidates.is_empty() {
            return Err(ServiceError::Group(g.prompt_id.clone(), "no candidates".into()));
        }
        for c in &g.candidates {
            records.push(VideoRecord {
                video_id: format!("{}/{}", g.prompt_id, c.model_id),
                subset_id: "ranking".into(),
                uri: c.uri.clone(),
                caption: g.prompt.clone(),
                duration_s: c.num_frames as f64 / c.fps_native,
                fps_native: c.fps_native,
                num_frames: c.num_frames,
                width: c.width,
                height: c.height,
            });
        }
    }
    let subsets = vec![SubsetManifest {
        subset_id: "ranking".into(),
        display_name: "ranking candidates".into(),
        intended_clip_seconds: 0.0,
        record_ids: vec![],
    }];
    let mut cat = Catalog::new(subsets, records)?;
    if let Some(b) = base {
        cat = cat.with_base_dir(b);
    }
    Ok(cat)
}

impl Service {
    /// Builds the service and replays any judgments already on disk.
    /// `groups_base` resolves relative candidate URIs.
    pub fn open(
        config: StudyConfig,
        videos: Catalog,
        groups: Vec<RankingGroup>,
        ranking_annotators: &[String],
        groups_base: Option<&Path>,
        decoder: Arc<dyn MediaDecoder>,
    ) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.data_dir).map_err(|e| JsonlError::Io {
            path: config.data_dir.display().to_string(),
            source: e,
        })?;
        let candidates = candidate_catalog(&groups, groups_base)?;
        let ids: Vec<String> = groups.iter().map(|g| g.prompt_id.clone()).collect();
        let plan = if groups.is_empty() && ranking_annotators.is_empty() {
            AssignmentPlan { by_group: BTreeMap::new(), by_annotator: BTreeMap::new() }
        } else {
            plan_assignments(
                ranking_annotators,
                &ids,
                config.rankings_per_group,
                config.groups_per_annotator,
                config.seed,
            )?
        };
        let plan_json = serde_json::to_string_pretty(&plan).expect("serializable plan");
        util::write_atomic(&config.data_dir.join("plan.json"), plan_json.as_bytes())?;

        let mut inner = Inner::default();
        let read = |name: &str| config.data_dir.join(name);
        if read(ANNOTATOR_FILE).exists() {
            let names: Vec<String> = util::read_jsonl(&read(ANNOTATOR_FILE))?;
            inner.annotators.extend(names);
        }
        if read(DIRECTION_FILE).exists() {
            for j in util::read_jsonl::<DirectionJudgment>(&read(DIRECTION_FILE))? {
                inner.judged.insert((j.annotator_id.clone(), j.video_id.clone()));
                inner.judgments.push(j);
            }
        }
        if read(RANKING_FILE).exists() {
            for r in util::read_jsonl::<PreferenceRanking>(&read(RANKING_FILE))? {
                inner.ranked.insert((r.annotator_id.clone(), r.prompt_id.clone()));
                inner.rankings.push(r);
            }
        }
        Ok(Self {
            config,
            videos,
            candidates,
            groups: groups.into_iter().map(|g| (g.prompt_id.clone(), g)).collect(),
            plan,
            decoder,
            inner: Mutex::new(inner),
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn plan(&self) -> &AssignmentPlan {
        &self.plan
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Slot holding the true forward clip for (annotator, video).
    pub fn forward_slot(&self, annotator: &str, video_id: &str) -> Slot {
        if seed!(self.config.seed, "slot", annotator, video_id) & 1 == 0 {
            Slot::A
        } else {
            Slot::B
        }
    }

    fn video_order(&self, annotator: &str) -> Vec<&VideoRecord> {
        let mut v: Vec<&VideoRecord> = self.videos.records().iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed!(self.config.seed, "order", annotator));
        v.shuffle(&mut rng);
        v
    }

    fn known(&self, inner: &Inner, annotator: &str) -> Result<(), Rejection> {
        if inner.annotators.contains(annotator) {
            Ok(())
        } else {
            Err(reject(RejectCode::UnknownAnnotator, format!("annotator {annotator:?} has no session")))
        }
    }

    /// Registers the annotator on first use and reports remaining work.
    pub fn session(&self, annotator: &str) -> Result<SessionInfo, Rejection> {
        if annotator.trim().is_empty() {
            return Err(reject(RejectCode::Malformed, "empty annotator id"));
        }
        let mut inner = self.lock();
        if !inner.annotators.contains(annotator) {
            util::append_jsonl(&self.config.data_dir.join(ANNOTATOR_FILE), &annotator)
                .map_err(|e| reject(RejectCode::Storage, e.to_string()))?;
            inner.annotators.insert(annotator.to_string());
        }
        let direction_remaining = self
            .videos
            .records()
            .iter()
            .filter(|r| !inner.judged.contains(&(annotator.to_string(), r.video_id.clone())))
            .count();
        let ranking_remaining = self
            .plan
            .by_annotator
            .get(annotator)
            .map(|gs| gs.iter().filter(|g| !inner.ranked.contains(&(annotator.to_string(), (*g).clone()))).count())
            .unwrap_or(0);
        Ok(SessionInfo {
            annotator_id: annotator.to_string(),
            direction_remaining,
            ranking_remaining,
            replay_limit: self.config.replay_limit,
        })
    }

    /// Next unjudged video in the annotator's seeded order. `after` defers:
    /// the search starts past that video and wraps around.
    pub fn next_direction(&self, annotator: &str, after: Option<&str>) -> Result<Next<DirectionTask>, Rejection> {
        let mut inner = self.lock();
        self.known(&inner, annotator)?;
        let order = self.video_order(annotator);
        let start = after
            .and_then(|a| order.iter().position(|r| r.video_id == a))
            .map(|i| i + 1)
            .unwrap_or(0);
        let pick = (0..order.len())
            .map(|k| order[(start + k) % order.len()])
            .find(|r| !inner.judged.contains(&(annotator.to_string(), r.video_id.clone())));
        let Some(record) = pick else { return Ok(Next::Complete) };
        let forward = self.forward_slot(annotator, &record.video_id);
        inner.issued.insert((annotator.to_string(), record.video_id.clone()));
        let clips = [Slot::A, Slot::B].map(|slot| {
            let token = hex(seed!(self.config.seed, "clip", annotator, record.video_id.as_str(), slot_name(slot)));
            let direction = if slot == forward { Direction::Forward } else { Direction::Reversed };
            inner.clips.insert(token.clone(), ClipRef::Video { video_id: record.video_id.clone(), direction });
            ClipHandle { slot, url: format!("/clips/{token}") }
        });
        Ok(Next::Task(DirectionTask {
            video_id: record.video_id.clone(),
            prompt: record.caption.clone(),
            clips,
            replay_limit: self.config.replay_limit,
        }))
    }

    pub fn submit_direction(&self, sub: DirectionSubmission) -> Result<DirectionJudgment, Rejection> {
        let mut inner = self.lock();
        self.known(&inner, &sub.annotator_id)?;
        let record = self
            .videos
            .get(&sub.video_id)
            .ok_or_else(|| reject(RejectCode::NoOpenTask, format!("no task for video {:?}", sub.video_id)))?;
        let key = (sub.annotator_id.clone(), sub.video_id.clone());
        if inner.judged.contains(&key) {
            return Err(reject(RejectCode::Duplicate, "this video was already judged by this annotator"));
        }
        if !inner.issued.contains(&key) {
            return Err(reject(RejectCode::NoOpenTask, format!("video {:?} was not issued to this annotator", sub.video_id)));
        }
        let limit = self.config.replay_limit;
        if sub.replays_a > limit || sub.replays_b > limit {
            return Err(reject(
                RejectCode::ReplayLimit,
                format!("replays ({}, {}) exceed the limit of {limit}", sub.replays_a, sub.replays_b),
            ));
        }
        let judgment = DirectionJudgment {
            shown_order: self.forward_slot(&sub.annotator_id, &sub.video_id),
            annotator_id: sub.annotator_id,
            video_id: sub.video_id,
            choice: sub.choice,
            replays_a: sub.replays_a,
            replays_b: sub.replays_b,
            prompt_shown: sub.prompt_shown.unwrap_or_else(|| record.caption.clone()),
            timestamp: now_stamp(),
        };
        util::append_jsonl(&self.config.data_dir.join(DIRECTION_FILE), &judgment)
            .map_err(|e| reject(RejectCode::Storage, e.to_string()))?;
        inner.judged.insert(key);
        inner.judgments.push(judgment.clone());
        Ok(judgment)
    }

    fn candidate_handle(&self, annotator: &str, prompt_id: &str, model_id: &str) -> String {
        hex(seed!(self.config.seed, "candidate", annotator, prompt_id, model_id))
    }

    pub fn next_ranking(&self, annotator: &str) -> Result<Next<RankingTask>, Rejection> {
        let mut inner = self.lock();
        self.known(&inner, annotator)?;
        let Some(assigned) = self.plan.by_annotator.get(annotator) else { return Ok(Next::Complete) };
        let Some(prompt_id) = assigned
            .iter()
            .find(|g| !inner.ranked.contains(&(annotator.to_string(), (*g).clone())))
        else {
            return Ok(Next::Complete);
        };
        let group = &self.groups[prompt_id];
        let candidates = group
            .candidates
            .iter()
            .map(|c| {
                let handle = self.candidate_handle(annotator, prompt_id, &c.model_id);
                inner.clips.insert(
                    handle.clone(),
                    ClipRef::Candidate { prompt_id: prompt_id.clone(), model_id: c.model_id.clone() },
                );
                CandidateHandle { url: format!("/clips/{handle}"), handle }
            })
            .collect();
        Ok(Next::Task(RankingTask {
            prompt_id: prompt_id.clone(),
            prompt: group.prompt.clone(),
            display_seed: seed!(self.config.seed, "display", annotator, prompt_id.as_str()),
            candidates,
        }))
    }

    pub fn submit_ranking(&self, sub: RankingSubmission) -> Result<PreferenceRanking, Rejection> {
        let mut inner = self.lock();
        self.known(&inner, &sub.annotator_id)?;
        if !self.plan.is_assigned(&sub.annotator_id, &sub.prompt_id) {
            return Err(reject(RejectCode::NotAssigned, format!("prompt {:?} is not assigned to this annotator", sub.prompt_id)));
        }
        let key = (sub.annotator_id.clone(), sub.prompt_id.clone());
        if inner.ranked.contains(&key) {
            return Err(reject(RejectCode::Duplicate, "this prompt was already ranked by this annotator"));
        }
        let group = &self.groups[&sub.prompt_id];
        let by_handle: BTreeMap<String, &str> = group
            .candidates
            .iter()
            .map(|c| (self.candidate_handle(&sub.annotator_id, &sub.prompt_id, &c.model_id), c.model_id.as_str()))
            .collect();
        if let Some(h) = sub.ranks.keys().find(|h| !by_handle.contains_key(*h)) {
            return Err(reject(RejectCode::UnknownCandidate, format!("unknown candidate {h:?}")));
        }
        if let Some((h, _)) = by_handle.iter().find(|(h, _)| !sub.ranks.contains_key(*h)) {
            return Err(reject(RejectCode::MissingCandidate, format!("candidate {h:?} is not ranked")));
        }
        validate_tie_structure(&sub.ranks).map_err(|e| reject(RejectCode::InvalidTies, e))?;
        let ranking = PreferenceRanking {
            annotator_id: sub.annotator_id,
            prompt_id: sub.prompt_id,
            ranks: sub.ranks.iter().map(|(h, r)| (by_handle[h].to_string(), *r)).collect(),
            timestamp: now_stamp(),
        };
        util::append_jsonl(&self.config.data_dir.join(RANKING_FILE), &ranking)
            .map_err(|e| reject(RejectCode::Storage, e.to_string()))?;
        inner.ranked.insert(key);
        inner.rankings.push(ranking.clone());
        Ok(ranking)
    }

    /// Line-delimited export after one `#` header line, in submission order.
    pub fn export(&self, kind: ExportKind) -> String {
        let inner = self.lock();
        match kind {
            ExportKind::Direction => {
                let mut s = String::from("# direction judgments; shown_order is the slot of the forward clip\n");
                s.push_str(&util::to_jsonl_string(&inner.judgments));
                s
            }
            ExportKind::Preference => {
                let mut s = String::from("# preference rankings; ranks map model_id to position, 1 = best\n");
                s.push_str(&util::to_jsonl_string(&inner.rankings));
                s
            }
        }
    }

    /// Frames behind a clip handle handed out with a task.
    pub fn clip(&self, token: &str) -> Result<ClipPayload, Rejection> {
        let target = self.lock().clips.get(token).cloned();
        let not_found = || reject(RejectCode::NotFound, "unknown clip");
        let (catalog, id, direction) = match target.ok_or_else(not_found)? {
            ClipRef::Video { video_id, direction } => (&self.videos, video_id, direction),
            ClipRef::Candidate { prompt_id, model_id } => {
                (&self.candidates, format!("{prompt_id}/{model_id}"), Direction::Forward)
            }
        };
        let record = catalog.get(&id).ok_or_else(not_found)?;
        let seq = catalog::decode(catalog, record, direction, self.decoder.as_ref())
            .map_err(|e| reject(RejectCode::Storage, e.to_string()))?;
        let (width, height) = seq.resolution();
        Ok(ClipPayload {
            fps: record.fps_native,
            width,
            height,
            frames: seq
                .frames
                .iter()
                .map(|f| base64::engine::general_purpose::STANDARD.encode(f.to_png()))
                .collect(),
        })
    }
}

fn slot_name(s: Slot) -> &'static str {
    match s {
        Slot::A => "A",
        Slot::B => "B",
    }
}
