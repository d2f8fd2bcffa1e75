//! RSI and CCI with per-subset nesting, stratified bootstrap intervals and the
//! human-annotation variant.
//!
//! Every statistic here is a mean of per-subset means over per-video scores in
//! `[0, 1]`: 1 for a correct direction call, 0 for an incorrect one (ties
//! included) and, for human judgments only, 0.5 for "unknown".

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::judgment::DirectionJudgment;
use crate::partition::CausalClass;
use crate::probe::PairOutcome;

/// subset_id → per-video scores.
pub type Strata = BTreeMap<String, Vec<f64>>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no subsets to average over")]
    NoSubsets,
    #[error("subset {0:?} has no videos")]
    EmptySubset(String),
    #[error("video {0:?} has no subset assignment")]
    UnknownVideo(String),
    #[error("video {0:?} has no causal label")]
    Unlabeled(String),
    #[error("{0} partition is empty")]
    EmptyPartition(CausalClass),
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetFraction {
    pub fraction: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub confidence: f64,
    /// Lower one-sided bound at `confidence`, compared against `baseline`.
    pub one_sided_low: f64,
    pub baseline: f64,
    pub exceeds_baseline: bool,
    pub resamples: usize,
    pub seed: u64,
    /// Videos resampled within their subset (always true here; recorded so
    /// alternative schemes can be compared).
    pub stratified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsiReport {
    pub per_subset: BTreeMap<String, SubsetFraction>,
    pub overall: f64,
    pub n_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CciReport {
    pub rsi_c: RsiReport,
    pub rsi_nc: RsiReport,
    pub cci: f64,
    /// Subsets without any video in the partition, left out of its mean.
    pub dropped_c: Vec<String>,
    pub dropped_nc: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 2000,
            confidence: 0.9,
            seed: 0,
        }
    }
}

pub fn subset_rsi(outcomes: &[PairOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptySubset(String::new()));
    }
    Ok(outcomes.iter().filter(|o| o.correct).count() as f64 / outcomes.len() as f64)
}

/// Mean of per-subset means.
pub fn nested_mean(strata: &Strata) -> Result<(BTreeMap<String, SubsetFraction>, f64), MetricsError> {
    if strata.is_empty() {
        return Err(MetricsError::NoSubsets);
    }
    let mut per = BTreeMap::new();
    let mut sum = 0.0;
    for (id, scores) in strata {
        if scores.is_empty() {
            return Err(MetricsError::EmptySubset(id.clone()));
        }
        let fraction = scores.iter().sum::<f64>() / scores.len() as f64;
        sum += fraction;
        per.insert(id.clone(), SubsetFraction { fraction, n: scores.len() });
    }
    Ok((per, sum / strata.len() as f64))
}

/// Nested-mean report of already scored strata.
pub fn strata_report(strata: &Strata) -> Result<RsiReport, MetricsError> {
    let (per_subset, overall) = nested_mean(strata)?;
    Ok(RsiReport {
        n_total: strata.values().map(Vec::len).sum(),
        per_subset,
        overall,
        ci: None,
    })
}

/// Groups outcomes by subset using `subset_of` (video_id → subset_id).
pub fn group_by_subset(
    outcomes: &[PairOutcome],
    subset_of: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, Vec<PairOutcome>>, MetricsError> {
    let mut groups: BTreeMap<String, Vec<PairOutcome>> = BTreeMap::new();
    for o in outcomes {
        let subset = subset_of
            .get(&o.video_id)
            .ok_or_else(|| MetricsError::UnknownVideo(o.video_id.clone()))?;
        groups.entry(subset.clone()).or_default().push(o.clone());
    }
    Ok(groups)
}

pub fn outcome_strata(groups: &BTreeMap<String, Vec<PairOutcome>>) -> Strata {
    groups
        .iter()
        .map(|(id, os)| (id.clone(), os.iter().map(|o| if o.correct { 1.0 } else { 0.0 }).collect()))
        .collect()
}

pub fn dataset_rsi(groups: &BTreeMap<String, Vec<PairOutcome>>) -> Result<RsiReport, MetricsError> {
    strata_report(&outcome_strata(groups))
}

/// Human RSI: per subset `(correct + 0.5·unknown) / n`, nested as [`dataset_rsi`].
pub fn human_rsi(
    judgments: &[DirectionJudgment],
    subset_of: &BTreeMap<String, String>,
) -> Result<RsiReport, MetricsError> {
    strata_report(&human_strata(judgments, subset_of)?)
}

pub fn human_strata(
    judgments: &[DirectionJudgment],
    subset_of: &BTreeMap<String, String>,
) -> Result<Strata, MetricsError> {
    let mut strata = Strata::new();
    for j in judgments {
        let subset = subset_of
            .get(&j.video_id)
            .ok_or_else(|| MetricsError::UnknownVideo(j.video_id.clone()))?;
        strata.entry(subset.clone()).or_default().push(j.verdict().score());
    }
    Ok(strata)
}

/// Splits each subset's outcomes by causal label; subsets left empty in a
/// partition are dropped from it.
pub fn split_by_label(
    groups: &BTreeMap<String, Vec<PairOutcome>>,
    labels: &BTreeMap<String, CausalClass>,
) -> Result<(Strata, Strata, Vec<String>, Vec<String>), MetricsError> {
    let scored = groups
        .iter()
        .map(|(s, os)| {
            let items = os.iter().map(|o| (o.video_id.as_str(), if o.correct { 1.0 } else { 0.0 })).collect();
            (s.clone(), items)
        })
        .collect();
    split_scored(&scored, labels)
}

fn split_scored(
    groups: &BTreeMap<String, Vec<(&str, f64)>>,
    labels: &BTreeMap<String, CausalClass>,
) -> Result<(Strata, Strata, Vec<String>, Vec<String>), MetricsError> {
    let mut c = Strata::new();
    let mut nc = Strata::new();
    let (mut dropped_c, mut dropped_nc) = (Vec::new(), Vec::new());
    for (subset, items) in groups {
        let (mut sc, mut snc) = (Vec::new(), Vec::new());
        for &(video_id, score) in items {
            match labels.get(video_id) {
                Some(CausalClass::Causal) => sc.push(score),
                Some(CausalClass::Noncausal) => snc.push(score),
                None => return Err(MetricsError::Unlabeled(video_id.to_string())),
            }
        }
        if sc.is_empty() {
            log::warn!("subset {subset} has no causal videos; left out of RSI(D_c)");
            dropped_c.push(subset.clone());
        } else {
            c.insert(subset.clone(), sc);
        }
        if snc.is_empty() {
            log::warn!("subset {subset} has no non-causal videos; left out of RSI(D_nc)");
            dropped_nc.push(subset.clone());
        } else {
            nc.insert(subset.clone(), snc);
        }
    }
    if c.is_empty() {
        return Err(MetricsError::EmptyPartition(CausalClass::Causal));
    }
    if nc.is_empty() {
        return Err(MetricsError::EmptyPartition(CausalClass::Noncausal));
    }
    Ok((c, nc, dropped_c, dropped_nc))
}

fn cci_from_split(
    (c, nc, dropped_c, dropped_nc): (Strata, Strata, Vec<String>, Vec<String>),
    cfg: Option<&BootstrapConfig>,
) -> Result<CciReport, MetricsError> {
    let mut rsi_c = strata_report(&c)?;
    let mut rsi_nc = strata_report(&nc)?;
    let ci = match cfg {
        Some(cfg) => {
            rsi_c.ci = Some(bootstrap_rsi(&c, cfg)?);
            rsi_nc.ci = Some(bootstrap_rsi(&nc, cfg)?);
            Some(bootstrap_cci(&c, &nc, cfg)?)
        }
        None => None,
    };
    Ok(CciReport {
        cci: rsi_c.overall - rsi_nc.overall,
        rsi_c,
        rsi_nc,
        dropped_c,
        dropped_nc,
        ci,
    })
}

/// Human CCI: judgment scores split by causal label and nested as [`human_rsi`].
pub fn human_cci(
    judgments: &[DirectionJudgment],
    subset_of: &BTreeMap<String, String>,
    labels: &BTreeMap<String, CausalClass>,
    cfg: Option<&BootstrapConfig>,
) -> Result<CciReport, MetricsError> {
    let mut groups: BTreeMap<String, Vec<(&str, f64)>> = BTreeMap::new();
    for j in judgments {
        let subset = subset_of
            .get(&j.video_id)
            .ok_or_else(|| MetricsError::UnknownVideo(j.video_id.clone()))?;
        groups.entry(subset.clone()).or_default().push((j.video_id.as_str(), j.verdict().score()));
    }
    cci_from_split(split_scored(&groups, labels)?, cfg)
}

pub fn cci(
    groups: &BTreeMap<String, Vec<PairOutcome>>,
    labels: &BTreeMap<String, CausalClass>,
) -> Result<CciReport, MetricsError> {
    cci_from_split(split_by_label(groups, labels)?, None)
}

fn check(cfg: &BootstrapConfig) -> Result<(), MetricsError> {
    if cfg.resamples < 100 {
        return Err(MetricsError::TooFewResamples(cfg.resamples));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(MetricsError::Confidence(cfg.confidence));
    }
    Ok(())
}

/// One stratified resample's nested mean.
fn resample_mean(strata: &Strata, rng: &mut ChaCha8Rng) -> f64 {
    let mut sum = 0.0;
    for scores in strata.values() {
        let n = scores.len();
        let mut s = 0.0;
        for _ in 0..n {
            s += scores[rng.random_range(0..n)];
        }
        sum += s / n as f64;
    }
    sum / strata.len() as f64
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap statistics of the nested mean, one derived RNG per resample.
pub fn bootstrap_distribution(strata: &Strata, cfg: &BootstrapConfig) -> Result<Vec<f64>, MetricsError> {
    check(cfg)?;
    nested_mean(strata)?;
    Ok((0..cfg.resamples)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed!(cfg.seed, "rsi", b));
            resample_mean(strata, &mut rng)
        })
        .collect())
}

fn interval(mut stats: Vec<f64>, cfg: &BootstrapConfig, baseline: f64) -> BootstrapInterval {
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - cfg.confidence;
    let one_sided_low = quantile(&stats, alpha);
    BootstrapInterval {
        low: quantile(&stats, alpha / 2.0),
        high: quantile(&stats, 1.0 - alpha / 2.0),
        confidence: cfg.confidence,
        one_sided_low,
        baseline,
        exceeds_baseline: one_sided_low > baseline,
        resamples: cfg.resamples,
        seed: cfg.seed,
        stratified: true,
    }
}

/// Percentile interval for RSI; `exceeds_baseline` when the one-sided lower
/// bound is above 0.5.
pub fn bootstrap_rsi(strata: &Strata, cfg: &BootstrapConfig) -> Result<BootstrapInterval, MetricsError> {
    Ok(interval(bootstrap_distribution(strata, cfg)?, cfg, 0.5))
}

pub fn bootstrap_cci_distribution(c: &Strata, nc: &Strata, cfg: &BootstrapConfig) -> Result<Vec<f64>, MetricsError> {
    check(cfg)?;
    nested_mean(c)?;
    nested_mean(nc)?;
    Ok((0..cfg.resamples)
        .map(|b| {
            let mut rc = ChaCha8Rng::seed_from_u64(seed!(cfg.seed, "cci-c", b));
            let mut rn = ChaCha8Rng::seed_from_u64(seed!(cfg.seed, "cci-nc", b));
            resample_mean(c, &mut rc) - resample_mean(nc, &mut rn)
        })
        .collect())
}

/// Percentile interval for CCI; each partition is resampled within its own
/// subsets. `exceeds_baseline` when the one-sided lower bound is above 0.
pub fn bootstrap_cci(c: &Strata, nc: &Strata, cfg: &BootstrapConfig) -> Result<BootstrapInterval, MetricsError> {
    Ok(interval(bootstrap_cci_distribution(c, nc, cfg)?, cfg, 0.0))
}

pub fn dataset_rsi_with_ci(
    groups: &BTreeMap<String, Vec<PairOutcome>>,
    cfg: &BootstrapConfig,
) -> Result<RsiReport, MetricsError> {
    let strata = outcome_strata(groups);
    let mut r = strata_report(&strata)?;
    r.ci = Some(bootstrap_rsi(&strata, cfg)?);
    Ok(r)
}

pub fn human_rsi_with_ci(
    judgments: &[DirectionJudgment],
    subset_of: &BTreeMap<String, String>,
    cfg: &BootstrapConfig,
) -> Result<RsiReport, MetricsError> {
    let strata = human_strata(judgments, subset_of)?;
    let mut r = strata_report(&strata)?;
    r.ci = Some(bootstrap_rsi(&strata, cfg)?);
    Ok(r)
}

pub fn cci_with_ci(
    groups: &BTreeMap<String, Vec<PairOutcome>>,
    labels: &BTreeMap<String, CausalClass>,
    cfg: &BootstrapConfig,
) -> Result<CciReport, MetricsError> {
    cci_from_split(split_by_label(groups, labels)?, Some(cfg))
}
