//! Rankings: RSI + CCI aggregate rank, Kendall τ-b, Borda aggregation of
//! human preference rankings and correlations with external metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::judgment::{validate_tie_structure, PreferenceRanking};
use crate::preprocess::ModelSpec;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("no models to rank")]
    Empty,
    #[error("score for {0:?} is not finite")]
    NonFinite(String),
    #[error("model sets differ: {0:?}")]
    ModelMismatch(Vec<String>),
    #[error("ranking by {annotator:?} for {prompt:?}: {message}")]
    InvalidRanking {
        annotator: String,
        prompt: String,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

/// Competition ranking ("1224"): best = 1, exact ties share a rank and the
/// next rank skips.
pub fn rank_models(scores: &BTreeMap<String, f64>, higher_is_better: bool) -> Result<BTreeMap<String, u32>, AggregateError> {
    if scores.is_empty() {
        return Err(AggregateError::Empty);
    }
    if let Some((id, _)) = scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(AggregateError::NonFinite(id.clone()));
    }
    Ok(scores
        .iter()
        .map(|(id, &s)| {
            let better = scores
                .values()
                .filter(|&&o| if higher_is_better { o > s } else { o < s })
                .count();
            (id.clone(), better as u32 + 1)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model_id: String,
    pub rsi_rank: u32,
    pub cci_rank: u32,
    pub rank_sum: u32,
    pub final_rank: u32,
}

/// Orders by `rsi_rank + cci_rank`, then by the better (smaller) `rsi_rank`;
/// models equal on both share a final rank. Rows come out in final order,
/// ties by model id.
pub fn aggregate_rank(
    rsi: &BTreeMap<String, f64>,
    cci: &BTreeMap<String, f64>,
) -> Result<Vec<AggregateRow>, AggregateError> {
    let a: BTreeSet<&String> = rsi.keys().collect();
    let b: BTreeSet<&String> = cci.keys().collect();
    if a != b {
        return Err(AggregateError::ModelMismatch(
            a.symmetric_difference(&b).map(|s| s.to_string()).collect(),
        ));
    }
    let rr = rank_models(rsi, true)?;
    let cr = rank_models(cci, true)?;
    let mut rows: Vec<AggregateRow> = rsi
        .keys()
        .map(|m| AggregateRow {
            model_id: m.clone(),
            rsi_rank: rr[m],
            cci_rank: cr[m],
            rank_sum: rr[m] + cr[m],
            final_rank: 0,
        })
        .collect();
    let key = |r: &AggregateRow| (r.rank_sum, r.rsi_rank);
    let keys: Vec<(u32, u32)> = rows.iter().map(key).collect();
    for r in rows.iter_mut() {
        r.final_rank = keys.iter().filter(|k| **k < key(r)).count() as u32 + 1;
    }
    rows.sort_by(|x, y| x.final_rank.cmp(&y.final_rank).then_with(|| x.model_id.cmp(&y.model_id)));
    Ok(rows)
}

/// Kendall τ-b over paired observations; `None` when either side is fully
/// tied (zero denominator) or fewer than two items are given.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "paired observations");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).partial_cmp(&0.0)? as i64;
            let db = (b[i] - b[j]).partial_cmp(&0.0)? as i64;
            if da == 0 {
                ties_a += 1;
            }
            if db == 0 {
                ties_b += 1;
            }
            match da * db {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_a) * (n0 - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / denom)
}

/// Pearson correlation; `None` for constant inputs or fewer than two items.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma).powi(2);
        sbb += (b[i] - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Borda points `N − r`; a tie group spanning positions `p..p+k−1` shares
/// the mean of their points.
pub fn borda_scores(ranking: &PreferenceRanking, n: usize) -> Result<BTreeMap<String, f64>, AggregateError> {
    let invalid = |message: String| AggregateError::InvalidRanking {
        annotator: ranking.annotator_id.clone(),
        prompt: ranking.prompt_id.clone(),
        message,
    };
    if ranking.ranks.len() != n {
        return Err(invalid(format!("ranks {} models, expected {n}", ranking.ranks.len())));
    }
    validate_tie_structure(&ranking.ranks).map_err(invalid)?;
    let mut group: BTreeMap<u32, usize> = BTreeMap::new();
    for r in ranking.ranks.values() {
        *group.entry(*r).or_default() += 1;
    }
    Ok(ranking
        .ranks
        .iter()
        .map(|(m, &r)| {
            let k = group[&r] as f64;
            (m.clone(), n as f64 - r as f64 - (k - 1.0) / 2.0)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub scores: BTreeMap<String, f64>,
    pub ranks: BTreeMap<String, u32>,
    pub n_rankings: usize,
}

/// Mean Borda points per model across rankings over one candidate set.
pub fn preference_aggregate(rankings: &[PreferenceRanking]) -> Result<PreferenceSummary, AggregateError> {
    let first = rankings.first().ok_or(AggregateError::Empty)?;
    let models: BTreeSet<&String> = first.ranks.keys().collect();
    let n = models.len();
    let mut totals: BTreeMap<String, f64> = models.iter().map(|m| (m.to_string(), 0.0)).collect();
    for r in rankings {
        let these: BTreeSet<&String> = r.ranks.keys().collect();
        if these != models {
            return Err(AggregateError::ModelMismatch(
                these.symmetric_difference(&models).map(|s| s.to_string()).collect(),
            ));
        }
        for (m, p) in borda_scores(r, n)? {
            *totals.get_mut(&m).unwrap() += p;
        }
    }
    let scores: BTreeMap<String, f64> = totals.into_iter().map(|(m, t)| (m, t / rankings.len() as f64)).collect();
    Ok(PreferenceSummary {
        ranks: rank_models(&scores, true)?,
        scores,
        n_rankings: rankings.len(),
    })
}

/// An external metric: one value per model and its orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetric {
    pub values: BTreeMap<String, f64>,
    pub higher_is_better: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// τ-b between the aggregate ranking and the metric's ranking; positive
    /// when they agree on which models are better.
    pub tau: Option<f64>,
    /// Pearson r between aggregate standing (M + 1 − rank) and the oriented
    /// metric values.
    pub pearson: Option<f64>,
    pub n_models: usize,
    /// Aggregate models the metric does not cover.
    pub missing: Vec<String>,
}

/// Correlates final aggregate ranks with each external metric, pairwise
/// complete.
pub fn cross_correlations(
    final_ranks: &BTreeMap<String, u32>,
    external: &BTreeMap<String, ExternalMetric>,
) -> BTreeMap<String, Correlation> {
    let m = final_ranks.len() as f64;
    external
        .iter()
        .map(|(name, metric)| {
            let common: Vec<&String> = final_ranks.keys().filter(|k| metric.values.contains_key(*k)).collect();
            let missing: Vec<String> = final_ranks
                .keys()
                .filter(|k| !metric.values.contains_key(*k))
                .cloned()
                .collect();
            if !missing.is_empty() {
                log::warn!("metric {name}: no value for {missing:?}; dropped pairwise");
            }
            let sub: BTreeMap<String, f64> = common.iter().map(|k| (k.to_string(), metric.values[*k])).collect();
            let (tau, pearson_r) = if common.len() < 2 {
                (None, None)
            } else {
                let ext_rank = rank_models(&sub, metric.higher_is_better).ok();
                let agg: Vec<f64> = common.iter().map(|k| final_ranks[*k] as f64).collect();
                let tau = ext_rank.and_then(|er| {
                    let e: Vec<f64> = common.iter().map(|k| er[*k] as f64).collect();
                    kendall_tau(&agg, &e)
                });
                let standing: Vec<f64> = agg.iter().map(|r| m + 1.0 - r).collect();
                let sign = if metric.higher_is_better { 1.0 } else { -1.0 };
                let oriented: Vec<f64> = common.iter().map(|k| sign * metric.values[*k]).collect();
                (tau, pearson(&standing, &oriented))
            };
            (
                name.clone(),
                Correlation {
                    tau,
                    pearson: pearson_r,
                    n_models: common.len(),
                    missing,
                },
            )
        })
        .collect()
}

fn date_value(d: NaiveDate) -> f64 {
    d.num_days_from_ce() as f64
}

/// `params_billions` (larger = better) and `release_date` (newer = better)
/// series from a model registry.
pub fn registry_metrics(models: &[ModelSpec]) -> BTreeMap<String, ExternalMetric> {
    let params = models.iter().map(|m| (m.model_id.clone(), m.params_billions)).collect();
    let dates = models.iter().map(|m| (m.model_id.clone(), date_value(m.release_date))).collect();
    BTreeMap::from([
        ("params_billions".to_string(), ExternalMetric { values: params, higher_is_better: true }),
        ("release_date".to_string(), ExternalMetric { values: dates, higher_is_better: true }),
    ])
}

/// Parses `metric_name, model_id, value[, higher|lower]` rows. Values may be
/// numbers or `YYYY-MM-DD` dates; orientation defaults to higher-is-better.
pub fn parse_external(text: &str) -> Result<BTreeMap<String, ExternalMetric>, (usize, String)> {
    let mut out: BTreeMap<String, ExternalMetric> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols.len() > 4 {
            return Err((i + 1, "expected metric_name, model_id, value[, higher|lower]".into()));
        }
        if i == 0 && cols[0] == "metric_name" {
            continue;
        }
        let value = match cols[2].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => NaiveDate::parse_from_str(cols[2], "%Y-%m-%d")
                .map(date_value)
                .map_err(|_| (i + 1, format!("bad value {:?}", cols[2])))?,
        };
        let higher = match cols.get(3).copied() {
            None | Some("higher") => true,
            Some("lower") => false,
            Some(other) => return Err((i + 1, format!("bad orientation {other:?}"))),
        };
        let entry = out.entry(cols[0].to_string()).or_insert_with(|| ExternalMetric {
            values: BTreeMap::new(),
            higher_is_better: higher,
        });
        if entry.higher_is_better != higher {
            return Err((i + 1, format!("metric {} has mixed orientation", cols[0])));
        }
        entry.values.insert(cols[1].to_string(), value);
    }
    Ok(out)
}

pub fn load_external(path: &Path) -> Result<BTreeMap<String, ExternalMetric>, AggregateError> {
    let text = std::fs::read_to_string(path).map_err(|e| AggregateError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_external(&text).map_err(|(line, message)| AggregateError::Parse {
        path: path.display().to_string(),
        line,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, s)| (k.to_string(), *s)).collect()
    }

    #[test]
    fn ranking_cases() {
        let r = rank_models(&scores(&[("A", 0.9), ("B", 0.7), ("C", 0.8)]), true).unwrap();
        assert_eq!((r["A"], r["C"], r["B"]), (1, 2, 3));
        let t = rank_models(&scores(&[("A", 0.5), ("B", 0.5), ("C", 0.1)]), true).unwrap();
        assert_eq!((t["A"], t["B"], t["C"]), (1, 1, 3));
        assert_eq!(rank_models(&scores(&[("A", 3.0)]), false).unwrap()["A"], 1);
        assert!(matches!(rank_models(&scores(&[("A", f64::NAN)]), true), Err(AggregateError::NonFinite(_))));
    }

    #[test]
    fn rank_sum_ties_favor_better_rsi() {
        // X: rsi rank 2, cci rank 3; Y: rsi rank 3, cci rank 2
        let rsi = scores(&[("W", 0.9), ("X", 0.8), ("Y", 0.7), ("Z", 0.6)]);
        let cci = scores(&[("W", 0.05), ("X", 0.01), ("Y", 0.02), ("Z", 0.3)]);
        let rows = aggregate_rank(&rsi, &cci).unwrap();
        let x = rows.iter().find(|r| r.model_id == "X").unwrap();
        let y = rows.iter().find(|r| r.model_id == "Y").unwrap();
        assert_eq!((x.rsi_rank, x.cci_rank, x.rank_sum), (2, 4, 6));
        assert_eq!((y.rsi_rank, y.cci_rank, y.rank_sum), (3, 3, 6));
        assert!(x.final_rank < y.final_rank);
        let one = aggregate_rank(&scores(&[("A", 0.1)]), &scores(&[("A", 0.0)])).unwrap();
        assert_eq!(one[0].final_rank, 1);
        assert!(matches!(
            aggregate_rank(&scores(&[("A", 0.1)]), &scores(&[("B", 0.0)])),
            Err(AggregateError::ModelMismatch(_))
        ));
    }

    #[test]
    fn tau_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0, 5.0]), Some(1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        let t = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    fn ranking(ranks: &[u32]) -> PreferenceRanking {
        PreferenceRanking {
            annotator_id: "p".into(),
            prompt_id: "q".into(),
            ranks: ranks.iter().enumerate().map(|(i, r)| (format!("m{}", i + 1), *r)).collect(),
            timestamp: String::new(),
        }
    }

    #[test]
    fn borda_cases() {
        let s = borda_scores(&ranking(&[1, 2, 3, 4, 5, 6]), 6).unwrap();
        assert_eq!((s["m1"], s["m6"]), (5.0, 0.0));
        let s = borda_scores(&ranking(&[1, 1, 3, 4, 5, 6]), 6).unwrap();
        assert_eq!((s["m1"], s["m2"], s["m3"]), (4.5, 4.5, 3.0));
        let s = borda_scores(&ranking(&[1; 6]), 6).unwrap();
        assert!(s.values().all(|v| *v == 2.5));
        assert!(borda_scores(&ranking(&[1, 1, 2, 4, 5, 6]), 6).is_err());
        assert!(borda_scores(&ranking(&[1, 2, 3, 4, 5]), 6).is_err());
    }

    #[test]
    fn preference_cases() {
        let fwd = ranking(&[1, 2, 3, 4, 5, 6]);
        let rev = ranking(&[6, 5, 4, 3, 2, 1]);
        let s = preference_aggregate(&[fwd.clone(), rev]).unwrap();
        assert!(s.scores.values().all(|v| *v == 2.5));
        let same = preference_aggregate(&[fwd.clone(), fwd.clone(), fwd.clone()]).unwrap();
        assert_eq!(same.ranks["m1"], 1);
        assert_eq!(same.ranks["m6"], 6);
        assert_eq!(preference_aggregate(&[fwd.clone()]).unwrap().scores, borda_scores(&fwd, 6).unwrap());
        let mut other = ranking(&[1, 2, 3, 4, 5, 6]);
        other.ranks.remove("m6");
        other.ranks.insert("m7".into(), 6);
        assert!(matches!(preference_aggregate(&[fwd, other]), Err(AggregateError::ModelMismatch(_))));
    }

    #[test]
    fn correlations() {
        let ranks: BTreeMap<String, u32> = [("a", 1), ("b", 2), ("c", 3)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let ext = BTreeMap::from([
            ("self".to_string(), ExternalMetric { values: ranks.iter().map(|(k, v)| (k.clone(), *v as f64)).collect(), higher_is_better: false }),
            ("flat".to_string(), ExternalMetric { values: ranks.keys().map(|k| (k.clone(), 1.0)).collect(), higher_is_better: true }),
            ("partial".to_string(), ExternalMetric { values: BTreeMap::from([("a".to_string(), 2.0), ("c".to_string(), 1.0)]), higher_is_better: true }),
        ]);
        let c = cross_correlations(&ranks, &ext);
        assert_eq!(c["self"].tau, Some(1.0));
        assert!((c["self"].pearson.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c["flat"].tau, None);
        assert_eq!(c["partial"].missing, vec!["b".to_string()]);
        assert_eq!(c["partial"].tau, Some(1.0));
    }

    #[test]
    fn external_file_parsing() {
        let text = "metric_name,model_id,value\nvbench,a,0.8\nvbench,b,0.7\nrelease,a,2024-06-01\nrelease,b,2023-01-01\nerr,a,3,lower\n";
        let m = parse_external(text).unwrap();
        assert_eq!(m["vbench"].values["a"], 0.8);
        assert!(m["release"].values["a"] > m["release"].values["b"]);
        assert!(!m["err"].higher_is_better);
        assert!(parse_external("x,a\n").is_err());
    }

    proptest! {
        #[test]
        fn improving_rsi_never_hurts(
            rsi in prop::collection::vec(0u8..6, 2..8),
            cci in prop::collection::vec(0u8..6, 8),
            who in 0usize..8,
            bump in 1u8..4,
        ) {
            let n = rsi.len();
            let who = who % n;
            let mk = |v: &[u8]| -> BTreeMap<String, f64> { v.iter().enumerate().map(|(i, s)| (format!("m{i}"), *s as f64)).collect() };
            let c = mk(&cci[..n]);
            let before = aggregate_rank(&mk(&rsi), &c).unwrap();
            let mut better = rsi.clone();
            better[who] += bump;
            let after = aggregate_rank(&mk(&better), &c).unwrap();
            let id = format!("m{who}");
            let rank = |rows: &[AggregateRow]| rows.iter().find(|r| r.model_id == id).unwrap().final_rank;
            prop_assert!(rank(&after) <= rank(&before));
            let scaled: Vec<f64> = rsi.iter().map(|v| *v as f64 * 3.5).collect();
            let scaled: BTreeMap<String, f64> = scaled.iter().enumerate().map(|(i, s)| (format!("m{i}"), *s)).collect();
            prop_assert_eq!(aggregate_rank(&scaled, &c).unwrap(), before);
        }

        #[test]
        fn tau_is_symmetric(a in prop::collection::vec(0u8..4, 2..7), b in prop::collection::vec(0u8..4, 7)) {
            let a: Vec<f64> = a.iter().map(|v| *v as f64).collect();
            let b: Vec<f64> = b[..a.len()].iter().map(|v| *v as f64).collect();
            prop_assert_eq!(kendall_tau(&a, &b), kendall_tau(&b, &a));
            if let Some(t) = kendall_tau(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&t));
            }
        }
    }
}
