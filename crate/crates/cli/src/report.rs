//! Plain-text (Markdown) results tables.

use std::fmt::Write;

use revprobe::catalog::Catalog;
use revprobe::metrics::{BootstrapInterval, RsiReport};

use crate::stages::{AggregateArtifact, CciArtifact, EntropyArtifact, RsiArtifact};

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "n/a".into())
}

/// Two-sided interval, one-sided lower bound, and whether the bound clears
/// the baseline.
fn interval(ci: Option<&BootstrapInterval>) -> [String; 3] {
    match ci {
        Some(c) => [
            format!("[{}, {}]", num(c.low), num(c.high)),
            num(c.one_sided_low),
            if c.exceeds_baseline { "yes".into() } else { "no".into() },
        ],
        None => ["n/a".into(), "n/a".into(), "n/a".into()],
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// Models in aggregate order, then any model the aggregate lacks.
fn model_order(rsi: &RsiArtifact, agg: &AggregateArtifact) -> Vec<String> {
    let mut order: Vec<String> = agg.rows.iter().map(|r| r.model_id.clone()).collect();
    for m in rsi.models.keys() {
        if !order.contains(m) {
            order.push(m.clone());
        }
    }
    order
}

fn rsi_row(name: &str, r: &RsiReport, subsets: &[String]) -> Vec<String> {
    let mut row = vec![name.to_string()];
    for s in subsets {
        row.push(r.per_subset.get(s).map(|f| num(f.fraction)).unwrap_or_else(|| "n/a".into()));
    }
    row.push(num(r.overall));
    row.extend(interval(r.ci.as_ref()));
    row
}

pub fn render(
    catalog: &Catalog,
    rsi: &RsiArtifact,
    cci: &CciArtifact,
    agg: &AggregateArtifact,
    entropy: Option<&EntropyArtifact>,
) -> String {
    let mut out = String::new();
    let order = model_order(rsi, agg);
    let subsets: Vec<String> = catalog.subsets().iter().map(|s| s.subset_id.clone()).collect();
    let confidence = rsi
        .models
        .values()
        .find_map(|r| r.ci.as_ref().map(|c| c.confidence))
        .unwrap_or(0.9);
    let ci_label = format!("{:.0}% CI", confidence * 100.0);
    let low_label = format!("{:.0}% lower bound", confidence * 100.0);

    let _ = writeln!(out, "# Results (prompt mode: {})\n", rsi.prompt_mode);

    let _ = writeln!(out, "## RSI by subset\n");
    let mut header: Vec<&str> = vec!["model"];
    let names: Vec<String> = catalog.subsets().iter().map(|s| s.display_name.clone()).collect();
    header.extend(names.iter().map(String::as_str));
    header.extend(["overall", ci_label.as_str(), low_label.as_str(), "> 0.5"]);
    let mut rows: Vec<Vec<String>> = order
        .iter()
        .filter_map(|m| rsi.models.get(m).map(|r| rsi_row(m, r, &subsets)))
        .collect();
    if let Some(h) = &rsi.human {
        rows.push(rsi_row("human", h, &subsets));
    }
    table(&mut out, &header, &rows);

    let _ = writeln!(
        out,
        "## Causal and non-causal RSI\n\n{} causal, {} non-causal, {} unlabeled videos.\n",
        cci.n_causal, cci.n_noncausal, cci.n_unlabeled
    );
    let cci_row = |name: &str, r: &revprobe::metrics::CciReport| {
        let mut row = vec![name.to_string(), num(r.rsi_c.overall), num(r.rsi_nc.overall), num(r.cci)];
        row.extend(interval(r.ci.as_ref()));
        row
    };
    let mut rows: Vec<Vec<String>> = order.iter().filter_map(|m| cci.models.get(m).map(|r| cci_row(m, r))).collect();
    if let Some(h) = &cci.human {
        rows.push(cci_row("human", h));
    }
    table(&mut out, &["model", "RSI(D_c)", "RSI(D_nc)", "CCI", &ci_label, &low_label, "> 0"], &rows);

    let _ = writeln!(out, "## Aggregate ranking\n");
    let rows: Vec<Vec<String>> = agg
        .rows
        .iter()
        .map(|r| {
            vec![
                r.final_rank.to_string(),
                r.model_id.clone(),
                r.rsi_rank.to_string(),
                r.cci_rank.to_string(),
                r.rank_sum.to_string(),
            ]
        })
        .collect();
    table(&mut out, &["rank", "model", "RSI rank", "CCI rank", "sum"], &rows);
    if !agg.tie_break.is_empty() {
        let _ = writeln!(out, "Tie-break: {}.\n", agg.tie_break);
    }

    if !agg.correlations.is_empty() {
        let _ = writeln!(out, "## Agreement with other metrics\n");
        let rows: Vec<Vec<String>> = agg
            .correlations
            .iter()
            .map(|(name, c)| vec![name.clone(), opt(c.tau), opt(c.pearson), c.n_models.to_string()])
            .collect();
        table(&mut out, &["metric", "Kendall tau-b", "Pearson r", "models"], &rows);
    }

    if let Some(p) = &agg.preference {
        let _ = writeln!(out, "## Human preference (mean Borda points, {} rankings)\n", p.n_rankings);
        let mut ranked: Vec<(&String, &f64)> = p.scores.iter().collect();
        ranked.sort_by(|a, b| p.ranks[a.0].cmp(&p.ranks[b.0]).then_with(|| a.0.cmp(b.0)));
        let rows: Vec<Vec<String>> = ranked
            .into_iter()
            .map(|(m, s)| vec![p.ranks[m].to_string(), m.clone(), num(*s)])
            .collect();
        table(&mut out, &["rank", "model", "points"], &rows);
    }

    if let Some(e) = entropy {
        let _ = writeln!(
            out,
            "## Low-asymmetry motion subset\n\nKept {} of {} videos with defined asymmetry ({} profiled), fraction {}.\n",
            e.retained.len(),
            e.n_defined,
            e.n_profiles,
            e.fraction
        );
        let rows: Vec<Vec<String>> = order
            .iter()
            .filter_map(|m| {
                e.models.get(m).map(|r| {
                    let mut row = vec![m.clone(), num(r.overall), r.n_total.to_string()];
                    row.extend(interval(r.ci.as_ref()));
                    row
                })
            })
            .collect();
        table(&mut out, &["model", "RSI", "videos", &ci_label, &low_label, "> 0.5"], &rows);
    }

    let _ = writeln!(
        out,
        "## Method notes\n\n\
         - Preprocessing order: decode, FPS resample, resolution adapt, window; reversal happens after preprocessing.\n\
         - A video counts as correct only when the reversed loss is strictly higher; exact ties count as incorrect.\n\
         - Intervals come from a percentile bootstrap stratified by subset. \"{ci_label}\" is two-sided; \
         the lower bound is the one-sided bound compared against the baseline (0.5 for RSI, 0 for CCI).\n"
    );
    out
}
