//! Plain-text renderings of metric reports.
//!
//! Besides the per-run grid there are three comparison layouts: datasets
//! by systems with Recall/MRR/nDCG at the headline cutoff, datasets by
//! systems with nDCG at every cutoff, and one row per system.

use std::fmt::Write as _;

use super::MetricReport;

/// One report placed in a comparison table.
#[derive(Debug, Clone, Copy)]
pub struct ReportCell<'a> {
    pub dataset: &'a str,
    pub system: &'a str,
    pub report: &'a MetricReport,
}

/// 10 when the report has it, otherwise its largest cutoff.
pub fn headline_cutoff(report: &MetricReport) -> usize {
    if report.cutoffs.contains(&10) {
        10
    } else {
        report.cutoffs.last().copied().unwrap_or(10)
    }
}

fn fmt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

/// Column-aligned table. The first column is left aligned, the rest right
/// aligned. `groups` optionally labels runs of columns after the first,
/// as `(label, span)`.
fn layout(groups: &[(String, usize)], header: &[String], rows: &[Vec<String>]) -> String {
    let ncols = header.len();
    let mut widths: Vec<usize> = (0..ncols)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();

    let sep = 2;
    let mut start = 1;
    for (label, span) in groups {
        let cols = start..start + span;
        let have: usize = widths[cols.clone()].iter().sum::<usize>() + sep * (span - 1);
        let need = label.chars().count();
        if need > have {
            widths[start + span - 1] += need - have;
        }
        start += span;
    }

    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(s, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "{:sep$}{cell:>w$}", "", w = widths[c]);
            }
        }
        s.trim_end().to_string()
    };

    let total: usize = widths.iter().sum::<usize>() + sep * (ncols - 1);
    let mut out = String::new();
    if !groups.is_empty() {
        let mut s = format!("{:w$}", "", w = widths[0]);
        let mut start = 1;
        for (label, span) in groups {
            let w: usize = widths[start..start + span].iter().sum::<usize>() + sep * (span - 1);
            let _ = write!(s, "{:sep$}{label:^w$}", "");
            start += span;
        }
        out.push_str(s.trim_end());
        out.push('\n');
    }
    out.push_str(&line(header));
    out.push('\n');
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

/// Per-run grid: one row per metric, one column per cutoff, MAP last.
pub fn render_grid(report: &MetricReport) -> String {
    let meta = &report.run;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run: {}  stage: {}  rerank: {}  config: {}",
        or_dash(&meta.run_tag),
        or_dash(&meta.stage),
        or_dash(&meta.rerank_mode),
        or_dash(&meta.config_hash)
    );
    if !meta.encoder_fingerprint.is_empty() {
        let _ = writeln!(out, "encoder: {}", meta.encoder_fingerprint);
    }
    let _ = writeln!(
        out,
        "evaluated queries: {} (skipped: {} without positive judgments, {} unjudged, {} missing from run)",
        report.evaluated_queries,
        report.skipped.no_positive_judgments,
        report.skipped.not_in_qrels,
        report.skipped.not_in_run
    );
    if meta.fallback_count > 0 {
        let _ = writeln!(out, "LLM fallbacks: {}", meta.fallback_count);
    }
    out.push('\n');

    let mut header = vec!["metric".to_string()];
    header.extend(report.cutoffs.iter().map(|k| format!("k={k}")));
    let agg = &report.aggregate;
    let mut rows: Vec<Vec<String>> = [
        ("P", &agg.precision),
        ("Recall", &agg.recall),
        ("MRR", &agg.mrr),
        ("nDCG", &agg.ndcg),
    ]
    .iter()
    .map(|(name, col)| {
        let mut row = vec![format!("{name}@k")];
        row.extend(col.iter().map(|v| format!("{v:.4}")));
        row
    })
    .collect();
    let mut map_row = vec!["MAP".to_string(), format!("{:.4}", agg.map)];
    map_row.resize(header.len(), String::new());
    rows.push(map_row);
    out.push_str(&layout(&[], &header, &rows));
    out
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

/// Datasets as rows, one column group per system with Recall, MRR and nDCG
/// at the headline cutoff.
pub fn render_table(cells: &[ReportCell<'_>]) -> String {
    let datasets = first_seen(cells.iter().map(|c| c.dataset));
    let systems = first_seen(cells.iter().map(|c| c.system));
    let k = cells.first().map_or(10, |c| headline_cutoff(c.report));
    let metrics = ["Recall", "MRR", "nDCG"];

    let groups: Vec<(String, usize)> = systems.iter().map(|s| (s.to_string(), metrics.len())).collect();
    let mut header = vec!["Dataset".to_string()];
    for _ in &systems {
        header.extend(metrics.iter().map(|m| format!("{m}@{k}")));
    }
    let rows: Vec<Vec<String>> = datasets
        .iter()
        .map(|d| {
            let mut row = vec![d.to_string()];
            for s in &systems {
                let cell = cells.iter().find(|c| c.dataset == *d && c.system == *s);
                row.extend(metrics.iter().map(|m| fmt(cell.and_then(|c| c.report.value(m, k)), 4)));
            }
            row
        })
        .collect();
    layout(&groups, &header, &rows)
}

/// Datasets as rows, one column group per system with nDCG at every cutoff.
pub fn render_ndcg_table(cells: &[ReportCell<'_>]) -> String {
    let datasets = first_seen(cells.iter().map(|c| c.dataset));
    let systems = first_seen(cells.iter().map(|c| c.system));
    let cutoffs: Vec<usize> = cells.first().map(|c| c.report.cutoffs.clone()).unwrap_or_default();

    let groups: Vec<(String, usize)> = systems.iter().map(|s| (s.to_string(), cutoffs.len())).collect();
    let mut header = vec!["Dataset".to_string()];
    for _ in &systems {
        header.extend(cutoffs.iter().map(|k| format!("k={k}")));
    }
    let rows: Vec<Vec<String>> = datasets
        .iter()
        .map(|d| {
            let mut row = vec![d.to_string()];
            for s in &systems {
                let cell = cells.iter().find(|c| c.dataset == *d && c.system == *s);
                row.extend(
                    cutoffs
                        .iter()
                        .map(|&k| fmt(cell.and_then(|c| c.report.value("nDCG", k)), 3)),
                );
            }
            row
        })
        .collect();
    layout(&groups, &header, &rows)
}

/// One row per labelled report with Recall, MRR and nDCG at the headline
/// cutoff.
pub fn render_system_table(rows: &[(&str, &MetricReport)]) -> String {
    let k = rows.first().map_or(10, |(_, r)| headline_cutoff(r));
    let metrics = ["Recall", "MRR", "nDCG"];
    let mut header = vec!["System".to_string()];
    header.extend(metrics.iter().map(|m| format!("{m}@{k}")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, report)| {
            let mut row = vec![label.to_string()];
            row.extend(metrics.iter().map(|m| fmt(report.value(m, k), 4)));
            row
        })
        .collect();
    layout(&[], &header, &body)
}

/// Pre- versus post-rerank at the headline cutoff, with the signed delta.
pub fn render_comparison(pre: &MetricReport, post: &MetricReport) -> String {
    let k = headline_cutoff(post);
    let metrics = ["Recall", "MRR", "nDCG"];
    let mut header = vec!["Stage".to_string()];
    header.extend(metrics.iter().map(|m| format!("{m}@{k}")));
    header.push("MAP".to_string());

    let values = |r: &MetricReport| -> Vec<Option<f64>> {
        let mut v: Vec<Option<f64>> = metrics.iter().map(|m| r.value(m, k)).collect();
        v.push(Some(r.aggregate.map));
        v
    };
    let (a, b) = (values(pre), values(post));
    let row = |label: &str, vals: &[Option<f64>]| -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(vals.iter().map(|v| fmt(*v, 4)))
            .collect()
    };
    let delta: Vec<String> = std::iter::once("delta".to_string())
        .chain(a.iter().zip(&b).map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => format!("{:+.4}", y - x),
            _ => "-".to_string(),
        }))
        .collect();
    layout(
        &[],
        &header,
        &[row("pre-rerank", &a), row("post-rerank", &b), delta],
    )
}
