//! Per-cell summaries, paired comparisons and ROI tables from stored records.

use std::collections::BTreeMap;
use std::path::Path;

use proboost::eval::{paired_t_test_one_tailed, roi, summarize_runs, MetricsReport};
use proboost::Error as CoreError;

use crate::error::{CliError, Result};
use crate::run::{load_records, ResultRecord};
use crate::{write_atomic, RepSeeds};

/// A table of preformatted cells, rendered either aligned or as CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        out.push_str(
            &(widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("  ")
                + "\n"),
        );
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { header, rows })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub summary: Table,
    pub comparisons: Table,
    /// ROI against the baseline by variant and `V`, one row per metric.
    pub plot: Table,
}

impl Report {
    pub fn to_text(&self) -> String {
        format!(
            "Per-cell summary\n\n{}\nTreatment vs baseline (one-tailed paired t-test, ROI of means)\n\n{}",
            self.summary.to_text(),
            self.comparisons.to_text()
        )
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

fn metric_names() -> Vec<&'static str> {
    let mut v = MetricsReport::METRIC_NAMES.to_vec();
    v.push("micro_acc");
    v
}

type Cell<'a> = BTreeMap<usize, &'a ResultRecord>;

fn group(records: &[ResultRecord]) -> Result<BTreeMap<String, Cell<'_>>> {
    let mut cells: BTreeMap<String, Cell<'_>> = BTreeMap::new();
    for r in records {
        if cells
            .entry(r.cell.clone())
            .or_default()
            .insert(r.repetition, r)
            .is_some()
        {
            return Err(CliError::Data(format!(
                "two records for {} repetition {}",
                r.cell, r.repetition
            )));
        }
    }
    Ok(cells)
}

fn values(cell: &Cell<'_>, metric: &str) -> Option<Vec<f64>> {
    cell.values().map(|r| r.metrics.get(metric)).collect()
}

/// Baseline for `cell` when none is named: the same family, variant and
/// scheme with a single level.
fn default_baseline(cell: &ResultRecord) -> String {
    crate::run::cell_id(
        cell.config.learner.family.name(),
        cell.config.variant,
        1,
        cell.config.weights,
    )
}

/// Builds every table. `baseline` names one cell compared against
/// `treatments` (all other cells when empty); without it each cell is
/// compared against its own single-level counterpart.
pub fn build_report(
    records: &[ResultRecord],
    baseline: Option<&str>,
    treatments: &[String],
) -> Result<Report> {
    let cells = group(records)?;
    let metrics = metric_names();
    let mut summary = Table::new(&[
        "cell", "metric", "n", "mu", "sigma", "min", "max", "ci_low", "ci_high",
    ]);
    for (name, cell) in &cells {
        if cell.len() < 2 {
            return Err(CliError::Data(format!(
                "cell {name} has {} repetition(s); at least 2 are needed",
                cell.len()
            )));
        }
        for m in &metrics {
            if let Some(v) = values(cell, m) {
                let s = summarize_runs(&v)?;
                summary.rows.push(vec![
                    name.clone(),
                    m.to_string(),
                    s.n.to_string(),
                    fmt(s.mu),
                    fmt(s.sigma),
                    fmt(s.min),
                    fmt(s.max),
                    fmt(s.ci_low),
                    fmt(s.ci_high),
                ]);
            }
        }
    }

    let mut pairs: Vec<(String, String)> = Vec::new();
    match baseline {
        Some(b) => {
            if !cells.contains_key(b) {
                return Err(CliError::Data(format!("baseline cell {b} has no records")));
            }
            let chosen: Vec<String> = if treatments.is_empty() {
                cells.keys().filter(|c| c.as_str() != b).cloned().collect()
            } else {
                treatments.to_vec()
            };
            for t in chosen {
                if !cells.contains_key(&t) {
                    return Err(CliError::Data(format!("treatment cell {t} has no records")));
                }
                pairs.push((b.to_string(), t));
            }
        }
        None => {
            for (name, cell) in &cells {
                if !treatments.is_empty() && !treatments.contains(name) {
                    continue;
                }
                let first = cell.values().next().expect("non-empty cell");
                let b = default_baseline(first);
                if &b != name && cells.contains_key(&b) {
                    pairs.push((b, name.clone()));
                }
            }
        }
    }

    let mut comparisons = Table::new(&[
        "baseline",
        "treatment",
        "metric",
        "n",
        "baseline_mu",
        "treatment_mu",
        "roi",
        "t",
        "p",
        "note",
    ]);
    let mut plot = Table::new(&["family", "variant", "scheme", "levels", "metric", "roi"]);
    let mut plotted_baselines = Vec::new();
    for (b, t) in &pairs {
        let (bc, tc) = (&cells[b], &cells[t]);
        let seeds = |c: &Cell<'_>| {
            c.iter()
                .map(|(r, rec)| (*r, rec.seeds))
                .collect::<Vec<(usize, RepSeeds)>>()
        };
        if seeds(bc) != seeds(tc) {
            return Err(CliError::Data(format!(
                "cells {b} and {t} were not run on matching seeds"
            )));
        }
        let trec = tc.values().next().expect("non-empty cell");
        let brec = bc.values().next().expect("non-empty cell");
        for m in &metrics {
            let (Some(bv), Some(tv)) = (values(bc, m), values(tc, m)) else {
                continue;
            };
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (bm, tm) = (mean(&bv), mean(&tv));
            let r = roi(bm, tm).ok();
            let (tstat, p, note) = match paired_t_test_one_tailed(&bv, &tv) {
                Ok(res) => (fmt(res.t), fmt(res.p), String::new()),
                Err(CoreError::DegenerateDifferences) => (
                    String::new(),
                    String::new(),
                    "degenerate differences".into(),
                ),
                Err(e) => return Err(e.into()),
            };
            let roi_s = r.map(fmt).unwrap_or_default();
            comparisons.rows.push(vec![
                b.clone(),
                t.clone(),
                m.to_string(),
                bv.len().to_string(),
                fmt(bm),
                fmt(tm),
                roi_s.clone(),
                tstat,
                p,
                note,
            ]);
            let row = |rec: &ResultRecord, roi_s: String| {
                vec![
                    rec.config.learner.family.name().to_string(),
                    rec.config.variant.short_name().to_string(),
                    rec.config.weights.short_name().to_string(),
                    rec.config.levels.to_string(),
                    m.to_string(),
                    roi_s,
                ]
            };
            if !plotted_baselines.contains(&(b.clone(), *m)) {
                plotted_baselines.push((b.clone(), *m));
                plot.rows.push(row(brec, fmt(0.0)));
            }
            plot.rows.push(row(trec, roi_s));
        }
    }
    plot.rows.sort_by(|x, y| {
        (
            &x[0],
            &x[1],
            &x[2],
            &x[4],
            x[3].parse::<usize>().unwrap_or(0),
        )
            .cmp(&(
                &y[0],
                &y[1],
                &y[2],
                &y[4],
                y[3].parse::<usize>().unwrap_or(0),
            ))
    });
    plot.rows.dedup();
    Ok(Report {
        summary,
        comparisons,
        plot,
    })
}

/// Reads the records under `out`, writes `report/{report.txt, summary.csv,
/// comparisons.csv, roi_plot.csv}` and returns the report.
pub fn cmd_report(out: &Path, baseline: Option<&str>, treatments: &[String]) -> Result<Report> {
    let records = load_records(out)?;
    if records.is_empty() {
        return Err(CliError::MissingInput {
            path: out.join("records"),
            reason: "no records".into(),
        });
    }
    let report = build_report(&records, baseline, treatments)?;
    let dir = out.join("report");
    write_atomic(&dir.join("report.txt"), report.to_text().as_bytes())?;
    write_atomic(
        &dir.join("summary.csv"),
        report.summary.to_csv()?.as_bytes(),
    )?;
    write_atomic(
        &dir.join("comparisons.csv"),
        report.comparisons.to_csv()?.as_bytes(),
    )?;
    write_atomic(&dir.join("roi_plot.csv"), report.plot.to_csv()?.as_bytes())?;
    Ok(report)
}
