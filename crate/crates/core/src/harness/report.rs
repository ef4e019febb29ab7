use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::DataSource;
use super::run::{ExperimentResult, Status, BASELINE_FILE, RESULT_FILE};
use crate::error::{Error, Result};
use crate::metrics::{delta_vs_baseline, ANSWER_TYPES};

pub const MARKDOWN_FILE: &str = "report.md";
pub const CSV_FILE: &str = "report.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub parameter_count: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub delta: Option<f64>,
    pub per_type: BTreeMap<String, f64>,
}

/// Results sorted by validation accuracy, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub baseline: Option<String>,
    pub per_type_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// `(name, error)` of cells that did not finish.
    pub failed: Vec<(String, String)>,
}

/// Finished and failed results in `dir` itself and its direct
/// subdirectories, ordered by name.
pub fn collect_results(dir: &Path) -> Result<Vec<ExperimentResult>> {
    let mut found = Vec::new();
    let own = dir.join(RESULT_FILE);
    if own.is_file() {
        found.push(ExperimentResult::read(&own)?);
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(RESULT_FILE).is_file())
        .collect();
    subdirs.sort();
    for d in subdirs {
        found.push(ExperimentResult::read(&d.join(RESULT_FILE))?);
    }
    found.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(found)
}

impl Report {
    pub fn build(results: &[ExperimentResult], baseline: Option<&str>) -> Result<Self> {
        let ok: Vec<&ExperimentResult> = results.iter().filter(|r| r.status == Status::Ok).collect();
        let failed = results
            .iter()
            .filter(|r| r.status == Status::Failed)
            .map(|r| (r.name.clone(), r.error.clone().unwrap_or_default()))
            .collect();
        let vals: Vec<(String, f64)> = ok.iter().map(|r| (r.name.clone(), r.val_accuracy)).collect();
        let deltas: Option<BTreeMap<String, f64>> = match baseline {
            Some(b) if vals.iter().any(|(n, _)| n == b) => {
                Some(delta_vs_baseline(&vals, b)?.into_iter().collect())
            }
            Some(b) => {
                log::warn!("baseline {b} has no finished result; Δ column left empty");
                None
            }
            None => None,
        };
        let vqa = ok.iter().any(|r| matches!(r.config.data, DataSource::Vqa { .. }));
        let mut per_type_columns: Vec<String> = Vec::new();
        if vqa {
            per_type_columns.extend(ANSWER_TYPES.iter().map(|s| s.to_string()));
            for r in &ok {
                for t in r.per_type.keys() {
                    if !per_type_columns.contains(t) {
                        per_type_columns.push(t.clone());
                    }
                }
            }
        }
        let mut rows: Vec<ReportRow> = ok
            .iter()
            .map(|r| ReportRow {
                name: r.name.clone(),
                parameter_count: r.parameter_count,
                train_accuracy: r.train_accuracy,
                val_accuracy: r.val_accuracy,
                delta: deltas.as_ref().map(|d| d[&r.name]),
                per_type: if vqa { r.per_type.clone() } else { BTreeMap::new() },
            })
            .collect();
        rows.sort_by(|a, b| {
            b.val_accuracy
                .total_cmp(&a.val_accuracy)
                .then_with(|| a.name.cmp(&b.name))
        });
        Ok(Self {
            baseline: baseline.map(String::from),
            per_type_columns,
            rows,
            failed,
        })
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["name", "params", "train", "val", "delta"].map(String::from).to_vec();
        h.extend(self.per_type_columns.iter().cloned());
        h
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mut header = self.header();
        header[4] = "Δ".into();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let align: Vec<&str> = header
            .iter()
            .enumerate()
            .map(|(i, _)| if i == 0 { "---" } else { "---:" })
            .collect();
        let _ = writeln!(out, "| {} |", align.join(" | "));
        for r in &self.rows {
            let mut cells = vec![
                r.name.clone(),
                r.parameter_count.to_string(),
                format!("{:.4}", r.train_accuracy),
                format!("{:.4}", r.val_accuracy),
                r.delta.map_or("-".into(), |d| format!("{d:+.4}")),
            ];
            cells.extend(
                self.per_type_columns
                    .iter()
                    .map(|t| r.per_type.get(t).map_or("-".into(), |v| format!("{v:.4}"))),
            );
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        if let Some(b) = &self.baseline {
            let _ = writeln!(out, "\nΔ: validation accuracy minus baseline `{b}`.");
        }
        if !self.failed.is_empty() {
            let _ = writeln!(out, "\nFailed:");
            for (name, err) in &self.failed {
                let _ = writeln!(out, "- `{name}`: {err}");
            }
        }
        out
    }

    /// Full-precision values so that parsing returns the same rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", self.header().join(","));
        for r in &self.rows {
            let mut cells = vec![
                r.name.clone(),
                r.parameter_count.to_string(),
                r.train_accuracy.to_string(),
                r.val_accuracy.to_string(),
                r.delta.map_or(String::new(), |d| d.to_string()),
            ];
            cells.extend(
                self.per_type_columns
                    .iter()
                    .map(|t| r.per_type.get(t).map_or(String::new(), |v| v.to_string())),
            );
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Rows and per-type columns back from [`to_csv`](Self::to_csv).
    pub fn rows_from_csv(text: &str, source_name: &str) -> Result<(Vec<String>, Vec<ReportRow>)> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().unwrap_or("").split(',').map(String::from).collect();
        if header.len() < 5 || header[..5] != ["name", "params", "train", "val", "delta"] {
            return Err(Error::Parse {
                source_name: source_name.into(),
                location: "line 1".into(),
                detail: "unexpected report header".into(),
            });
        }
        let types = header[5..].to_vec();
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let bad = |detail: String| Error::Parse {
                    source_name: source_name.into(),
                    location: format!("line {}", i + 2),
                    detail,
                };
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != header.len() {
                    return Err(bad(format!("expected {} cells, got {}", header.len(), cells.len())));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
                let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
                let mut per_type = BTreeMap::new();
                for (t, c) in types.iter().zip(&cells[5..]) {
                    if let Some(v) = opt(c)? {
                        per_type.insert(t.clone(), v);
                    }
                }
                Ok(ReportRow {
                    name: cells[0].into(),
                    parameter_count: cells[1].parse().map_err(|e| bad(format!("params: {e}")))?,
                    train_accuracy: num(cells[2])?,
                    val_accuracy: num(cells[3])?,
                    delta: opt(cells[4])?,
                    per_type,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((types, rows))
    }
}

/// Reads every result under `dir` and writes `report.md` and
/// `report.csv` next to them. The baseline comes from `baseline.txt` when
/// present.
pub fn emit_report(dir: &Path) -> Result<Report> {
    if !dir.is_dir() {
        return Err(Error::Lookup(format!("no results: {} is not a directory", dir.display())));
    }
    let results = collect_results(dir)?;
    if results.is_empty() {
        return Err(Error::Lookup(format!("no results found in {}", dir.display())));
    }
    let marker = dir.join(BASELINE_FILE);
    let baseline = if marker.is_file() {
        Some(fs::read_to_string(&marker).map_err(|e| Error::io(&marker, e))?.trim().to_string())
    } else {
        None
    };
    let report = Report::build(&results, baseline.as_deref())?;
    let md = dir.join(MARKDOWN_FILE);
    fs::write(&md, report.to_markdown()).map_err(|e| Error::io(&md, e))?;
    let csv = dir.join(CSV_FILE);
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok(report)
}
