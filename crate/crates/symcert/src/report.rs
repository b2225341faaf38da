//! Outcome records and aggregate reporting.
//!
//! Certification runs write line-delimited JSON records; `aggregate` groups
//! the per-input summaries into Accuracy / Strength / PGD / Certified rows
//! and renders them as CSV plus an aligned text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard band over solver tolerance: a relaxation value must clear zero by
/// this much before an outcome counts as certified.
pub const CERTIFY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Falsified,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Certified => write!(f, "certified"),
            Verdict::Falsified => write!(f, "falsified"),
            Verdict::Unknown => write!(f, "unknown"),
        }
    }
}

/// Verdict for one competitor: an attack with positive margin falsifies; a
/// relaxation value safely below zero certifies; anything else is unknown.
/// `solver_ok` gates certification on a clean solve.
pub fn class_verdict(sdp_value: f64, lower_bound: Option<f64>, solver_ok: bool) -> Verdict {
    if let Some(lb) = lower_bound {
        if lb > 0.0 {
            return Verdict::Falsified;
        }
    }
    if solver_ok && sdp_value < -CERTIFY_MARGIN {
        Verdict::Certified
    } else {
        Verdict::Unknown
    }
}

/// One record per (input, competitor) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub task: String,
    pub model: String,
    pub input: String,
    pub norm: String,
    pub eps: f64,
    pub predicted: usize,
    pub competitor: usize,
    pub sdp_value: f64,
    pub lower_bound: Option<f64>,
    pub verdict: Verdict,
    pub rank1_gap: Option<f64>,
    pub wall_time_s: f64,
    pub solver_status: String,
}

/// One record per certified input, aggregating its class records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSummary {
    pub task: String,
    pub model: String,
    pub input: String,
    pub norm: String,
    pub eps: f64,
    pub predicted: usize,
    pub classes: usize,
    /// Prediction matched the label (absent label counts as correct).
    pub correct: bool,
    /// Correct and no competitor was falsified by the attack.
    pub pgd_robust: bool,
    /// Correct and every competitor certified.
    pub certified: bool,
    pub verdict: Verdict,
}

/// A line of the outcome stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum OutcomeRecord {
    Class(ClassOutcome),
    Summary(InputSummary),
}

pub fn to_jsonl(records: &[OutcomeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<OutcomeRecord>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(format!("outcome record: {e}"))))
        .collect()
}

/// One aggregated row per (model, norm, eps).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub norm: String,
    pub eps: f64,
    pub inputs: usize,
    pub accuracy: usize,
    pub pgd: usize,
    pub certified: usize,
}

/// Group the summaries of all records under `dir` into report rows.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut summaries = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::Io(e.to_string()))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        for record in parse_jsonl(&text)? {
            if let OutcomeRecord::Summary(s) = record {
                summaries.push(s);
            }
        }
    }
    if summaries.is_empty() {
        return Err(Error::EmptyDirectory(dir.display().to_string()));
    }
    Ok(aggregate(&summaries))
}

pub fn aggregate(summaries: &[InputSummary]) -> Vec<ReportRow> {
    let mut rows: BTreeMap<(String, String, String), ReportRow> = BTreeMap::new();
    for s in summaries {
        let key = (s.model.clone(), s.norm.clone(), format!("{:.6}", s.eps));
        let row = rows.entry(key).or_insert_with(|| ReportRow {
            model: s.model.clone(),
            norm: s.norm.clone(),
            eps: s.eps,
            inputs: 0,
            accuracy: 0,
            pgd: 0,
            certified: 0,
        });
        row.inputs += 1;
        if s.correct {
            row.accuracy += 1;
        }
        if s.pgd_robust {
            row.pgd += 1;
        }
        if s.certified {
            row.certified += 1;
        }
    }
    rows.into_values().collect()
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("model,norm,eps,inputs,accuracy,pgd,certified\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.norm, r.eps, r.inputs, r.accuracy, r.pgd, r.certified
        );
    }
    out
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let headers = ["Model", "Norm", "Strength", "Inputs", "Accuracy", "PGD", "Certified"];
    let mut cells: Vec<[String; 7]> = Vec::with_capacity(rows.len());
    for r in rows {
        cells.push([
            r.model.clone(),
            r.norm.clone(),
            format!("{}", r.eps),
            r.inputs.to_string(),
            r.accuracy.to_string(),
            r.pgd.to_string(),
            r.certified.to_string(),
        ]);
    }
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let render_row = |cols: &[String]| -> String {
        let mut line = String::new();
        for (i, (c, w)) in cols.iter().zip(&widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{c:>w$}", w = w);
        }
        line
    };
    let header_cells: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    out.push_str(&render_row(&header_cells));
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in &cells {
        out.push_str(&render_row(&row.to_vec()));
        out.push('\n');
    }
    out
}
