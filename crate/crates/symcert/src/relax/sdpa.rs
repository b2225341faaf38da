//! Sparse SDPA interchange format.
//!
//! The exported file encodes the solver problem min <C, X> s.t.
//! <A_k, X> {<=,=} r_k, X PSD as the SDPA dual pair: block 1 is the PSD
//! block, inequality slacks live in an auxiliary nonnegative diagonal block,
//! the objective matrix is -C (SDPA maximizes <F_0, Y>). Values are rendered
//! in signed scientific notation with shortest round-trip precision, LF line
//! endings.

use std::fmt::Write as _;

use super::SdpProblem;
use crate::error::{Error, Result};
use crate::qp::Sense;

/// One sparse entry `matno blkno i j value` (indices 1-based, i <= j).
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaEntry {
    pub matrix: usize,
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Parsed/renderable SDPA file.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaFile {
    pub block_sizes: Vec<i64>,
    pub rhs: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaFile {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.rhs.len());
        let _ = writeln!(out, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", sizes.join(" "));
        let rhs: Vec<String> = self.rhs.iter().map(|v| format!("{v:+e}")).collect();
        let _ = writeln!(out, "{}", rhs.join(" "));
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {} {:+e}", e.matrix, e.block, e.row, e.col, e.value);
        }
        out
    }
}

/// Build the SDPA view of a problem.
pub fn sdpa_file_of(sdp: &SdpProblem) -> SdpaFile {
    let ineq: Vec<usize> = sdp
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.sense == Sense::Leq0)
        .map(|(i, _)| i)
        .collect();
    let mut block_sizes = vec![sdp.dim as i64];
    if !ineq.is_empty() {
        block_sizes.push(-(ineq.len() as i64));
    }
    let mut entries = Vec::new();
    // Objective: SDPA maximizes <F_0, Y>, we minimize <C, X>.
    for &(i, j, v) in sdp.objective.entries() {
        entries.push(SdpaEntry { matrix: 0, block: 1, row: i + 1, col: j + 1, value: -v });
    }
    for (k, con) in sdp.constraints.iter().enumerate() {
        for &(i, j, v) in con.mat.entries() {
            entries.push(SdpaEntry { matrix: k + 1, block: 1, row: i + 1, col: j + 1, value: v });
        }
        if con.sense == Sense::Leq0 {
            let pos = ineq.iter().position(|&x| x == k).expect("inequality indexed") + 1;
            entries.push(SdpaEntry { matrix: k + 1, block: 2, row: pos, col: pos, value: 1.0 });
        }
    }
    SdpaFile { block_sizes, rhs: sdp.constraints.iter().map(|c| c.rhs).collect(), entries }
}

/// Render a problem in sparse SDPA format.
pub fn export_sdpa(sdp: &SdpProblem) -> String {
    sdpa_file_of(sdp).render()
}

/// Parse a sparse SDPA file (comments starting with `"` or `*` allowed).
pub fn parse_sdpa(text: &str) -> Result<SdpaFile> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut next_line = || lines.next().ok_or_else(|| Error::Parse("sdpa: truncated file".into()));

    let m: usize = parse_token(next_line()?)?;
    let nblocks: usize = parse_token(next_line()?)?;
    let sizes_line = next_line()?;
    let block_sizes: Vec<i64> = sizes_line
        .split_whitespace()
        .map(parse_token::<i64>)
        .collect::<Result<_>>()?;
    if block_sizes.len() != nblocks {
        return Err(Error::Parse(format!(
            "sdpa: expected {nblocks} block sizes, found {}",
            block_sizes.len()
        )));
    }
    let rhs_line = next_line()?;
    let rhs: Vec<f64> = rhs_line
        .split_whitespace()
        .map(parse_token::<f64>)
        .collect::<Result<_>>()?;
    if rhs.len() != m {
        return Err(Error::Parse(format!("sdpa: expected {m} rhs values, found {}", rhs.len())));
    }
    let mut entries = Vec::new();
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(Error::Parse(format!("sdpa: malformed entry line `{line}`")));
        }
        let entry = SdpaEntry {
            matrix: parse_token(tokens[0])?,
            block: parse_token(tokens[1])?,
            row: parse_token(tokens[2])?,
            col: parse_token(tokens[3])?,
            value: parse_token(tokens[4])?,
        };
        if entry.matrix > m || entry.block == 0 || entry.block > nblocks || entry.row > entry.col {
            return Err(Error::Parse(format!("sdpa: entry out of range `{line}`")));
        }
        entries.push(entry);
    }
    Ok(SdpaFile { block_sizes, rhs, entries })
}

fn parse_token<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse(format!("sdpa: bad token `{tok}`")))
}
