//! Quadratic-program encodings of verification tasks.
//!
//! A program is a symbol table (named groups of contiguous variable indices),
//! a quadratic objective and a list of quadratic constraints. Constraint
//! functions are stored as (A, b, c) with evaluation x'Ax + 2b'x + c; A keeps
//! only the upper triangle.

mod builders;
mod encoders;
mod witness;

pub use builders::{
    build_deq_fgl_qp, build_fgl_qp, build_local_robustness_qp, build_metric_qp, ReluEncoding,
    TaskQp,
};
pub use encoders::{
    affine_equalities, ball_constraints, rational_ball_aux_count, rational_ball_constraints,
    relu_branch_constraints, relu_exact_constraints, relu_theta_constraints, slope_constraints,
};
pub use witness::{WitnessPlan, WitnessRule};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};

/// Constraint sense: f(x) <= 0 or f(x) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Leq0,
    Eq0,
}

/// Objective direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Named, disjoint, contiguous variable groups covering [0, N).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolTable {
    groups: Vec<(String, Range<usize>)>,
    total: usize,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a group of `width` fresh variables, returning its index range.
    pub fn add_group(&mut self, name: &str, width: usize) -> Range<usize> {
        let range = self.total..self.total + width;
        self.groups.push((name.to_string(), range.clone()));
        self.total += width;
        range
    }

    pub fn group(&self, name: &str) -> Option<Range<usize>> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.groups.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }

    pub fn dim(&self) -> usize {
        self.total
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.total {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, dim: self.total })
        }
    }

    /// Human-readable name of a variable: group plus local offset.
    pub fn name_of(&self, index: usize) -> String {
        for (name, range) in &self.groups {
            if range.contains(&index) {
                return format!("{name}[{}]", index - range.start);
            }
        }
        format!("v[{index}]")
    }

    /// Rebuild the table keeping only the variables marked in `kept`
    /// (ascending old indices). Empty groups are dropped.
    pub fn restricted(&self, kept: &[bool]) -> SymbolTable {
        let mut out = SymbolTable::new();
        for (name, range) in &self.groups {
            let width = range.clone().filter(|&i| kept[i]).count();
            if width > 0 {
                out.add_group(name, width);
            }
        }
        out
    }
}

/// Quadratic function x'Ax + 2b'x + c with sparse upper-triangular A and
/// sparse b.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadForm {
    /// Upper-triangle entries of A (row <= col), sorted, merged.
    pub quad: Vec<(usize, usize, f64)>,
    /// Entries of b, sorted, merged.
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = self.constant;
        for &(i, j, a) in &self.quad {
            acc += if i == j { a * x[i] * x[i] } else { 2.0 * a * x[i] * x[j] };
        }
        for &(i, b) in &self.lin {
            acc += 2.0 * b * x[i];
        }
        acc
    }

    pub fn is_linear(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.quad.is_empty() && self.lin.is_empty() && self.constant == 0.0
    }

    pub fn negated(&self) -> QuadForm {
        QuadForm {
            quad: self.quad.iter().map(|&(i, j, v)| (i, j, -v)).collect(),
            lin: self.lin.iter().map(|&(i, v)| (i, -v)).collect(),
            constant: -self.constant,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        let q = self.quad.iter().map(|&(_, j, _)| j).max();
        let l = self.lin.iter().map(|&(i, _)| i).max();
        q.max(l)
    }
}

/// Accumulator with monomial-level methods; the 1/2 bookkeeping for the
/// (A, b) storage convention lives here and nowhere else.
#[derive(Debug, Default)]
pub struct FormBuilder {
    quad: BTreeMap<(usize, usize), f64>,
    lin: BTreeMap<usize, f64>,
    constant: f64,
}

impl FormBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `coef * x_i * x_j` (i and j may be equal).
    pub fn monomial(&mut self, i: usize, j: usize, coef: f64) -> &mut Self {
        let key = if i <= j { (i, j) } else { (j, i) };
        let stored = if i == j { coef } else { coef / 2.0 };
        *self.quad.entry(key).or_insert(0.0) += stored;
        self
    }

    /// Add `coef * x_i`.
    pub fn linear(&mut self, i: usize, coef: f64) -> &mut Self {
        *self.lin.entry(i).or_insert(0.0) += coef / 2.0;
        self
    }

    pub fn constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn build(self) -> QuadForm {
        QuadForm {
            quad: self
                .quad
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
            lin: self.lin.into_iter().filter(|&(_, v)| v != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn leq0(self) -> QuadConstraint {
        QuadConstraint { form: self.build(), sense: Sense::Leq0 }
    }

    pub fn eq0(self) -> QuadConstraint {
        QuadConstraint { form: self.build(), sense: Sense::Eq0 }
    }
}

/// One quadratic constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub form: QuadForm,
    pub sense: Sense,
}

impl QuadConstraint {
    /// How far the point is on the wrong side (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.form.eval(x);
        match self.sense {
            Sense::Leq0 => v.max(0.0),
            Sense::Eq0 => v.abs(),
        }
    }
}

/// A full quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub direction: Direction,
    pub objective: QuadForm,
    pub constraints: Vec<QuadConstraint>,
    pub symbols: SymbolTable,
}

impl QuadraticProgram {
    pub fn dim(&self) -> usize {
        self.symbols.dim()
    }

    /// Largest violation over all constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// Textual dump with monomial coefficients spelled out; used by the CLI
    /// `encode` command and golden tests.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let dir = match self.direction {
            Direction::Maximize => "max",
            Direction::Minimize => "min",
        };
        let _ = writeln!(
            out,
            "qp {dir} vars={} constraints={}",
            self.symbols.dim(),
            self.constraints.len()
        );
        for (name, range) in self.symbols.groups() {
            let _ = writeln!(out, "group {name} {}..{}", range.start, range.end);
        }
        let _ = writeln!(out, "objective: {}", self.render_form(&self.objective));
        for (idx, con) in self.constraints.iter().enumerate() {
            let sense = match con.sense {
                Sense::Leq0 => "<=0",
                Sense::Eq0 => "=0",
            };
            let _ = writeln!(out, "[{idx}] {}: {}", sense, self.render_form(&con.form));
        }
        out
    }

    fn render_form(&self, form: &QuadForm) -> String {
        let mut terms: Vec<String> = Vec::new();
        for &(i, j, a) in &form.quad {
            let coef = if i == j { a } else { 2.0 * a };
            let name = if i == j {
                format!("{}^2", self.symbols.name_of(i))
            } else {
                format!("{}*{}", self.symbols.name_of(i), self.symbols.name_of(j))
            };
            terms.push(format!("{}{}*{}", sign_prefix(coef), coef.abs(), name));
        }
        for &(i, b) in &form.lin {
            let coef = 2.0 * b;
            terms.push(format!("{}{}*{}", sign_prefix(coef), coef.abs(), self.symbols.name_of(i)));
        }
        if form.constant != 0.0 || terms.is_empty() {
            terms.push(format!("{}{}", sign_prefix(form.constant), form.constant.abs()));
        }
        terms.join(" ")
    }
}

fn sign_prefix(v: f64) -> &'static str {
    if v < 0.0 {
        "- "
    } else {
        "+ "
    }
}
