//! Shor relaxation: turn a quadratic program into a semidefinite one, in
//! primal (lifted moment matrix) or dual (Lagrangian multiplier) form, with
//! an affine-elimination presolve in front.

mod presolve;
mod sdpa;

pub use presolve::{presolve_eliminate_affine, AffineExpr, PresolvedQp};
pub use sdpa::{export_sdpa, parse_sdpa, SdpaEntry, SdpaFile};

use crate::linalg::{Mat, SparseSym};
use crate::qp::{Direction, QuadForm, QuadraticProgram, Sense};

/// One linear constraint <mat, X> {<=,=} rhs on the lifted matrix variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub mat: SparseSym,
    pub sense: Sense,
    pub rhs: f64,
}

/// A semidefinite program in minimization form:
/// min <objective, X> s.t. constraints, X PSD. The corner normalization
/// X_11 = 1 is always among the constraints. `negate_value` records that the
/// value to report for the originating problem is the negated solver value.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: SparseSym,
    pub constraints: Vec<SdpConstraint>,
    pub negate_value: bool,
}

impl SdpProblem {
    /// Value to report for the originating problem given the solver's
    /// minimum value.
    pub fn reported_value(&self, raw_min: f64) -> f64 {
        if self.negate_value {
            -raw_min
        } else {
            raw_min
        }
    }

    /// Rank-one lift X(x) = [1; x][1; x]^T of a point of the original
    /// program (primal form only).
    pub fn lift_point(point: &[f64]) -> Mat {
        let d = point.len() + 1;
        let mut x = Mat::zeros(d, d);
        let mut v = Vec::with_capacity(d);
        v.push(1.0);
        v.extend_from_slice(point);
        for i in 0..d {
            for j in 0..d {
                x.set(i, j, v[i] * v[j]);
            }
        }
        x
    }

    /// Violation of one constraint at a dense candidate X.
    pub fn constraint_violation(&self, idx: usize, x: &Mat) -> f64 {
        let con = &self.constraints[idx];
        let val = con.mat.frob_inner(x) - con.rhs;
        match con.sense {
            Sense::Leq0 => val.max(0.0),
            Sense::Eq0 => val.abs(),
        }
    }

    pub fn max_violation(&self, x: &Mat) -> f64 {
        (0..self.constraints.len()).map(|i| self.constraint_violation(i, x)).fold(0.0, f64::max)
    }
}

/// The lift of a program whose linear equalities were not substituted out is
/// unbounded: nothing caps the second moments of the defined variables. For
/// every linear equality f = 0 the square f^2 = 0 is also imposed, which
/// ties those moments down without changing the feasible set.
fn strengthened(qp: &QuadraticProgram) -> Vec<crate::qp::QuadConstraint> {
    let mut out = qp.constraints.clone();
    for con in &qp.constraints {
        if con.sense != Sense::Eq0 || !con.form.is_linear() || con.form.lin.is_empty() {
            continue;
        }
        let mut square = crate::qp::FormBuilder::new();
        let constant = con.form.constant;
        for &(i, bi) in &con.form.lin {
            let ci = 2.0 * bi;
            for &(j, bj) in &con.form.lin {
                square.monomial(i, j, ci * 2.0 * bj);
            }
            square.linear(i, 2.0 * constant * ci);
        }
        square.constant(constant * constant);
        out.push(square.eq0());
    }
    out
}

/// Bordered lift [[c, b^T], [b, A]] of a quadratic function, shifted one row
/// and column down.
fn bordered(form: &QuadForm) -> SparseSym {
    let mut triplets = Vec::with_capacity(form.quad.len() + form.lin.len() + 1);
    if form.constant != 0.0 {
        triplets.push((0, 0, form.constant));
    }
    for &(i, b) in &form.lin {
        triplets.push((0, 1 + i, b));
    }
    for &(i, j, a) in &form.quad {
        triplets.push((1 + i, 1 + j, a));
    }
    SparseSym::from_triplets(triplets)
}

/// Primal Shor relaxation: drop the rank-one requirement on the lifted
/// moment matrix. For a maximization program the SDP value upper-bounds the
/// program value; for minimization it lower-bounds it.
pub fn shor_primal(qp: &QuadraticProgram) -> SdpProblem {
    let dim = qp.dim() + 1;
    let rows = strengthened(qp);
    let mut constraints = Vec::with_capacity(rows.len() + 1);
    constraints.push(SdpConstraint {
        mat: SparseSym::from_triplets([(0, 0, 1.0)]),
        sense: Sense::Eq0,
        rhs: 1.0,
    });
    for con in &rows {
        constraints.push(SdpConstraint { mat: bordered(&con.form), sense: con.sense, rhs: 0.0 });
    }
    let (objective, negate_value) = match qp.direction {
        Direction::Minimize => (bordered(&qp.objective), false),
        Direction::Maximize => (bordered(&qp.objective.negated()), true),
    };
    SdpProblem { dim, objective, constraints, negate_value }
}

/// Dual (Lagrangian) Shor relaxation, embedded as a primal-form SDP over a
/// block matrix holding the corner normalization, one diagonal entry per
/// inequality multiplier, diagonal pairs for equality multipliers, and the
/// (1+N)-dimensional linear matrix inequality block.
///
/// The shift variable of the dual (the value being maximized) appears only
/// in the (0,0) entry of the LMI, so that entry is left free and the shift
/// is read off the objective instead: maximizing the shift is minimizing
/// S_00 - sum_i lambda_i c_i - c_0.
///
/// For a minimization program the reported value lower-bounds the program;
/// maximization programs are negated internally, making the reported value
/// an upper bound.
pub fn shor_dual(qp: &QuadraticProgram) -> SdpProblem {
    let negated;
    let objective_form = match qp.direction {
        Direction::Minimize => {
            negated = false;
            qp.objective.clone()
        }
        Direction::Maximize => {
            negated = true;
            qp.objective.negated()
        }
    };
    let n = qp.dim();
    let lmi_dim = n + 1;
    let rows = strengthened(qp);

    // Layout: corner, multiplier diagonals, LMI block.
    let mut cursor = 1;
    let mut multiplier_slots = Vec::with_capacity(rows.len());
    for con in &rows {
        match con.sense {
            Sense::Leq0 => {
                multiplier_slots.push((cursor, None));
                cursor += 1;
            }
            Sense::Eq0 => {
                multiplier_slots.push((cursor, Some(cursor + 1)));
                cursor += 2;
            }
        }
    }
    let lmi_start = cursor;
    let dim = lmi_start + lmi_dim;

    let bordered_objective = bordered(&objective_form);
    let bordered_cons: Vec<SparseSym> = rows.iter().map(|c| bordered(&c.form)).collect();

    let mut constraints = Vec::new();
    constraints.push(SdpConstraint {
        mat: SparseSym::from_triplets([(0, 0, 1.0)]),
        sense: Sense::Eq0,
        rhs: 1.0,
    });
    // One equality row per upper-triangle entry of the LMI block except the
    // free corner: S_rc - sum_i lambda_i (Abar_i)_rc = (Abar_0)_rc.
    let lookup = |mat: &SparseSym, r: usize, c: usize| -> f64 {
        mat.entries()
            .iter()
            .find(|&&(i, j, _)| i == r && j == c)
            .map(|&(_, _, v)| v)
            .unwrap_or(0.0)
    };
    for r in 0..lmi_dim {
        for c in r..lmi_dim {
            if r == 0 && c == 0 {
                continue;
            }
            let mut triplets = Vec::new();
            triplets.push((lmi_start + r, lmi_start + c, if r == c { 1.0 } else { 0.5 }));
            for (slots, mat) in multiplier_slots.iter().zip(&bordered_cons) {
                let v = lookup(mat, r, c);
                if v != 0.0 {
                    triplets.push((slots.0, slots.0, -v));
                    if let Some(neg) = slots.1 {
                        triplets.push((neg, neg, v));
                    }
                }
            }
            constraints.push(SdpConstraint {
                mat: SparseSym::from_triplets(triplets),
                sense: Sense::Eq0,
                rhs: lookup(&bordered_objective, r, c),
            });
        }
    }
    // Shift = c_0 + sum_i lambda_i c_i - S_00; maximizing it minimizes
    // S_00 - sum_i lambda_i c_i - c_0 (the constant rides on the corner).
    let mut objective_triplets = vec![(lmi_start, lmi_start, 1.0)];
    let c0 = lookup(&bordered_objective, 0, 0);
    if c0 != 0.0 {
        objective_triplets.push((0, 0, -c0));
    }
    for (slots, mat) in multiplier_slots.iter().zip(&bordered_cons) {
        let ci = lookup(mat, 0, 0);
        if ci != 0.0 {
            objective_triplets.push((slots.0, slots.0, -ci));
            if let Some(neg) = slots.1 {
                objective_triplets.push((neg, neg, ci));
            }
        }
    }
    let objective = SparseSym::from_triplets(objective_triplets);
    SdpProblem { dim, objective, constraints, negate_value: !negated }
}
