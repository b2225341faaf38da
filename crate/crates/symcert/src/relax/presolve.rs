//! Affine-elimination presolve: substitute out every variable defined by a
//! linear equality with a unit coefficient, shrinking the program without
//! changing its optimum.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::qp::{FormBuilder, QuadConstraint, QuadForm, QuadraticProgram, Sense};

/// Affine expression over kept (original-index) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    fn eval(&self, vals: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * vals[i]).sum::<f64>() + self.constant
    }
}

/// The reduced program plus enough bookkeeping to move points between the
/// original and reduced variable spaces.
#[derive(Debug, Clone)]
pub struct PresolvedQp {
    pub program: QuadraticProgram,
    /// Original indices kept, ascending; position = new index.
    pub kept: Vec<usize>,
    pub old_dim: usize,
    /// Eliminated variable -> expression over kept original indices.
    pub definitions: Vec<(usize, AffineExpr)>,
}

impl PresolvedQp {
    /// Drop eliminated coordinates from a full point.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&i| full[i]).collect()
    }

    /// Rebuild a full point from a reduced one by evaluating definitions.
    pub fn reconstruct(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.old_dim];
        for (new, &old) in self.kept.iter().enumerate() {
            out[old] = reduced[new];
        }
        for (var, expr) in &self.definitions {
            out[*var] = expr.eval(&out);
        }
        out
    }
}

/// Candidate definition extracted from one linear equality row.
struct RawDef {
    constraint: usize,
    target: usize,
    /// Monomial coefficients of the remaining variables (may mention other
    /// defined variables until resolution).
    terms: Vec<(usize, f64)>,
    constant: f64,
}

/// Substitute out variables defined by linear equalities with coefficient
/// +-1. Definitions that depend on each other cyclically are left in place,
/// so the transform is always applicable (equilibrium programs included).
pub fn presolve_eliminate_affine(qp: &QuadraticProgram) -> Result<PresolvedQp> {
    let dim = qp.dim();
    let mut claimed = vec![false; dim];
    let mut raw_defs: Vec<RawDef> = Vec::new();

    for (ci, con) in qp.constraints.iter().enumerate() {
        if con.sense != Sense::Eq0 || !con.form.is_linear() || con.form.lin.is_empty() {
            continue;
        }
        // Monomial coefficients are twice the stored linear entries.
        let coeffs: Vec<(usize, f64)> =
            con.form.lin.iter().map(|&(i, b)| (i, 2.0 * b)).collect();
        let pick = coeffs
            .iter()
            .rev()
            .find(|&&(i, c)| c == 1.0 && !claimed[i])
            .or_else(|| coeffs.iter().rev().find(|&&(i, c)| c == -1.0 && !claimed[i]));
        let Some(&(target, pivot)) = pick else { continue };
        claimed[target] = true;
        let terms: Vec<(usize, f64)> = coeffs
            .iter()
            .filter(|&&(i, _)| i != target)
            .map(|&(i, c)| (i, -c / pivot))
            .collect();
        raw_defs.push(RawDef {
            constraint: ci,
            target,
            terms,
            constant: -con.form.constant / pivot,
        });
    }

    // Resolve definitions so each mentions only kept variables. Definitions
    // stuck in a dependency cycle are abandoned (their rows stay).
    let mut resolved: BTreeMap<usize, AffineExpr> = BTreeMap::new();
    let mut pending: Vec<RawDef> = raw_defs;
    let mut dropped_rows: Vec<usize> = Vec::new();
    loop {
        let mut progressed = false;
        let mut still_pending = Vec::new();
        for def in pending {
            let ready = def
                .terms
                .iter()
                .all(|&(i, _)| resolved.contains_key(&i) || !claimed[i]);
            if !ready {
                still_pending.push(def);
                continue;
            }
            let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
            let mut constant = def.constant;
            for &(i, c) in &def.terms {
                if let Some(expr) = resolved.get(&i) {
                    for &(j, cj) in &expr.terms {
                        *terms.entry(j).or_insert(0.0) += c * cj;
                    }
                    constant += c * expr.constant;
                } else {
                    *terms.entry(i).or_insert(0.0) += c;
                }
            }
            resolved.insert(
                def.target,
                AffineExpr {
                    terms: terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
                    constant,
                },
            );
            dropped_rows.push(def.constraint);
            progressed = true;
        }
        pending = still_pending;
        if pending.is_empty() {
            break;
        }
        if !progressed {
            // Cyclic subset: un-claim and keep those rows.
            for def in &pending {
                claimed[def.target] = false;
            }
            break;
        }
    }

    let kept_mask: Vec<bool> = (0..dim).map(|i| !resolved.contains_key(&i)).collect();
    let kept: Vec<usize> = (0..dim).filter(|&i| kept_mask[i]).collect();
    let mut new_index = vec![None; dim];
    for (newi, &old) in kept.iter().enumerate() {
        new_index[old] = Some(newi);
    }

    // Expression for every variable in terms of NEW indices.
    let expr_of = |var: usize| -> (Vec<(usize, f64)>, f64) {
        if let Some(expr) = resolved.get(&var) {
            (
                expr.terms
                    .iter()
                    .map(|&(i, c)| (new_index[i].expect("definition depends on kept var"), c))
                    .collect(),
                expr.constant,
            )
        } else {
            (vec![(new_index[var].expect("kept var has new index"), 1.0)], 0.0)
        }
    };

    let rewrite = |form: &QuadForm| -> QuadForm {
        let mut out = FormBuilder::new();
        out.constant(form.constant);
        for &(i, j, a) in &form.quad {
            let mono = if i == j { a } else { 2.0 * a };
            let (ti, ki) = expr_of(i);
            let (tj, kj) = expr_of(j);
            for &(p, cp) in &ti {
                for &(q, cq) in &tj {
                    out.monomial(p, q, mono * cp * cq);
                }
            }
            if kj != 0.0 {
                for &(p, cp) in &ti {
                    out.linear(p, mono * cp * kj);
                }
            }
            if ki != 0.0 {
                for &(q, cq) in &tj {
                    out.linear(q, mono * ki * cq);
                }
            }
            out.constant(mono * ki * kj);
        }
        for &(i, b) in &form.lin {
            let mono = 2.0 * b;
            let (ti, ki) = expr_of(i);
            for &(p, cp) in &ti {
                out.linear(p, mono * cp);
            }
            out.constant(mono * ki);
        }
        out.build()
    };

    let objective = rewrite(&qp.objective);
    let mut constraints = Vec::new();
    for (ci, con) in qp.constraints.iter().enumerate() {
        if dropped_rows.contains(&ci) {
            continue;
        }
        let form = rewrite(&con.form);
        if form.is_zero() {
            continue;
        }
        constraints.push(QuadConstraint { form, sense: con.sense });
    }

    let symbols = qp.symbols.restricted(&kept_mask);
    Ok(PresolvedQp {
        program: QuadraticProgram {
            direction: qp.direction,
            objective,
            constraints,
            symbols,
        },
        kept,
        old_dim: dim,
        definitions: resolved.into_iter().collect(),
    })
}
