//! Facial reduction preprocessing.
//!
//! With the corner pinned to one, a row <B, X> <= r is equivalent to
//! <B - r E00, X> <= 0. When that adjusted matrix is PSD, every feasible
//! point satisfies it with equality and lies on the face
//! {X PSD : (B - r E00) X = 0}; restricting to the face shrinks the problem
//! and removes the degeneracy that stalls both solver algorithms (point
//! balls and inactive/pinned activations are the common sources). Faces
//! hidden in nonnegative combinations of two inequality rows are found by a
//! one-dimensional concave search on lambda_min.

use super::eigen::sym_eigen;
use crate::error::{Error, Result};
use crate::linalg::{Mat, SparseSym};
use crate::qp::Sense;
use crate::relax::{SdpConstraint, SdpProblem};

/// Relative tolerance for accepting a matrix as PSD.
const PSD_SLACK: f64 = 1e-10;
/// Null-space split: eigenvalues below this (relative) are face directions.
const NULL_CUT: f64 = 1e-9;
/// Eigenvalues above this (relative) are definitely kept; anything between
/// the two thresholds makes the split ambiguous and aborts the reduction.
const KEEP_CUT: f64 = 1e-6;
const MAX_PASSES: usize = 6;

/// Reduction outcome: the transformed problem and the orthonormal basis V
/// with X = V Y V^T.
pub(super) struct Reduction {
    pub problem: SdpProblem,
    pub basis: Option<Mat>,
}

/// <B, X> <= r folded to <B - r K, X> <= 0 using the corner certificate K
/// with <K, X> = 1 on the feasible set (K is E00 in the original space and
/// its image under the face restrictions afterwards).
fn adjusted_dense(con: &SdpConstraint, corner: &Mat) -> Mat {
    let dim = corner.rows();
    let mut b = Mat::zeros(dim, dim);
    con.mat.add_scaled_into(&mut b, 1.0);
    if con.rhs != 0.0 {
        for i in 0..dim {
            for j in 0..dim {
                b.add_to(i, j, -con.rhs * corner.get(i, j));
            }
        }
    }
    b
}

fn spectral_range(m: &Mat) -> Result<(f64, f64)> {
    let (values, _) = sym_eigen(m)?;
    Ok((values[0], values[values.len() - 1]))
}

/// lambda_min of B_quad + t * B_lin, concave in t; maximized by golden
/// section over [0, hi].
fn best_combination(quad: &Mat, lin: &Mat, hi: f64) -> Result<(f64, f64)> {
    let d = quad.rows();
    let eval = |t: f64| -> Result<f64> {
        let mut m = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, quad.get(i, j) + t * lin.get(i, j));
            }
        }
        Ok(sym_eigen(&m)?.0[0])
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut up) = (0.0, hi);
    let mut t1 = up - phi * (up - lo);
    let mut t2 = lo + phi * (up - lo);
    let mut f1 = eval(t1)?;
    let mut f2 = eval(t2)?;
    for _ in 0..80 {
        if f1 < f2 {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = lo + phi * (up - lo);
            f2 = eval(t2)?;
        } else {
            up = t2;
            t2 = t1;
            f2 = f1;
            t1 = up - phi * (up - lo);
            f1 = eval(t1)?;
        }
    }
    let t = 0.5 * (lo + up);
    Ok((t, eval(t)?))
}

fn matrix_top(m: &Mat) -> Result<f64> {
    let (lo, hi) = spectral_range(m)?;
    Ok(lo.abs().max(hi.abs()))
}

/// One pass: accumulate every detected pinning matrix; returns the summed
/// pinner if anything was found.
fn detect_faces(problem: &SdpProblem, corner: &Mat, allow_pairs: bool) -> Result<Option<Mat>> {
    let dim = problem.dim;
    let mut pinner: Option<Mat> = None;
    let mut add_pinned = |mat: &Mat, top: f64| {
        let target = pinner.get_or_insert_with(|| Mat::zeros(dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                target.add_to(i, j, mat.get(i, j) / top);
            }
        }
    };

    let adjusted: Vec<Mat> =
        problem.constraints.iter().map(|c| adjusted_dense(c, corner)).collect();
    let mut singles = vec![false; adjusted.len()];
    for (idx, con) in problem.constraints.iter().enumerate() {
        let b = &adjusted[idx];
        let (lo, hi) = spectral_range(b)?;
        let top = lo.abs().max(hi.abs());
        if top == 0.0 {
            continue;
        }
        let psd = lo >= -PSD_SLACK * top;
        let nsd = hi <= PSD_SLACK * top;
        match con.sense {
            Sense::Leq0 if psd => {
                add_pinned(b, top);
                singles[idx] = true;
            }
            Sense::Eq0 if psd => {
                add_pinned(b, top);
                singles[idx] = true;
            }
            Sense::Eq0 if nsd => {
                let mut neg = b.clone();
                neg.scale(-1.0);
                add_pinned(&neg, top);
                singles[idx] = true;
            }
            _ => {}
        }
    }

    if allow_pairs {
        for (qi, qcon) in problem.constraints.iter().enumerate() {
            if qcon.sense != Sense::Leq0 || singles[qi] || qcon.mat.is_empty() {
                continue;
            }
            for (li, lcon) in problem.constraints.iter().enumerate() {
                if li == qi || lcon.sense != Sense::Leq0 || singles[li] || lcon.mat.is_empty() {
                    continue;
                }
                let tq = matrix_top(&adjusted[qi])?;
                let tl = matrix_top(&adjusted[li])?;
                if tq == 0.0 || tl == 0.0 {
                    continue;
                }
                let hi = 1e3 * (1.0 + tq / tl);
                let (t, fmin) = best_combination(&adjusted[qi], &adjusted[li], hi)?;
                if t <= 0.0 {
                    continue;
                }
                let mut combo = adjusted[qi].clone();
                for r in 0..dim {
                    for c in 0..dim {
                        combo.add_to(r, c, t * adjusted[li].get(r, c));
                    }
                }
                let top = matrix_top(&combo)?;
                if top > 0.0 && fmin >= -PSD_SLACK * top {
                    add_pinned(&combo, top);
                }
            }
        }
    }
    Ok(pinner)
}

/// Orthonormal basis of the (well-separated) null space of a PSD pinner;
/// `None` when the spectral split is ambiguous.
fn null_basis(pinner: &Mat) -> Result<Option<Mat>> {
    let dim = pinner.rows();
    let (values, vectors) = sym_eigen(pinner)?;
    let top = values[dim - 1].max(0.0);
    if top == 0.0 {
        return Ok(None);
    }
    let mut null_count = 0;
    for &v in &values {
        if v <= NULL_CUT * top {
            null_count += 1;
        } else if v < KEEP_CUT * top {
            return Ok(None); // ambiguous split
        }
    }
    if null_count == 0 || null_count == dim {
        return Ok(None);
    }
    let mut basis = Mat::zeros(dim, null_count);
    for k in 0..null_count {
        for r in 0..dim {
            basis.set(r, k, vectors.get(r, k));
        }
    }
    Ok(Some(basis))
}

fn transform_sparse(mat: &SparseSym, basis: &Mat) -> SparseSym {
    let dim = basis.rows();
    let reduced = basis.cols();
    let mut dense = Mat::zeros(dim, dim);
    mat.add_scaled_into(&mut dense, 1.0);
    let mut out = basis.transpose().matmul(&dense).matmul(basis);
    out.symmetrize();
    // Cancellation noise scales with the matrix being transformed, not with
    // the (possibly zero) result; entries below that go away entirely.
    let floor = mat.frobenius_norm() * 1e-13;
    let mut triplets = Vec::new();
    for i in 0..reduced {
        for j in i..reduced {
            let v = out.get(i, j);
            if v.abs() > floor {
                triplets.push((i, j, v));
            }
        }
    }
    SparseSym::from_triplets(triplets)
}

/// Iteratively restrict the problem to the face its PSD rows force. The
/// returned basis is `None` when no reduction applied.
pub(super) fn reduce(problem: &SdpProblem) -> Result<Reduction> {
    let mut current = problem.clone();
    let mut corner = Mat::zeros(problem.dim, problem.dim);
    corner.set(0, 0, 1.0);
    let mut total_basis: Option<Mat> = None;
    let mut allow_pairs = false;
    for _ in 0..MAX_PASSES {
        let Some(pinner) = detect_faces(&current, &corner, allow_pairs)? else { break };
        let Some(basis) = null_basis(&pinner)? else { break };
        if basis.cols() == 0 {
            return Err(Error::InvalidProblem("facial reduction emptied the problem"));
        }
        // Rows whose adjusted matrix vanishes on the face hold with equality
        // there; they are absorbed into empty rows so the leftover transform
        // noise cannot poison feasibility.
        let constraints = current
            .constraints
            .iter()
            .map(|c| {
                let adjusted = adjusted_dense(c, &corner);
                let adj_norm = adjusted.frobenius_norm();
                let transformed = basis.transpose().matmul(&adjusted).matmul(&basis);
                // Rows proportional to the corner certificate have a zero
                // adjusted matrix by construction and must stay: they are
                // what pins the certificate to one.
                if adj_norm > 1e-12 && transformed.frobenius_norm() <= 1e-7 * adj_norm {
                    SdpConstraint { mat: SparseSym::new(), sense: c.sense, rhs: 0.0 }
                } else {
                    SdpConstraint {
                        mat: transform_sparse(&c.mat, &basis),
                        sense: c.sense,
                        rhs: c.rhs,
                    }
                }
            })
            .collect();
        current = SdpProblem {
            dim: basis.cols(),
            objective: transform_sparse(&current.objective, &basis),
            constraints,
            negate_value: current.negate_value,
        };
        let mut reduced_corner = basis.transpose().matmul(&corner).matmul(&basis);
        reduced_corner.symmetrize();
        corner = reduced_corner;
        total_basis = Some(match total_basis {
            None => basis,
            Some(prev) => prev.matmul(&basis),
        });
        allow_pairs = true;
    }
    Ok(Reduction { problem: current, basis: total_basis })
}

/// Lift a reduced solution matrix back to the original space.
pub(super) fn lift_solution(reduced: &Mat, basis: &Mat) -> Mat {
    let mut full = basis.matmul(reduced).matmul(&basis.transpose());
    full.symmetrize();
    full
}
