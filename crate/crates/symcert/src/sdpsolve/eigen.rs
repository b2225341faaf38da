//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the PSD
//! projection built on it.

use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// symmetric matrix. The input is symmetrized on entry.
pub fn sym_eigen(s: &Mat) -> Result<(Vec<f64>, Mat)> {
    assert_eq!(s.rows(), s.cols());
    let n = s.rows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let mut a = s.clone();
    a.symmetrize();
    let mut v = Mat::identity(n);
    let mut d: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];
    let scale = 1.0 + s.frobenius_norm();
    let target = 1e-13 * scale;

    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off <= target {
            converged = true;
            break;
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a.set(p, q, 0.0);
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sin = t * c;
                let tau = sin / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a.set(p, q, 0.0);
                let rotate = |m: &mut Mat, i: usize, j: usize, k: usize, l: usize| {
                    let g = m.get(i, j);
                    let h = m.get(k, l);
                    m.set(i, j, g - sin * (h + g * tau));
                    m.set(k, l, h + sin * (g - h * tau));
                };
                for j in 0..p {
                    rotate(&mut a, j, p, j, q);
                }
                for j in (p + 1)..q {
                    rotate(&mut a, p, j, j, q);
                }
                for j in (q + 1)..n {
                    rotate(&mut a, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if !converged {
        // One last look: the matrix may have converged on the final sweep.
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off > target {
            return Err(Error::NoConvergence { what: "jacobi eigendecomposition", iterations: MAX_SWEEPS });
        }
    }

    // Sort ascending, carrying eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, new_col, v.get(row, old_col));
        }
    }
    Ok((values, vectors))
}

/// Nearest positive semidefinite matrix in Frobenius norm: clip negative
/// eigenvalues to zero and reassemble.
pub fn project_psd(s: &Mat) -> Result<Mat> {
    let n = s.rows();
    let (values, vectors) = sym_eigen(s)?;
    let mut out = Mat::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vectors.get(i, k);
            if vik == 0.0 {
                continue;
            }
            let li = lambda * vik;
            for j in i..n {
                out.add_to(i, j, li * vectors.get(j, k));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = out.get(i, j);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_stream(mut state: u64) -> impl FnMut() -> f64 {
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut next = rand_stream(seed);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = next();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_sorted() {
        let mut m = Mat::zeros(3, 3);
        m.set(0, 0, 3.0);
        m.set(1, 1, 1.0);
        m.set(2, 2, 2.0);
        let (values, _) = sym_eigen(&m).unwrap();
        assert_eq!(values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn off_diagonal_pair() {
        let mut m = Mat::zeros(2, 2);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        let (values, vectors) = sym_eigen(&m).unwrap();
        assert!((values[0] + 1.0).abs() < 1e-12);
        assert!((values[1] - 1.0).abs() < 1e-12);
        // Orthonormal columns.
        let dot = vectors.get(0, 0) * vectors.get(0, 1) + vectors.get(1, 0) * vectors.get(1, 1);
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn reconstruction_error_small() {
        let s = random_symmetric(20, 99);
        let (values, vectors) = sym_eigen(&s).unwrap();
        // || S U - U L ||_F <= 1e-9 (1 + ||S||_F)
        let n = 20;
        let mut resid = 0.0;
        for col in 0..n {
            let u: Vec<f64> = (0..n).map(|r| vectors.get(r, col)).collect();
            let su = s.matvec(&u);
            for r in 0..n {
                let e = su[r] - values[col] * u[r];
                resid += e * e;
            }
        }
        assert!(resid.sqrt() <= 1e-9 * (1.0 + s.frobenius_norm()));
        // Reconstruction U L U^T = S.
        let mut recon = Mat::zeros(n, n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    recon.add_to(i, j, values[k] * vectors.get(i, k) * vectors.get(j, k));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert!((recon.get(i, j) - s.get(i, j)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn projection_clips_negative_directions() {
        let mut m = Mat::zeros(2, 2);
        m.set(0, 0, 1.0);
        m.set(1, 1, -1.0);
        let p = project_psd(&m).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(1, 1).abs() < 1e-12);
        let id = Mat::identity(4);
        let p = project_psd(&id).unwrap();
        for i in 0..4 {
            assert!((p.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_satisfies_optimality() {
        let s = random_symmetric(12, 4242);
        let p = project_psd(&s).unwrap();
        let (values, _) = sym_eigen(&p).unwrap();
        assert!(values[0] >= -1e-10);
        // <S - P, P> = 0 for the Frobenius projection onto the PSD cone.
        let mut inner = 0.0;
        for i in 0..12 {
            for j in 0..12 {
                inner += (s.get(i, j) - p.get(i, j)) * p.get(i, j);
            }
        }
        assert!(inner.abs() <= 1e-8, "projection KKT inner product {inner}");
    }
}
