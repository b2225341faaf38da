//! Dense matrices, sparse symmetric matrices and the few factorizations the
//! rest of the crate needs. Everything here is desk-scale: plain `Vec<f64>`
//! storage, no blocking, no SIMD.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    context: "matrix rows",
                    expected: ncols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: nrows, cols: ncols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            y[r] = dot(self.row(r), x);
        }
        y
    }

    /// y = A^T x.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr != 0.0 {
                for c in 0..self.cols {
                    y[c] += self.get(r, c) * xr;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// C = A B.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a != 0.0 {
                    for c in 0..other.cols {
                        out.add_to(r, c, a * other.get(k, c));
                    }
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Force symmetry by averaging with the transpose in place (square only).
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let avg = 0.5 * (self.get(r, c) + self.get(c, r));
                self.set(r, c, avg);
                self.set(c, r, avg);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// Sparse symmetric matrix stored as upper-triangle coordinate triplets
/// (row <= col). Off-diagonal entries count twice in quadratic forms and
/// Frobenius inner products.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        SparseSym { entries: Vec::new() }
    }

    /// Build from arbitrary (i, j, v) triplets: mirrored into the upper
    /// triangle, duplicates merged, zeros dropped.
    pub fn from_triplets(triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for (i, j, v) in triplets {
            let key = if i <= j { (i, j) } else { (j, i) };
            *map.entry(key).or_insert(0.0) += v;
        }
        SparseSym {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).map(|((i, j), v)| (i, j, v)).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|&(_, j, _)| j).max()
    }

    /// x^T A x with the implicit symmetric completion.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            if i == j {
                acc += v * x[i] * x[i];
            } else {
                acc += 2.0 * v * x[i] * x[j];
            }
        }
        acc
    }

    /// <A, X>_F against a dense symmetric matrix.
    pub fn frob_inner(&self, x: &Mat) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            if i == j {
                acc += v * x.get(i, i);
            } else {
                acc += 2.0 * v * x.get(i, j);
            }
        }
        acc
    }

    /// <A, B>_F for two sparse symmetric matrices.
    pub fn frob_inner_sparse(&self, other: &SparseSym) -> f64 {
        // Both entry lists are sorted by (i, j); merge.
        let mut acc = 0.0;
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        while let (Some(&&(ai, aj, av)), Some(&&(bi, bj, bv))) = (a.peek(), b.peek()) {
            match (ai, aj).cmp(&(bi, bj)) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += if ai == aj { av * bv } else { 2.0 * av * bv };
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    /// X += s * A (dense destination, both halves written).
    pub fn add_scaled_into(&self, dest: &mut Mat, s: f64) {
        for &(i, j, v) in &self.entries {
            dest.add_to(i, j, s * v);
            if i != j {
                dest.add_to(j, i, s * v);
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        self.add_scaled_into(&mut m, 1.0);
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> SparseSym {
        SparseSym { entries: self.entries.iter().map(|&(i, j, v)| (i, j, s * v)).collect() }
    }

    /// Remap indices through `map`; entries mapped to `None` must not occur.
    pub fn remap(&self, map: &[Option<usize>]) -> SparseSym {
        SparseSym::from_triplets(self.entries.iter().map(|&(i, j, v)| {
            (map[i].expect("remap hit dropped index"), map[j].expect("remap hit dropped index"), v)
        }))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// l_p norm for a general real exponent p >= 1.
pub fn norm_p(a: &[f64], p: f64) -> f64 {
    a.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense Cholesky factorization of a symmetric positive definite matrix.
/// Stores the lower factor; panics are avoided by returning an error when a
/// pivot drops below zero.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &Mat) -> Result<Self> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::InvalidProblem("matrix not positive definite"));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lower[i * n + k] * y[k];
            }
            y[i] /= self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.lower[k * n + i] * y[k];
            }
            y[i] /= self.lower[i * n + i];
        }
        y
    }
}

/// Spectral norm via power iteration on A^T A. The start vector comes from a
/// fixed generic stream so it cannot sit orthogonal to structured rows.
pub fn spectral_norm_power(a: &Mat, iters: usize, tol: f64) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    let mut state = 0x243f_6a88_85a3_08d3u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    let scale = norm2(&v);
    for x in &mut v {
        *x /= scale;
    }
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a.matvec_t(&a.matvec(&v));
        let norm = norm2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w.iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= tol * next.max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}
