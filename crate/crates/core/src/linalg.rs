//! Dense square matrices and vector helpers.
//!
//! Everything here is row-major `f64`. Matrices are always square since the
//! quasi-Newton state never needs anything else.

use std::ops::{Index, IndexMut};

use crate::error::{QnError, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scaled(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// `a + c * b`
pub fn axpy(a: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + c * y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

pub(crate) fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(QnError::DimensionMismatch {
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

/// Dense `n x n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(QnError::DimensionMismatch {
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            check_len(n, r)?;
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    /// `c * u v^T`
    pub fn outer(u: &[f64], v: &[f64], c: f64) -> Self {
        let n = u.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            let ci = c * u[i];
            let row = &mut m.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r = ci * vj;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SquareMatrix {
        let n = self.n;
        let mut t = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// `self + c * other`
    pub fn add_scaled(&self, c: f64, other: &SquareMatrix) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    /// In-place `self += c * u v^T`.
    pub fn add_outer(&mut self, c: f64, u: &[f64], v: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let ci = c * u[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += ci * vj;
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrized(&self) -> SquareMatrix {
        let n = self.n;
        let mut m = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = 0.5 * (self[(i, j)] + self[(j, i)]);
                m[(i, j)] = a;
                m[(j, i)] = a;
            }
        }
        m
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Relative Frobenius distance `||a - b|| / max(||a||, ||b||, tiny)`.
pub fn rel_frobenius_diff(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    let diff = a.add_scaled(-1.0, b).frobenius();
    let scale = a.frobenius().max(b.frobenius()).max(f64::MIN_POSITIVE);
    diff / scale
}

/// Symmetric eigendecomposition `A = Q diag(w) Q^T` by cyclic Jacobi rotations.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `k` of this matrix is the eigenvector for `values[k]`.
    pub vectors: SquareMatrix,
}

impl SymmetricEigen {
    /// Sweeps until the off-diagonal Frobenius norm drops below
    /// `tol * ||A||_F`. The input is symmetrized first.
    pub fn new(a: &SquareMatrix, tol: f64) -> Self {
        let n = a.dim();
        let mut m = a.symmetrized();
        let mut q = SquareMatrix::identity(n);
        let scale = m.frobenius().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)] * m[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= tol * scale {
                break;
            }
            for p in 0..n {
                for r in (p + 1)..n {
                    let apr = m[(p, r)];
                    if apr.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let app = m[(p, p)];
                    let arr = m[(r, r)];
                    let theta = (arr - app) / (2.0 * apr);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkr = m[(k, r)];
                        m[(k, p)] = c * mkp - s * mkr;
                        m[(k, r)] = s * mkp + c * mkr;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mrk = m[(r, k)];
                        m[(p, k)] = c * mpk - s * mrk;
                        m[(r, k)] = s * mpk + c * mrk;
                    }
                    for k in 0..n {
                        let qkp = q[(k, p)];
                        let qkr = q[(k, r)];
                        q[(k, p)] = c * qkp - s * qkr;
                        q[(k, r)] = s * qkp + c * qkr;
                    }
                }
            }
        }
        SymmetricEigen {
            values: m.diag(),
            vectors: q,
        }
    }

    /// `Q diag(f(w)) Q^T`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SquareMatrix {
        let n = self.values.len();
        let fw: Vec<f64> = self.values.iter().map(|&w| f(w)).collect();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.vectors[(i, k)] * fw[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// Absolute eigenvalues sorted in decreasing order (the singular values
    /// of a symmetric matrix).
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.values.iter().map(|w| w.abs()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

/// Orthonormalizes `candidate` against the orthonormal columns in `basis`
/// (two passes of modified Gram-Schmidt). Returns `None` when nothing is left.
pub fn orthonormalize_against(candidate: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut v = candidate.to_vec();
    let start = norm(&v);
    for _ in 0..2 {
        for b in basis {
            let c = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
    }
    let nv = norm(&v);
    if !(nv > 1e-10 * start.max(f64::MIN_POSITIVE)) {
        return None;
    }
    Some(scaled(&v, 1.0 / nv))
}
