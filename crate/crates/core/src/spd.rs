//! Symmetric positive definite matrices held as lower Cholesky factors.
//!
//! The quasi-Newton state `B_k` (or `H_k`) lives here. Rank-one updates and
//! downdates keep the factor current in `O(n^2)`, and determinants are only
//! ever handled through `logdet` since the benchmark matrices have
//! determinants far outside the range of a double.

use std::io::{Read, Write};

use crate::error::{QnError, Result};
use crate::linalg::{check_len, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `A = L L^T` with `L` lower triangular and a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdCholesky {
    n: usize,
    /// Row-major; entries above the diagonal are always zero.
    l: Vec<f64>,
}

impl SpdCholesky {
    pub fn identity(n: usize) -> Self {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            l[i * n + i] = 1.0;
        }
        Self { n, l }
    }

    pub fn from_diag(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut l = vec![0.0; n * n];
        for (i, &di) in d.iter().enumerate() {
            if !(di > 0.0) || !di.is_finite() {
                return Err(QnError::NotPositiveDefinite { index: i, pivot: di });
            }
            l[i * n + i] = di.sqrt();
        }
        Ok(Self { n, l })
    }

    /// Factorizes a dense symmetric matrix.
    pub fn cholesky(a: &SquareMatrix) -> Result<Self> {
        let n = a.dim();
        let fro = a.frobenius();
        if !fro.is_finite() {
            return Err(QnError::Domain("matrix has non-finite entries".into()));
        }
        if a.max_abs_asymmetry() > 1e-12 * fro {
            return Err(QnError::Domain("matrix is not symmetric".into()));
        }
        let max_diag = a.diag().into_iter().fold(0.0f64, f64::max);
        let threshold = n as f64 * f64::EPSILON * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > threshold) {
                return Err(QnError::NotPositiveDefinite { index: j, pivot: d });
            }
            let ljj = d.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower factor, row-major.
    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    pub fn factor_matrix(&self) -> SquareMatrix {
        SquareMatrix::from_row_major(self.n, self.l.clone()).expect("square factor")
    }

    /// Reconstructs `L L^T`, symmetric by construction.
    pub fn to_dense(&self) -> SquareMatrix {
        let n = self.n;
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let ri = &self.l[i * n..i * n + j + 1];
                let rj = &self.l[j * n..j * n + j + 1];
                let v: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    pub fn det(&self) -> Result<f64> {
        let ld = self.logdet();
        if ld > f64::MAX.ln() {
            return Err(QnError::DetOverflow { logdet: ld });
        }
        Ok(ld.exp())
    }

    /// `A x` through the factor.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        // t = L^T x
        let mut t = vec![0.0; n];
        for i in 0..n {
            let xi = x[i];
            let row = &self.l[i * n..i * n + i + 1];
            for (tj, lij) in t.iter_mut().zip(row) {
                *tj += lij * xi;
            }
        }
        // L t
        (0..n)
            .map(|i| {
                self.l[i * n..i * n + i + 1]
                    .iter()
                    .zip(&t)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `x^T A x = ||L^T x||^2`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut t = vec![0.0; n];
        for i in 0..n {
            let xi = x[i];
            let row = &self.l[i * n..i * n + i + 1];
            for (tj, lij) in t.iter_mut().zip(row) {
                *tj += lij * xi;
            }
        }
        t.iter().map(|v| v * v).sum()
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b)?;
        Ok(self.backward(&self.forward(b)))
    }

    /// Factor of `c * A` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<SpdCholesky> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(QnError::Domain(format!("scale factor must be positive, got {c}")));
        }
        let r = c.sqrt();
        Ok(SpdCholesky {
            n: self.n,
            l: self.l.iter().map(|x| x * r).collect(),
        })
    }

    /// Factor of `A^{-1}`.
    pub fn invert(&self) -> Result<SpdCholesky> {
        SpdCholesky::cholesky(&self.inverse_dense())
    }

    /// Dense `A^{-1} = L^{-T} L^{-1}`.
    pub fn inverse_dense(&self) -> SquareMatrix {
        let n = self.n;
        // L^{-1}, one column per forward solve.
        let mut linv = SquareMatrix::zeros(n);
        for j in 0..n {
            let e = crate::linalg::unit(n, j);
            let col = self.forward(&e);
            for i in 0..n {
                linv[(i, j)] = col[i];
            }
        }
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                // (L^{-T} L^{-1})_{ij} = sum_k linv[k,i] linv[k,j], k >= max(i,j)
                let mut acc = 0.0;
                for k in i.max(j)..n {
                    acc += linv[(k, i)] * linv[(k, j)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// Factor of `A + sign * w w^T` via sequential (hyperbolic for the minus
    /// sign) rotations. A downdate that would leave a non-positive pivot
    /// reports `DowndateBreakdown`.
    pub fn rank_one_modify(&self, w: &[f64], sign: Sign) -> Result<SpdCholesky> {
        let mut out = self.clone();
        out.rank_one_modify_in_place(w, sign)?;
        Ok(out)
    }

    /// In-place form of [`rank_one_modify`](Self::rank_one_modify). On error
    /// the factor is left untouched.
    pub fn rank_one_modify_in_place(&mut self, w: &[f64], sign: Sign) -> Result<()> {
        check_len(self.n, w)?;
        let n = self.n;
        let sg = sign.value();
        let mut work = self.l.clone();
        let mut v = w.to_vec();
        for j in 0..n {
            let ljj = work[j * n + j];
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let arg = ljj * ljj + sg * vj * vj;
            if !(arg > 4.0 * f64::EPSILON * ljj * ljj) || !arg.is_finite() {
                return Err(QnError::DowndateBreakdown { index: j });
            }
            let r = arg.sqrt();
            let c = r / ljj;
            let s = vj / ljj;
            work[j * n + j] = r;
            for i in (j + 1)..n {
                let lij = (work[i * n + j] + sg * s * v[i]) / c;
                work[i * n + j] = lij;
                v[i] = c * v[i] - s * lij;
            }
        }
        self.l = work;
        Ok(())
    }

    /// Row-major CSV with a leading `n` header line. Debugging aid only.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(out);
        wtr.write_record([self.n.to_string()])?;
        let dense = self.to_dense();
        for i in 0..self.n {
            wtr.write_record(dense.row(i).iter().map(|x| format!("{x:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<SpdCholesky> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| QnError::Parse("empty matrix file".into()))??;
        let n: usize = header
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| QnError::Parse("bad dimension header".into()))?;
        let mut data = Vec::with_capacity(n * n);
        for rec in records {
            let rec = rec?;
            for field in rec.iter() {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| QnError::Parse(e.to_string()))?,
                );
            }
        }
        SpdCholesky::cholesky(&SquareMatrix::from_row_major(n, data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_frobenius_diff;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn factorizes_two_by_two() {
        let c = SpdCholesky::cholesky(&m(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        assert_eq!(c.factor(), &[2.0, 0.0, 1.0, 2.0]);
        assert!((c.det().unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn identity_factor_is_identity() {
        let c = SpdCholesky::cholesky(&SquareMatrix::identity(4)).unwrap();
        assert_eq!(c, SpdCholesky::identity(4));
        assert_eq!(SpdCholesky::identity(5).logdet(), 0.0);
    }

    #[test]
    fn rejects_indefinite() {
        let e = SpdCholesky::cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err();
        assert!(matches!(e, QnError::NotPositiveDefinite { index: 1, .. }));
    }

    #[test]
    fn rank_one_update_and_downdate() {
        let i2 = SpdCholesky::identity(2);
        let up = i2.rank_one_modify(&[1.0, 0.0], Sign::Plus).unwrap();
        assert!((up.factor()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(up.factor()[3], 1.0);
        let down = up.rank_one_modify(&[1.0, 0.0], Sign::Minus).unwrap();
        assert!(rel_frobenius_diff(&down.to_dense(), &SquareMatrix::identity(2)) < 1e-15);
        let err = i2.rank_one_modify(&[2.0, 0.0], Sign::Minus).unwrap_err();
        assert_eq!(err, QnError::DowndateBreakdown { index: 0 });
    }

    #[test]
    fn solves() {
        let a = SpdCholesky::cholesky(&m(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        let x = a.solve(&[6.0, 7.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let d = SpdCholesky::from_diag(&[2.0, 1.0]).unwrap();
        let x = d.solve(&[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1] == 0.0);
        assert!(matches!(
            d.solve(&[1.0]),
            Err(QnError::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn determinants() {
        let d = SpdCholesky::from_diag(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((d.det().unwrap() - 24.0).abs() < 1e-12);
        let big = SpdCholesky::from_diag(&vec![1e10; 40]).unwrap();
        assert!(matches!(big.det(), Err(QnError::DetOverflow { .. })));
        assert!((big.logdet() - 400.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn inverts() {
        let d = SpdCholesky::from_diag(&[2.0, 4.0]).unwrap();
        let inv = d.invert().unwrap().to_dense();
        assert!(rel_frobenius_diff(&inv, &SquareMatrix::from_diag(&[0.5, 0.25])) < 1e-15);
        let a = SpdCholesky::cholesky(&m(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        let expected = m(&[&[5.0, -2.0], &[-2.0, 4.0]]).scale(1.0 / 16.0);
        assert!(rel_frobenius_diff(&a.invert().unwrap().to_dense(), &expected) < 1e-15);
    }

    #[test]
    fn mul_vec_matches_dense() {
        let a = SpdCholesky::cholesky(&m(&[&[4.0, 2.0, 0.0], &[2.0, 5.0, 1.0], &[0.0, 1.0, 3.0]]))
            .unwrap();
        let x = [1.0, -2.0, 0.5];
        let dense = a.to_dense().mul_vec(&x);
        for (p, q) in a.mul_vec(&x).iter().zip(&dense) {
            assert!((p - q).abs() < 1e-14);
        }
        assert!((a.quad_form(&x) - crate::linalg::dot(&x, &dense)).abs() < 1e-13);
    }

    #[test]
    fn csv_round_trip() {
        let a = SpdCholesky::cholesky(&m(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2\n"));
        let b = SpdCholesky::read_csv(&buf[..]).unwrap();
        assert!(rel_frobenius_diff(&a.to_dense(), &b.to_dense()) < 1e-15);
    }
}
