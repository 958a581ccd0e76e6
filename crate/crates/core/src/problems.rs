//! Benchmark objectives with analytic gradients.
//!
//! Both built-in problems use the tridiagonal matrix `A = tridiag(-1, 2, -1)`
//! applied as a stencil; it is never stored.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QnError, Result};
use crate::linalg::{check_len, SquareMatrix};

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> SquareMatrix + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// `f(x) = x'Ax/2 - e'x`
    P1,
    /// `P1 - (1/(n+1)^2) sum_i (2 x_i + cos x_i)`
    P2,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::P1 => "p1",
            ProblemKind::P2 => "p2",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p1" => Ok(ProblemKind::P1),
            "p2" => Ok(ProblemKind::P2),
            other => Err(QnError::Parse(format!("unknown problem {other:?}"))),
        }
    }
}

/// An objective with its gradient and, optionally, its Hessian.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub n: usize,
    f: ValueFn,
    grad: GradFn,
    hess: Option<HessFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("name", &self.name).field("n", &self.n).finish()
    }
}

/// `A x` for the tridiagonal stencil.
pub fn tridiag_apply(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] } else { 0.0 };
            2.0 * x[i] - left - right
        })
        .collect()
}

fn tridiag_dense(n: usize) -> SquareMatrix {
    let mut a = SquareMatrix::zeros(n);
    for i in 0..n {
        a[(i, i)] = 2.0;
        if i + 1 < n {
            a[(i, i + 1)] = -1.0;
            a[(i + 1, i)] = -1.0;
        }
    }
    a
}

fn quadratic_value(x: &[f64]) -> f64 {
    let ax = tridiag_apply(x);
    x.iter().zip(&ax).map(|(xi, ai)| 0.5 * xi * ai - xi).sum()
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), n, f: Arc::new(f), grad: Arc::new(grad), hess: None }
    }

    pub fn with_hessian(mut self, hess: impl Fn(&[f64]) -> SquareMatrix + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n, x)?;
        let f = (self.f)(x);
        if !f.is_finite() {
            return Err(QnError::Evaluation);
        }
        Ok(f)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x)?;
        let g = (self.grad)(x);
        if g.len() != self.n {
            return Err(QnError::DimensionMismatch { expected: self.n, actual: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(QnError::Evaluation);
        }
        Ok(g)
    }

    /// `(f(x), grad f(x))`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Result<SquareMatrix>> {
        let h = self.hess.as_ref()?;
        Some(check_len(self.n, x).map(|_| h(x)))
    }
}

pub fn make_problem(kind: ProblemKind, n: usize) -> Result<Problem> {
    if n < 2 {
        return Err(QnError::InvalidArgument(format!("problem dimension must be >= 2, got {n}")));
    }
    let c = 1.0 / ((n as f64 + 1.0) * (n as f64 + 1.0));
    Ok(match kind {
        ProblemKind::P1 => Problem::new(
            "p1",
            n,
            quadratic_value,
            |x: &[f64]| tridiag_apply(x).into_iter().map(|v| v - 1.0).collect(),
        )
        .with_hessian(move |_| tridiag_dense(n)),
        ProblemKind::P2 => Problem::new(
            "p2",
            n,
            move |x: &[f64]| {
                quadratic_value(x) - c * x.iter().map(|xi| 2.0 * xi + xi.cos()).sum::<f64>()
            },
            move |x: &[f64]| {
                tridiag_apply(x)
                    .into_iter()
                    .zip(x)
                    .map(|(v, xi)| v - 1.0 - c * (2.0 - xi.sin()))
                    .collect()
            },
        )
        .with_hessian(move |x: &[f64]| {
            let mut a = tridiag_dense(n);
            for (i, xi) in x.iter().enumerate() {
                a[(i, i)] += c * xi.cos();
            }
            a
        }),
    })
}
