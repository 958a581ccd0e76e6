//! The quasi-Newton driver: `x_{k+1} = x_k - alpha_k B_k^{-1} grad f(x_k)`
//! with V-Bregman updates of `B_k` (or of `H_k = B_k^{-1}`).

use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::error::{QnError, Result};
use crate::linalg::{axpy, dot, norm, scaled, sub};
use crate::linesearch::{near_exact_search, wolfe_search, LineSearchMode, LineSearchParams};
use crate::problems::Problem;
use crate::rng::{stream_rng, uniform};
use crate::spd::SpdCholesky;
use crate::update::{check_curvature, family_update, primal_update, SecantPair, UpdateFamily};

#[derive(Debug, Clone, Default)]
pub enum InitialMatrix {
    #[default]
    Identity,
    /// `B_0`, always given as the Hessian approximation (not its inverse).
    Given(SpdCholesky),
}

/// Where the iterate goes when the step is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseAdvance {
    /// `x_{k+1} = x_k + (1 + eps) s_k`
    #[default]
    Perturbed,
    /// `x_{k+1} = x_k + s_k`; only the secant pair sees the perturbation.
    Nominal,
}

impl FromStr for NoiseAdvance {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "perturbed" => Ok(NoiseAdvance::Perturbed),
            "nominal" => Ok(NoiseAdvance::Nominal),
            other => Err(QnError::Parse(format!("unknown noise-advance mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for NoiseAdvance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseAdvance::Perturbed => "perturbed",
            NoiseAdvance::Nominal => "nominal",
        })
    }
}

/// Step perturbation `s~ = (1 + eps) s`, `eps ~ U[-h, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NoiseConfig {
    pub h: f64,
    pub advance: NoiseAdvance,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub family: UpdateFamily,
    pub line_search: LineSearchParams,
    pub b0: InitialMatrix,
    /// `None` means `n * 1e-5`.
    pub grad_tol: Option<f64>,
    pub max_iter: usize,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Keep one record per iteration in the trace.
    pub keep_records: bool,
}

impl SolverConfig {
    pub fn new(family: UpdateFamily) -> Self {
        Self {
            family,
            line_search: LineSearchParams::default(),
            b0: InitialMatrix::Identity,
            grad_tol: None,
            max_iter: 50_000,
            noise: NoiseConfig::default(),
            seed: 0,
            keep_records: true,
        }
    }

    pub fn grad_tol_for(&self, n: usize) -> f64 {
        self.grad_tol.unwrap_or(n as f64 * 1e-5)
    }

    pub fn validate(&self) -> Result<()> {
        self.line_search.validate()?;
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) {
                return Err(QnError::InvalidArgument(format!("grad_tol must be positive, got {t}")));
            }
        }
        if !(self.noise.h >= 0.0) || !self.noise.h.is_finite() {
            return Err(QnError::InvalidArgument(format!("noise level must be >= 0, got {}", self.noise.h)));
        }
        Ok(())
    }

    /// JSON echo of the configuration, used as the trace header.
    pub fn to_json(&self, n: usize) -> serde_json::Value {
        json!({
            "family": self.family.to_string(),
            "potential": self.family.potential().map(|p| p.to_string()),
            "line_search": self.line_search,
            "b0": match self.b0 { InitialMatrix::Identity => "identity", InitialMatrix::Given(_) => "given" },
            "grad_tol": self.grad_tol_for(n),
            "max_iter": self.max_iter,
            "noise": self.noise,
            "seed": self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    /// Drawn step perturbation (0 without noise).
    pub eps: f64,
    pub theta: Option<f64>,
    /// `log det B_{k+1}` after the update (unchanged on a skip).
    pub logdet_b: f64,
    pub curvature_skip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    MaxIter,
    LineSearchFailure,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "converged",
            Outcome::MaxIter => "max-iter",
            Outcome::LineSearchFailure => "line-search-failure",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    /// Number of steps taken.
    pub iterations: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub curvature_skips: usize,
    pub x: Vec<f64>,
    pub warnings: Vec<String>,
}

/// The matrix the loop carries. DFP-type families keep `H` so that the
/// update is a primal update on `H` and the direction a product.
enum State {
    B(SpdCholesky),
    H(SpdCholesky),
}

impl State {
    fn direction(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            State::B(b) => scaled(&b.solve(g)?, -1.0),
            State::H(h) => scaled(&h.mul_vec(g), -1.0),
        })
    }

    fn logdet_b(&self) -> f64 {
        match self {
            State::B(b) => b.logdet(),
            State::H(h) => -h.logdet(),
        }
    }
}

fn initial_state(family: &UpdateFamily, b0: &InitialMatrix, n: usize) -> Result<State> {
    let b = match b0 {
        InitialMatrix::Identity => SpdCholesky::identity(n),
        InitialMatrix::Given(b) => {
            if b.dim() != n {
                return Err(QnError::DimensionMismatch { expected: n, actual: b.dim() });
            }
            b.clone()
        }
    };
    Ok(match family {
        UpdateFamily::VDfpB(_) | UpdateFamily::VDfpH(_) => match b0 {
            InitialMatrix::Identity => State::H(b),
            InitialMatrix::Given(_) => State::H(b.invert()?),
        },
        _ => State::B(b),
    })
}

fn apply_update(family: &UpdateFamily, state: &State, pair: &SecantPair) -> Result<(State, Option<f64>)> {
    match (family, state) {
        (UpdateFamily::VDfpB(p) | UpdateFamily::VDfpH(p), State::H(h)) => {
            let up = primal_update(h, &pair.y, &pair.s, p)?;
            Ok((State::H(up.factor), Some(up.theta)))
        }
        (UpdateFamily::VBfgsB(p) | UpdateFamily::VBfgsH(p), State::B(b)) => {
            let up = primal_update(b, &pair.s, &pair.y, p)?;
            Ok((State::B(up.factor), Some(up.theta)))
        }
        (UpdateFamily::Broyden { .. }, State::B(b)) => {
            let up = family_update(family, b, pair)?;
            Ok((State::B(up.factor), up.theta))
        }
        _ => unreachable!("state kind is chosen from the family"),
    }
}

/// Runs the quasi-Newton loop from `x0`.
pub fn minimize(problem: &Problem, x0: &[f64], config: &SolverConfig) -> Result<SolverTrace> {
    let n = problem.n;
    if x0.len() != n {
        return Err(QnError::DimensionMismatch { expected: n, actual: x0.len() });
    }
    config.validate()?;
    config.family.validate_for_dim(n)?;
    let mut warnings = Vec::new();
    if config.family.potentials().iter().any(|p| p.nu_bounds().is_none()) {
        warnings.push("potential has no known bounds L1 <= nu <= L2; the global convergence guarantee does not apply".into());
    }

    let tol = config.grad_tol_for(n);
    let ls = &config.line_search;
    let mut rng = stream_rng(config.seed, &[]);
    let mut state = initial_state(&config.family, &config.b0, n)?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = problem.eval(&x)?;
    let mut records = Vec::new();
    let mut skips = 0;
    let mut failures = 0;

    let mut k = 0;
    let outcome = loop {
        let gn = norm(&g);
        if gn <= tol {
            break Outcome::Converged;
        }
        if k >= config.max_iter {
            break Outcome::MaxIter;
        }
        let d = state.direction(&g)?;
        let dphi0 = dot(&g, &d);
        let search = match ls.mode {
            LineSearchMode::Wolfe => wolfe_search(
                |a| {
                    let (fa, ga) = problem.eval(&axpy(&x, a, &d))?;
                    Ok((fa, dot(&ga, &d)))
                },
                f,
                dphi0,
                ls,
            )?,
            LineSearchMode::NearExact => {
                near_exact_search(|a| problem.value(&axpy(&x, a, &d)), f, ls)?
            }
        };
        if search.max_evals_exceeded && !(search.phi < f) {
            failures += 1;
            if failures >= 3 {
                break Outcome::LineSearchFailure;
            }
            continue;
        }
        failures = 0;

        let s = scaled(&d, search.alpha);
        let eps = if config.noise.h > 0.0 { uniform(&mut rng, -config.noise.h, config.noise.h) } else { 0.0 };
        let s_tilde = scaled(&s, 1.0 + eps);
        let x_tilde = axpy(&x, 1.0, &s_tilde);
        let (x_new, f_new, g_new, y) = match config.noise.advance {
            NoiseAdvance::Perturbed => {
                let (fn_, gn_) = problem.eval(&x_tilde)?;
                let y = sub(&gn_, &g);
                (x_tilde, fn_, gn_, y)
            }
            NoiseAdvance::Nominal => {
                let x_nom = axpy(&x, 1.0, &s);
                let (fn_, gn_) = problem.eval(&x_nom)?;
                let y = if eps == 0.0 { sub(&gn_, &g) } else { sub(&problem.gradient(&x_tilde)?, &g) };
                (x_nom, fn_, gn_, y)
            }
        };

        let (theta, skip) = match check_curvature(&s_tilde, &y) {
            Ok(_) => {
                let pair = SecantPair { s: s_tilde, y };
                let (next, theta) = apply_update(&config.family, &state, &pair)?;
                state = next;
                (theta, false)
            }
            Err(_) => {
                skips += 1;
                (None, true)
            }
        };
        x = x_new;
        f = f_new;
        g = g_new;
        k += 1;
        if config.keep_records {
            records.push(IterationRecord {
                k,
                f,
                grad_norm: norm(&g),
                alpha: search.alpha,
                eps,
                theta,
                logdet_b: state.logdet_b(),
                curvature_skip: skip,
            });
        }
    };
    Ok(SolverTrace {
        records,
        outcome,
        iterations: k,
        f,
        grad_norm: norm(&g),
        curvature_skips: skips,
        x,
        warnings,
    })
}
