//! Scalar potentials `V` on the positive reals and the quantities they induce,
//! `nu(z) = -z V'(z)` and `beta(z) = z nu'(z) / nu(z)`.
//!
//! A potential `V` defines the matrix function `V(det P)` whose Bregman
//! divergence drives the Hessian update. `V = -log` recovers the classical
//! BFGS/DFP formulas.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{QnError, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user supplied potential. All three derivatives must be analytic; they
/// are never differentiated numerically.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub value: ScalarFn,
    pub d1: ScalarFn,
    pub d2: ScalarFn,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `V(z) = -log z`
    NegLog,
    /// `V(z) = (1 - z^gamma) / gamma`, with `gamma = 0` read as the `-log` limit.
    Power { gamma: f64 },
    /// `V(z) = a log(a z + 1) - b log z`, `0 <= a < b`.
    Bounded { a: f64, b: f64 },
    Custom(Arc<CustomPotential>),
}

#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    nu_bounds: Option<(f64, f64)>,
}

/// `(V(z), nu(z), beta(z))` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValues {
    pub value: f64,
    pub nu: f64,
    pub beta: f64,
}

impl Potential {
    pub fn neg_log() -> Self {
        Self {
            kind: PotentialKind::NegLog,
            nu_bounds: Some((1.0, 1.0)),
        }
    }

    /// Power potential without a dimension check. `gamma < 1` is required for
    /// strict convexity; whether `gamma < 1/n` holds is left to
    /// [`validate`](Self::validate) or [`power_for_dim`](Self::power_for_dim).
    pub fn power(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma >= 1.0 {
            return Err(QnError::InvalidPotential(format!(
                "power potential needs a finite gamma < 1, got {gamma}"
            )));
        }
        Ok(Self {
            kind: PotentialKind::Power { gamma },
            nu_bounds: if gamma == 0.0 { Some((1.0, 1.0)) } else { None },
        })
    }

    /// Power potential usable up to dimension `n_max` (`gamma < 1/n_max`).
    pub fn power_for_dim(gamma: f64, n_max: usize) -> Result<Self> {
        let limit = 1.0 / n_max as f64;
        if !(gamma < limit) {
            return Err(QnError::InvalidPotential(format!(
                "power potential needs gamma < 1/n = {limit}, got {gamma}"
            )));
        }
        Self::power(gamma)
    }

    pub fn bounded(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !(a < b) || !b.is_finite() {
            return Err(QnError::InvalidPotential(format!(
                "bounded potential needs 0 <= a < b, got a={a}, b={b}"
            )));
        }
        Ok(Self {
            kind: PotentialKind::Bounded { a, b },
            nu_bounds: Some((b - a, b)),
        })
    }

    pub fn custom(custom: CustomPotential, nu_bounds: Option<(f64, f64)>) -> Self {
        Self {
            kind: PotentialKind::Custom(Arc::new(custom)),
            nu_bounds,
        }
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Known `(L1, L2)` with `L1 <= nu <= L2`, when the potential has one.
    pub fn nu_bounds(&self) -> Option<(f64, f64)> {
        self.nu_bounds
    }

    /// True when `beta` vanishes identically (the `-log` potential).
    pub fn is_neg_log(&self) -> bool {
        match self.kind {
            PotentialKind::NegLog => true,
            PotentialKind::Power { gamma } => gamma == 0.0,
            PotentialKind::Bounded { a, b } => a == 0.0 && b == 1.0,
            PotentialKind::Custom(_) => false,
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => -z.ln(),
            PotentialKind::Power { gamma } => {
                if *gamma == 0.0 {
                    -z.ln()
                } else {
                    -(gamma * z.ln()).exp_m1() / gamma
                }
            }
            PotentialKind::Bounded { a, b } => a * (a * z).ln_1p() - b * z.ln(),
            PotentialKind::Custom(c) => (c.value)(z),
        }
    }

    /// `V'(z)`
    pub fn d1(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => -1.0 / z,
            PotentialKind::Power { gamma } => -z.powf(gamma - 1.0),
            PotentialKind::Bounded { a, b } => a * a / (a * z + 1.0) - b / z,
            PotentialKind::Custom(c) => (c.d1)(z),
        }
    }

    /// `V''(z)`
    pub fn d2(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 1.0 / (z * z),
            PotentialKind::Power { gamma } => (1.0 - gamma) * z.powf(gamma - 2.0),
            PotentialKind::Bounded { a, b } => {
                let q = a * z + 1.0;
                b / (z * z) - a * a * a / (q * q)
            }
            PotentialKind::Custom(c) => (c.d2)(z),
        }
    }

    pub fn nu(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 1.0,
            PotentialKind::Power { gamma } => z.powf(*gamma),
            PotentialKind::Bounded { a, b } => b - a + a / (a * z + 1.0),
            PotentialKind::Custom(c) => -z * (c.d1)(z),
        }
    }

    /// `nu'(z) = -V'(z) - z V''(z)`
    pub fn nu_prime(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 0.0,
            PotentialKind::Power { gamma } => gamma * z.powf(gamma - 1.0),
            PotentialKind::Bounded { a, .. } => {
                let q = a * z + 1.0;
                -a * a / (q * q)
            }
            PotentialKind::Custom(c) => -(c.d1)(z) - z * (c.d2)(z),
        }
    }

    pub fn beta(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 0.0,
            PotentialKind::Power { gamma } => *gamma,
            PotentialKind::Bounded { a, b } => {
                -a * a * z / ((a * z + 1.0) * (a * (b - a) * z + b))
            }
            PotentialKind::Custom(_) => z * self.nu_prime(z) / self.nu(z),
        }
    }

    /// `log nu(exp(ell))`, evaluated without forming `exp(ell)` where the
    /// closed form allows it.
    pub fn log_nu_at_log(&self, ell: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 0.0,
            PotentialKind::Power { gamma } => gamma * ell,
            PotentialKind::Bounded { a, b } => {
                if *a == 0.0 {
                    return b.ln();
                }
                // a / (a e^ell + 1) underflows gracefully for large ell
                let tail = if ell > 0.0 {
                    let w = (-ell).exp();
                    a * w / (a + w)
                } else {
                    a / (a * ell.exp() + 1.0)
                };
                (b - a + tail).ln()
            }
            PotentialKind::Custom(_) => self.nu(ell.exp()).ln(),
        }
    }

    /// `beta(exp(ell))` in the same log-domain spirit.
    pub fn beta_at_log(&self, ell: f64) -> f64 {
        match &self.kind {
            PotentialKind::NegLog => 0.0,
            PotentialKind::Power { gamma } => *gamma,
            PotentialKind::Bounded { a, b } => {
                if *a == 0.0 {
                    return 0.0;
                }
                if ell <= 0.0 {
                    self.beta(ell.exp())
                } else {
                    let w = (-ell).exp();
                    -a * a * w / ((a + w) * (a * (b - a) + b * w))
                }
            }
            PotentialKind::Custom(_) => self.beta(ell.exp()),
        }
    }

    pub fn evaluate(&self, z: f64) -> Result<PotentialValues> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(QnError::Domain(format!("potential evaluated at z = {z}")));
        }
        Ok(PotentialValues {
            value: self.value(z),
            nu: self.nu(z),
            beta: self.beta(z),
        })
    }

    /// Grid check of the potential conditions for dimension `n`.
    pub fn validate(&self, n: usize, grid: &[f64]) -> ValidationReport {
        let mut report = ValidationReport {
            n,
            grid_points: grid.len(),
            nu_violations: Vec::new(),
            beta_violations: Vec::new(),
            convexity_violations: Vec::new(),
            invalid_grid_points: Vec::new(),
            limit_condition_holds: true,
            max_beta: f64::NEG_INFINITY,
            nu_range: (f64::INFINITY, f64::NEG_INFINITY),
            nu_bounds: self.nu_bounds,
        };
        if grid.is_empty() {
            report.limit_condition_holds = false;
            return report;
        }
        let limit = 1.0 / n as f64;
        let mut sorted: Vec<f64> = Vec::with_capacity(grid.len());
        for &z in grid {
            if !(z > 0.0) || !z.is_finite() {
                report.invalid_grid_points.push(z);
                continue;
            }
            sorted.push(z);
            let nu = self.nu(z);
            let beta = self.beta(z);
            if !(nu > 0.0) {
                report.nu_violations.push(z);
            } else {
                report.nu_range.0 = report.nu_range.0.min(nu);
                report.nu_range.1 = report.nu_range.1.max(nu);
            }
            if !(beta < limit) {
                report.beta_violations.push((z, beta));
            }
            report.max_beta = report.max_beta.max(beta);
            if !(self.d1(z) < 0.0) || !(self.d2(z) > 0.0) {
                report.convexity_violations.push(z);
            }
        }
        sorted.sort_by(f64::total_cmp);
        // z / nu(z)^{n-1} must shrink toward zero as z -> 0: the log of it has
        // to keep decreasing over the smallest grid points.
        let head = &sorted[..sorted.len().min(10)];
        let zeta: Vec<f64> = head
            .iter()
            .map(|&z| z.ln() - (n as f64 - 1.0) * self.log_nu_at_log(z.ln()))
            .collect();
        report.limit_condition_holds = !zeta.is_empty()
            && zeta.iter().all(|x| x.is_finite())
            && zeta.windows(2).all(|w| w[0] < w[1]);
        report
    }
}

/// `count` log-spaced points between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// The default validation grid: 200 points over `[1e-8, 1e8]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-8, 1e8, 200)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: usize,
    pub grid_points: usize,
    pub nu_violations: Vec<f64>,
    pub beta_violations: Vec<(f64, f64)>,
    pub convexity_violations: Vec<f64>,
    pub invalid_grid_points: Vec<f64>,
    pub limit_condition_holds: bool,
    pub max_beta: f64,
    /// Smallest and largest `nu` seen on the grid.
    pub nu_range: (f64, f64),
    pub nu_bounds: Option<(f64, f64)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.grid_points > 0
            && self.nu_violations.is_empty()
            && self.beta_violations.is_empty()
            && self.convexity_violations.is_empty()
            && self.invalid_grid_points.is_empty()
            && self.limit_condition_holds
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.passed() { "pass" } else { "fail" })?;
        writeln!(f, "n = {}, grid points = {}", self.n, self.grid_points)?;
        writeln!(
            f,
            "nu range on grid = [{:e}, {:e}]",
            self.nu_range.0, self.nu_range.1
        )?;
        if let Some((l1, l2)) = self.nu_bounds {
            writeln!(f, "nu bounds = ({l1}, {l2})")?;
        }
        writeln!(f, "max beta = {} (limit 1/n = {})", self.max_beta, 1.0 / self.n as f64)?;
        if !self.nu_violations.is_empty() {
            writeln!(f, "nu > 0 violated at {} points", self.nu_violations.len())?;
        }
        if let Some((z, b)) = self.beta_violations.first() {
            writeln!(
                f,
                "beta < 1/n violated at {} points (first: z = {z:e}, beta = {b})",
                self.beta_violations.len()
            )?;
        }
        if !self.convexity_violations.is_empty() {
            writeln!(
                f,
                "strict convexity / decrease violated at {} points",
                self.convexity_violations.len()
            )?;
        }
        if !self.invalid_grid_points.is_empty() {
            writeln!(f, "{} grid points are not positive", self.invalid_grid_points.len())?;
        }
        if !self.limit_condition_holds {
            writeln!(f, "z / nu(z)^(n-1) does not decrease toward 0 as z -> 0")?;
        }
        Ok(())
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PotentialKind::NegLog => write!(f, "neglog"),
            PotentialKind::Power { gamma } => write!(f, "power:gamma={gamma}"),
            PotentialKind::Bounded { a, b } => write!(f, "bounded:a={a},b={b}"),
            PotentialKind::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, f64)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| QnError::Parse(format!("expected key=value, got {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| QnError::Parse(format!("bad number {v:?}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn param(params: &[(String, f64)], key: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| QnError::Parse(format!("missing parameter {key}")))
}

impl FromStr for Potential {
    type Err = QnError;

    /// Accepts `neglog`, `power:gamma=<g>` and `bounded:a=<a>,b=<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(body)?;
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
                Some((k, _)) => Err(QnError::Parse(format!("unknown parameter {k:?} for {name}"))),
                None => Ok(()),
            }
        };
        match name {
            "neglog" => {
                allow(&[])?;
                Ok(Potential::neg_log())
            }
            "power" => {
                allow(&["gamma"])?;
                Potential::power(param(&params, "gamma")?)
            }
            "bounded" => {
                allow(&["a", "b"])?;
                Potential::bounded(param(&params, "a")?, param(&params, "b")?)
            }
            other => Err(QnError::Parse(format!("unknown potential {other:?}"))),
        }
    }
}
