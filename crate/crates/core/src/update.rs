//! Hessian update formulas: classical BFGS/DFP, the determinant (scale)
//! equation, the implicit V-Bregman update and the family dispatchers.

use std::fmt;

use crate::error::{QnError, Result};
use crate::linalg::{dot, norm, scaled, SquareMatrix};
use crate::potential::Potential;
use crate::spd::{Sign, SpdCholesky};

/// Relative margin below which `s'y` counts as a curvature violation.
pub const CURVATURE_EPS: f64 = 1e-12;

const MAX_SCALE_ITERS: usize = 200;
/// `exp` stays finite on `[-LOG_CLIP, LOG_CLIP]` (1e-300 .. 1e300).
const LOG_CLIP: f64 = 690.8;

/// Step / gradient-difference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantPair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl SecantPair {
    /// Builds the pair, rejecting it when the curvature condition fails.
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if s.len() != y.len() {
            return Err(QnError::DimensionMismatch { expected: s.len(), actual: y.len() });
        }
        check_curvature(&s, &y)?;
        Ok(Self { s, y })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn sy(&self) -> f64 {
        dot(&self.s, &self.y)
    }

    /// The same pair seen from the inverse side (`H y = s`).
    pub fn swapped(&self) -> SecantPair {
        SecantPair { s: self.y.clone(), y: self.s.clone() }
    }
}

/// Returns `u'v`, or `CurvatureViolation` if it is not safely positive.
pub fn check_curvature(u: &[f64], v: &[f64]) -> Result<f64> {
    let uv = dot(u, v);
    if !(uv > CURVATURE_EPS * norm(u) * norm(v)) || !uv.is_finite() {
        return Err(QnError::CurvatureViolation { sy: uv });
    }
    Ok(uv)
}

#[derive(Debug, Clone)]
pub enum UpdateFamily {
    VBfgsB(Potential),
    VDfpB(Potential),
    VBfgsH(Potential),
    VDfpH(Potential),
    Broyden { theta: f64, v1: Potential, v2: Potential },
}

impl UpdateFamily {
    /// Builds a family from its CLI name. The broyden variant carries its own
    /// potentials (`broyden:theta=<t>,v1=<pot>,v2=<pot>`) and ignores
    /// `potential`.
    pub fn from_name(name: &str, potential: Potential) -> Result<Self> {
        let name = name.trim();
        Ok(match name {
            "vbfgs-b" => UpdateFamily::VBfgsB(potential),
            "vdfp-b" => UpdateFamily::VDfpB(potential),
            "vbfgs-h" => UpdateFamily::VBfgsH(potential),
            "vdfp-h" => UpdateFamily::VDfpH(potential),
            _ => {
                let body = name
                    .strip_prefix("broyden:")
                    .ok_or_else(|| QnError::Parse(format!("unknown update family {name:?}")))?;
                parse_broyden(body)?
            }
        })
    }

    pub fn broyden(theta: f64, v1: Potential, v2: Potential) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(QnError::InvalidArgument(format!(
                "broyden theta must lie in [0, 1], got {theta}"
            )));
        }
        Ok(UpdateFamily::Broyden { theta, v1, v2 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateFamily::VBfgsB(_) => "vbfgs-b",
            UpdateFamily::VDfpB(_) => "vdfp-b",
            UpdateFamily::VBfgsH(_) => "vbfgs-h",
            UpdateFamily::VDfpH(_) => "vdfp-h",
            UpdateFamily::Broyden { .. } => "broyden",
        }
    }

    /// The single potential of a non-Broyden family.
    pub fn potential(&self) -> Option<&Potential> {
        match self {
            UpdateFamily::VBfgsB(p)
            | UpdateFamily::VDfpB(p)
            | UpdateFamily::VBfgsH(p)
            | UpdateFamily::VDfpH(p) => Some(p),
            UpdateFamily::Broyden { .. } => None,
        }
    }

    /// True when the family's state is the inverse Hessian approximation.
    pub fn is_inverse(&self) -> bool {
        matches!(self, UpdateFamily::VBfgsH(_) | UpdateFamily::VDfpH(_))
    }

    /// The potentials this family uses, for validation.
    pub fn potentials(&self) -> Vec<&Potential> {
        match self {
            UpdateFamily::Broyden { v1, v2, .. } => vec![v1, v2],
            _ => vec![self.potential().unwrap()],
        }
    }

    /// Checks every potential against dimension `n` on the default grid.
    pub fn validate_for_dim(&self, n: usize) -> Result<()> {
        let grid = crate::potential::default_grid();
        for p in self.potentials() {
            let report = p.validate(n, &grid);
            if !report.passed() {
                return Err(QnError::InvalidPotential(format!(
                    "{p} is not a potential for n = {n}: {}",
                    report.to_string().lines().skip(1).collect::<Vec<_>>().join("; ")
                )));
            }
        }
        Ok(())
    }
}

fn parse_broyden(body: &str) -> Result<UpdateFamily> {
    let bad = || QnError::Parse(format!("expected theta=<t>,v1=<pot>,v2=<pot>, got {body:?}"));
    let rest = body.strip_prefix("theta=").ok_or_else(bad)?;
    let (theta, rest) = rest.split_once(",v1=").ok_or_else(bad)?;
    let (v1, v2) = rest.split_once(",v2=").ok_or_else(bad)?;
    let theta: f64 = theta.trim().parse().map_err(|_| bad())?;
    UpdateFamily::broyden(theta, v1.parse()?, v2.parse()?)
}

impl fmt::Display for UpdateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateFamily::Broyden { theta, v1, v2 } => {
                write!(f, "broyden:theta={theta},v1={v1},v2={v2}")
            }
            _ => f.write_str(self.name()),
        }
    }
}

/// `B - B s s' B / (s'Bs) + y y' / (s'y)` as a factor.
pub fn bfgs_core(b: &SpdCholesky, s: &[f64], y: &[f64]) -> Result<SpdCholesky> {
    crate::linalg::check_len(b.dim(), s)?;
    crate::linalg::check_len(b.dim(), y)?;
    let sy = check_curvature(s, y)?;
    let bs = b.mul_vec(s);
    let sbs = dot(s, &bs);
    let mut out = b.clone();
    // the update first keeps the intermediate comfortably positive definite
    out.rank_one_modify_in_place(&scaled(y, 1.0 / sy.sqrt()), Sign::Plus)?;
    match out.rank_one_modify_in_place(&scaled(&bs, 1.0 / sbs.sqrt()), Sign::Minus) {
        Ok(()) => Ok(out),
        Err(QnError::DowndateBreakdown { .. }) => {
            let mut dense = b.to_dense();
            dense.add_outer(-1.0 / sbs, &bs, &bs);
            dense.add_outer(1.0 / sy, y, y);
            SpdCholesky::cholesky(&dense.symmetrized())
        }
        Err(e) => Err(e),
    }
}

/// Dense DFP matrix `(I - y s'/s'y) B (I - s y'/s'y) + y y'/s'y`.
pub fn dfp_dense(b: &SpdCholesky, s: &[f64], y: &[f64]) -> Result<SquareMatrix> {
    crate::linalg::check_len(b.dim(), s)?;
    crate::linalg::check_len(b.dim(), y)?;
    let sy = check_curvature(s, y)?;
    let bs = b.mul_vec(s);
    let sbs = dot(s, &bs);
    let mut out = b.to_dense();
    out.add_outer(-1.0 / sy, y, &bs);
    out.add_outer(-1.0 / sy, &bs, y);
    out.add_outer(sbs / (sy * sy) + 1.0 / sy, y, y);
    Ok(out.symmetrized())
}

pub fn dfp_core(b: &SpdCholesky, s: &[f64], y: &[f64]) -> Result<SpdCholesky> {
    SpdCholesky::cholesky(&dfp_dense(b, s, y)?)
}

/// Root of the scale equation, in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRoot {
    /// `log z*`
    pub log_z: f64,
    /// `zeta(log z*) - log C`
    pub residual: f64,
    pub iterations: usize,
}

impl ScaleRoot {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }
}

/// `zeta(t) = t - (n-1) log nu(e^t)`.
pub fn zeta(t: f64, potential: &Potential, n: usize) -> f64 {
    t - (n as f64 - 1.0) * potential.log_nu_at_log(t)
}

/// Solves `z = C nu(z)^{n-1}` for `z > 0`, working in `t = log z`.
///
/// `zeta` is increasing with slope above `1/n`, so a residual `r` at `t0`
/// puts the root within `n |r|` of `t0`; that bracket is verified (and
/// widened if a custom potential misbehaves) before a Newton iteration
/// safeguarded by bisection.
pub fn solve_scale_equation(log_c: f64, potential: &Potential, n: usize) -> Result<ScaleRoot> {
    if !log_c.is_finite() {
        return Err(QnError::Domain(format!("scale equation with log C = {log_c}")));
    }
    if n == 0 {
        return Err(QnError::InvalidArgument("dimension must be positive".into()));
    }
    let nf = n as f64;
    let f = |t: f64| zeta(t, potential, n) - log_c;
    let df = |t: f64| 1.0 - (nf - 1.0) * potential.beta_at_log(t);
    let scale = log_c.abs().max(1.0);
    let tol = 4.0 * f64::EPSILON * scale;

    let mut t = log_c.clamp(-LOG_CLIP, LOG_CLIP);
    let mut r = f(t);
    if r == 0.0 {
        return Ok(ScaleRoot { log_z: t, residual: 0.0, iterations: 0 });
    }
    let (mut lo, mut hi, flo, fhi);
    let mut width = nf * r.abs() * (1.0 + 1e-8) + f64::EPSILON * scale;
    let mut expansions = 0;
    loop {
        let other = if r < 0.0 { t + width } else { t - width };
        let fo = f(other);
        if !fo.is_finite() {
            return Err(QnError::NonConvergence { iterations: 0, residual: r });
        }
        if fo.signum() != r.signum() || fo == 0.0 {
            if r < 0.0 {
                (lo, flo, hi, fhi) = (t, r, other, fo);
            } else {
                (lo, flo, hi, fhi) = (other, fo, t, r);
            }
            break;
        }
        width *= 10.0;
        expansions += 1;
        if expansions > 60 {
            return Err(QnError::NonConvergence { iterations: 0, residual: r });
        }
    }
    if flo == 0.0 {
        return Ok(ScaleRoot { log_z: lo, residual: 0.0, iterations: 0 });
    }
    if fhi == 0.0 {
        return Ok(ScaleRoot { log_z: hi, residual: 0.0, iterations: 0 });
    }

    // start from the bracket end with the smaller residual
    (t, r) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for it in 1..=MAX_SCALE_ITERS {
        let d = df(t);
        let mut next = if d > 0.0 && d.is_finite() { t - r / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        r = f(t);
        if r == 0.0 || (r.abs() <= tol && step <= tol) {
            return Ok(ScaleRoot { log_z: t, residual: r, iterations: it });
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 2.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(ScaleRoot { log_z: t, residual: r, iterations: it });
        }
    }
    Err(QnError::NonConvergence { iterations: MAX_SCALE_ITERS, residual: r })
}

/// Result of the implicit V-Bregman update.
#[derive(Debug, Clone)]
pub struct PrimalUpdate {
    pub factor: SpdCholesky,
    /// `nu(det M_+) / nu(det M)`
    pub theta: f64,
    /// `log det M_+` as given by the scale equation.
    pub log_z: f64,
}

/// `M_+ = theta * bfgs_core(M, u, v) + (1 - theta) v v' / (u'v)` with
/// `theta = nu(det M_+) / nu(det M)`, the minimizer of `D_V(., M)` subject
/// to `M_+ u = v`.
pub fn primal_update(m: &SpdCholesky, u: &[f64], v: &[f64], potential: &Potential) -> Result<PrimalUpdate> {
    let n = m.dim();
    let uv = check_curvature(u, v)?;
    let bar = bfgs_core(m, u, v)?;
    let logdet_m = m.logdet();
    let log_nu_m = potential.log_nu_at_log(logdet_m);
    // det of the core is det(M) u'v / u'Mu; reading it off `bar` loses digits when u'v is small
    let log_c = logdet_m + (uv / m.quad_form(u)).ln() - (n as f64 - 1.0) * log_nu_m;
    let root = solve_scale_equation(log_c, potential, n)?;
    let theta = (potential.log_nu_at_log(root.log_z) - log_nu_m).exp();
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(QnError::Domain(format!("self-scaling coefficient {theta}")));
    }
    let one_minus = 1.0 - theta;
    let mut factor = bar.scaled(theta)?;
    if one_minus != 0.0 {
        let w = scaled(v, (one_minus.abs() / uv).sqrt());
        let sign = if one_minus > 0.0 { Sign::Plus } else { Sign::Minus };
        if let Err(e) = factor.rank_one_modify_in_place(&w, sign) {
            if !matches!(e, QnError::DowndateBreakdown { .. }) {
                return Err(e);
            }
            let mut dense = bar.to_dense().scale(theta);
            dense.add_outer(one_minus / uv, v, v);
            factor = SpdCholesky::cholesky(&dense.symmetrized())?;
        }
    }
    Ok(PrimalUpdate { factor, theta, log_z: root.log_z })
}

/// Output of [`family_update`]: the new state in the family's own space
/// (`B` for `-b` families and Broyden, `H` for `-h` families).
#[derive(Debug, Clone)]
pub struct FamilyUpdate {
    pub factor: SpdCholesky,
    /// Self-scaling coefficient of the underlying primal update; `None` for
    /// Broyden combinations.
    pub theta: Option<f64>,
}

/// Applies `family` to `state` (`B_k` or `H_k`, matching the family).
pub fn family_update(family: &UpdateFamily, state: &SpdCholesky, pair: &SecantPair) -> Result<FamilyUpdate> {
    let (s, y) = (&pair.s, &pair.y);
    match family {
        UpdateFamily::VBfgsB(p) => {
            let up = primal_update(state, s, y, p)?;
            Ok(FamilyUpdate { factor: up.factor, theta: Some(up.theta) })
        }
        UpdateFamily::VDfpH(p) => {
            let up = primal_update(state, y, s, p)?;
            Ok(FamilyUpdate { factor: up.factor, theta: Some(up.theta) })
        }
        UpdateFamily::VDfpB(p) => {
            let up = primal_update(&state.invert()?, y, s, p)?;
            Ok(FamilyUpdate { factor: up.factor.invert()?, theta: Some(up.theta) })
        }
        UpdateFamily::VBfgsH(p) => {
            let up = primal_update(&state.invert()?, s, y, p)?;
            Ok(FamilyUpdate { factor: up.factor.invert()?, theta: Some(up.theta) })
        }
        UpdateFamily::Broyden { theta, v1, v2 } => {
            let b1 = primal_update(state, s, y, v1)?.factor.to_dense();
            let b2 = primal_update(&state.invert()?, y, s, v2)?.factor.inverse_dense();
            let mixed = b1.scale(*theta).add_scaled(1.0 - theta, &b2);
            let factor = SpdCholesky::cholesky(&mixed.symmetrized())?;
            Ok(FamilyUpdate { factor, theta: None })
        }
    }
}

/// V-DFP-B evaluated directly from the DFP matrix
/// `B_+ = r D + (1 - r) y y'/s'y`, `r = nu(1/det B) / nu(1/det B_+)`, with
/// `1/det B_+` taken from the scale equation for the inverse. Dense; used to
/// cross-check the inverse route.
pub fn vdfp_direct(b: &SpdCholesky, s: &[f64], y: &[f64], potential: &Potential) -> Result<SquareMatrix> {
    let n = b.dim();
    let sy = check_curvature(s, y)?;
    let d = dfp_dense(b, s, y)?;
    let logdet_b = b.logdet();
    let yhy = dot(y, &b.solve(y)?);
    let logdet_d = logdet_b + yhy.ln() - sy.ln();
    let log_nu_h = potential.log_nu_at_log(-logdet_b);
    let root = solve_scale_equation(-logdet_d - (n as f64 - 1.0) * log_nu_h, potential, n)?;
    let r = (log_nu_h - potential.log_nu_at_log(root.log_z)).exp();
    let mut out = d.scale(r);
    out.add_outer((1.0 - r) / sy, y, y);
    Ok(out)
}

/// `R = -nu(det B_+) B_+^{-1} + nu(det B) B^{-1}`; for the V-BFGS optimum
/// it has the form `s l' + l s'`.
pub fn kkt_residual(b: &SpdCholesky, b_plus: &SpdCholesky, potential: &Potential) -> SquareMatrix {
    let nu_plus = potential.log_nu_at_log(b_plus.logdet()).exp();
    let nu_k = potential.log_nu_at_log(b.logdet()).exp();
    b_plus.inverse_dense().scale(-nu_plus).add_scaled(nu_k, &b.inverse_dense())
}
