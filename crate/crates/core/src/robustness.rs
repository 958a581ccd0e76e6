//! Influence of an inexact line search on the Hessian update.
//!
//! A perturbed step `(1 + eps) s` with gradient difference `y + eps ybar`
//! moves the updated matrix by `eps * IF + O(eps^2)`. This module evaluates
//! `IF` in closed form, estimates it by finite differences, and builds the
//! matrix sequences along which its norm blows up.

use serde::Serialize;

use crate::error::{QnError, Result};
use crate::linalg::{axpy, dot, orthonormalize_against, scaled, SquareMatrix, SymmetricEigen};
use crate::potential::Potential;
use crate::rng::{normal_vec, stream_rng};
use crate::spd::SpdCholesky;
use crate::update::{bfgs_core, check_curvature, family_update, primal_update, SecantPair, UpdateFamily};

/// `Delta[M; s, sbar, y, ybar]`: derivative at `eps = 0` of the minimizer of
/// `D_V(., M)` subject to `B (s + eps sbar) = y + eps ybar`.
pub fn delta_influence(
    m: &SpdCholesky,
    s: &[f64],
    s_bar: &[f64],
    y: &[f64],
    y_bar: &[f64],
    potential: &Potential,
) -> Result<SquareMatrix> {
    let n = m.dim();
    for v in [s, s_bar, y, y_bar] {
        crate::linalg::check_len(n, v)?;
    }
    let sy = check_curvature(s, y)?;
    let up = primal_update(m, s, y, potential)?;
    let b0 = &up.factor;
    let ratio = up.theta;
    let beta = potential.beta_at_log(up.log_z);
    let coef = beta / (1.0 - (n as f64 - 1.0) * beta);

    let ms = m.mul_vec(s);
    let m_sbar = m.mul_vec(s_bar);
    let sms = dot(s, &ms);
    let sbar_ms = dot(s_bar, &ms);
    let w = b0.solve(&ms)?;
    let s_m_b0inv_ms = dot(&ms, &w);
    let sbar_m_b0inv_ms = dot(&m_sbar, &w);
    let s_ybar = dot(s, y_bar);
    let sbar_y = dot(s_bar, y);

    let brace = (s_ybar - sbar_y) / sy
        + ratio * (2.0 * sbar_ms * s_m_b0inv_ms / (sms * sms) - 2.0 * sbar_m_b0inv_ms / sms);

    let mut out = SquareMatrix::zeros(n);
    if coef != 0.0 && brace != 0.0 {
        let mut core = b0.to_dense();
        core.add_outer(-1.0 / sy, y, y);
        out = core.scale(coef * brace);
    }
    out.add_outer(1.0 / sy, y, y_bar);
    out.add_outer(1.0 / sy, y_bar, y);
    out.add_outer(-(s_ybar + sbar_y) / (sy * sy), y, y);
    out.add_outer(ratio * 2.0 * sbar_ms / (sms * sms), &ms, &ms);
    out.add_outer(-ratio / sms, &ms, &m_sbar);
    out.add_outer(-ratio / sms, &m_sbar, &ms);
    Ok(out.symmetrized())
}

/// `Gamma[M; u, ubar, v, vbar] = -B0 Delta[M^{-1}; v, vbar, u, ubar] B0`, the
/// influence for the update that minimizes `D_V(B^{-1}, M^{-1})` subject to
/// `B u = v`; `B0` is that update at `eps = 0`.
pub fn gamma_influence(
    m: &SpdCholesky,
    u: &[f64],
    u_bar: &[f64],
    v: &[f64],
    v_bar: &[f64],
    potential: &Potential,
) -> Result<SquareMatrix> {
    check_curvature(u, v)?;
    let m_inv = m.invert()?;
    let b0 = primal_update(&m_inv, v, u, potential)?.factor.inverse_dense();
    let inner = delta_influence(&m_inv, v, v_bar, u, u_bar, potential)?;
    Ok(b0.matmul(&inner).matmul(&b0).scale(-1.0).symmetrized())
}

/// Closed-form influence of `family` at state `m` (`B_k` or `H_k`) under the
/// line-search perturbation direction `ybar`.
pub fn family_influence(family: &UpdateFamily, m: &SpdCholesky, s: &[f64], y: &[f64], y_bar: &[f64]) -> Result<SquareMatrix> {
    match family {
        UpdateFamily::VBfgsB(p) => delta_influence(m, s, s, y, y_bar, p),
        UpdateFamily::VDfpB(p) => gamma_influence(m, s, s, y, y_bar, p),
        UpdateFamily::VBfgsH(p) => gamma_influence(m, y, y_bar, s, s, p),
        UpdateFamily::VDfpH(p) => delta_influence(m, y, y_bar, s, s, p),
        UpdateFamily::Broyden { .. } => Err(QnError::UnsupportedFamily(family.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedUpdate {
    pub m0: SquareMatrix,
    pub m_eps: SquareMatrix,
    /// `||(M(eps) - M(0)) / eps||_F`
    pub approx_if: f64,
}

impl PerturbedUpdate {
    /// `(M(eps) - M(0)) / eps`
    pub fn difference_quotient(&self, eps: f64) -> SquareMatrix {
        self.m_eps.add_scaled(-1.0, &self.m0).scale(1.0 / eps)
    }
}

/// Updates `m` with `(s, y)` and with `((1 + eps) s, y + eps ybar)`.
pub fn perturbed_update(
    family: &UpdateFamily,
    m: &SpdCholesky,
    s: &[f64],
    y: &[f64],
    y_bar: &[f64],
    eps: f64,
) -> Result<PerturbedUpdate> {
    if eps == 0.0 || !eps.is_finite() {
        return Err(QnError::InvalidArgument(format!("perturbation size must be nonzero, got {eps}")));
    }
    let base = SecantPair::new(s.to_vec(), y.to_vec())?;
    let pert = SecantPair::new(scaled(s, 1.0 + eps), axpy(y, eps, y_bar))?;
    let m0 = family_update(family, m, &base)?.factor.to_dense();
    let m_eps = family_update(family, m, &pert)?.factor.to_dense();
    let approx_if = m_eps.add_scaled(-1.0, &m0).frobenius() / eps.abs();
    Ok(PerturbedUpdate { m0, m_eps, approx_if })
}

/// Closed form next to forward differences at several step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct InfluenceReport {
    pub family: String,
    #[serde(skip)]
    pub closed_form: Option<SquareMatrix>,
    pub closed_form_norm: Option<f64>,
    pub eps: Vec<f64>,
    pub fd_norms: Vec<f64>,
    /// `||(M(eps) - M(0))/eps - IF||_F` per step size.
    pub fd_errors: Vec<f64>,
    /// `fd_norm / closed_form_norm` per step size.
    pub agreement: Vec<f64>,
}

impl InfluenceReport {
    /// Successive error ratios `err(eps_i) / err(eps_{i+1})`.
    pub fn error_ratios(&self) -> Vec<f64> {
        self.fd_errors.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

pub fn influence_report(
    family: &UpdateFamily,
    m: &SpdCholesky,
    s: &[f64],
    y: &[f64],
    y_bar: &[f64],
    eps: &[f64],
) -> Result<InfluenceReport> {
    let closed = match family_influence(family, m, s, y, y_bar) {
        Ok(c) => Some(c),
        Err(QnError::UnsupportedFamily(_)) => None,
        Err(e) => return Err(e),
    };
    let cnorm = closed.as_ref().map(|c| c.frobenius());
    let mut report = InfluenceReport {
        family: family.to_string(),
        closed_form: closed.clone(),
        closed_form_norm: cnorm,
        eps: eps.to_vec(),
        fd_norms: Vec::new(),
        fd_errors: Vec::new(),
        agreement: Vec::new(),
    };
    for &e in eps {
        let pu = perturbed_update(family, m, s, y, y_bar, e)?;
        let q = pu.difference_quotient(e);
        report.fd_norms.push(pu.approx_if);
        match &closed {
            Some(c) => {
                report.fd_errors.push(q.add_scaled(-1.0, c).frobenius());
                report.agreement.push(pu.approx_if / c.frobenius());
            }
            None => {
                report.fd_errors.push(f64::NAN);
                report.agreement.push(f64::NAN);
            }
        }
    }
    Ok(report)
}

/// Symmetric square root through a Jacobi eigendecomposition.
pub fn matrix_square_root(a: &SpdCholesky) -> SquareMatrix {
    SymmetricEigen::new(&a.to_dense(), 1e-12).map(|l| l.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialKind {
    /// `M(a) = Bb^{1/2} (I + a p1 p1' + b p2 p2') Bb^{1/2}`: fixed determinant,
    /// unbounded norm, `M(a) u = v`.
    FixedDetUnbounded,
    /// `M_i = M0^{1/2} (I + i p1 p1') M0^{1/2}` with `p1` hitting the excite
    /// vector.
    GrowingSpike,
    /// `c * Bb`.
    UniformScaling,
}

impl std::str::FromStr for AdversarialKind {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed-det" => Ok(AdversarialKind::FixedDetUnbounded),
            "spike" => Ok(AdversarialKind::GrowingSpike),
            "scaling" => Ok(AdversarialKind::UniformScaling),
            other => Err(QnError::Parse(format!("unknown probe {other:?} (fixed-det, spike, scaling)"))),
        }
    }
}

impl std::fmt::Display for AdversarialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdversarialKind::FixedDetUnbounded => "fixed-det",
            AdversarialKind::GrowingSpike => "spike",
            AdversarialKind::UniformScaling => "scaling",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialParams {
    /// `a` values, spike multipliers `i`, or scale factors `c`.
    pub values: Vec<f64>,
    /// Target determinant for the fixed-determinant sequence.
    pub d: f64,
    pub seed: u64,
    /// Vector the spike direction must not be orthogonal to (after the
    /// `M0^{1/2}` map). Defaults to a seeded random vector.
    pub excite: Option<Vec<f64>>,
    /// Matrix scaled by the uniform-scaling sequence. Defaults to the
    /// identity; it must not map `u` to a multiple of `v`.
    pub base: Option<SpdCholesky>,
}

impl AdversarialParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, d: 1.0, seed: 0, excite: None, base: None }
    }
}

/// Orthonormal vectors orthogonal to `basis`, from seeded random draws.
fn random_orthonormal(n: usize, basis: &[Vec<f64>], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(seed, &[0x0a11]);
    let mut span: Vec<Vec<f64>> = basis.to_vec();
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 100 {
            return Err(QnError::InvalidArgument("no orthogonal complement available".into()));
        }
        if let Some(p) = orthonormalize_against(&normal_vec(&mut rng, n, 1.0), &span) {
            span.push(p.clone());
            out.push(p);
        }
    }
    Ok(out)
}

/// Orthonormal basis of the span of `vectors`, dropping dependent ones.
fn orthonormal_span(vectors: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        if let Some(q) = orthonormalize_against(&v, &basis) {
            basis.push(q);
        }
    }
    basis
}

fn sandwich(root: &SquareMatrix, inner: &SquareMatrix) -> Result<SpdCholesky> {
    SpdCholesky::cholesky(&root.matmul(inner).matmul(root).symmetrized())
}

/// Matrix sequences along which influence norms grow without bound.
pub fn adversarial_sequence(
    kind: AdversarialKind,
    u: &[f64],
    v: &[f64],
    preserve: &[Vec<f64>],
    params: &AdversarialParams,
) -> Result<Vec<SpdCholesky>> {
    let n = u.len();
    crate::linalg::check_len(n, v)?;
    check_curvature(u, v)?;
    let identity = SpdCholesky::identity(n);
    match kind {
        AdversarialKind::FixedDetUnbounded => {
            if n < preserve.len() + 3 {
                return Err(QnError::InvalidArgument(format!(
                    "fixed-det sequence needs n >= {} (preserve count + 3), got {n}",
                    preserve.len() + 3
                )));
            }
            if !(params.d > 0.0) {
                return Err(QnError::InvalidArgument(format!("target determinant must be positive, got {}", params.d)));
            }
            let bar = bfgs_core(&identity, u, v)?;
            let root = matrix_square_root(&bar);
            let basis = orthonormal_span(std::iter::once(u).chain(preserve.iter().map(|w| w.as_slice())).map(|w| root.mul_vec(w)));
            let ps = random_orthonormal(n, &basis, 2, params.seed)?;
            let ratio = (params.d.ln() - bar.logdet()).exp();
            params
                .values
                .iter()
                .map(|&a| {
                    if !(a > 0.0) {
                        return Err(QnError::InvalidArgument(format!("fixed-det parameter must be positive, got {a}")));
                    }
                    let b = ratio / (1.0 + a) - 1.0;
                    let mut inner = SquareMatrix::identity(n);
                    inner.add_outer(a, &ps[0], &ps[0]);
                    inner.add_outer(b, &ps[1], &ps[1]);
                    sandwich(&root, &inner)
                })
                .collect()
        }
        AdversarialKind::GrowingSpike => {
            if n < 2 {
                return Err(QnError::InvalidArgument("spike sequence needs n >= 2".into()));
            }
            let m0 = bfgs_core(&identity, u, v)?;
            let root = matrix_square_root(&m0);
            let basis = orthonormal_span(std::iter::once(u).chain(preserve.iter().map(|w| w.as_slice())).map(|w| root.mul_vec(w)));
            let p1 = match &params.excite {
                Some(e) => {
                    crate::linalg::check_len(n, e)?;
                    orthonormalize_against(&root.mul_vec(e), &basis).ok_or_else(|| {
                        QnError::InvalidArgument("excite vector lies in the span of the constrained directions".into())
                    })?
                }
                None => random_orthonormal(n, &basis, 1, params.seed)?.remove(0),
            };
            params
                .values
                .iter()
                .map(|&i| {
                    if !(i >= 0.0) {
                        return Err(QnError::InvalidArgument(format!("spike parameter must be >= 0, got {i}")));
                    }
                    let mut inner = SquareMatrix::identity(n);
                    inner.add_outer(i, &p1, &p1);
                    sandwich(&root, &inner)
                })
                .collect()
        }
        AdversarialKind::UniformScaling => {
            let base = params.base.clone().unwrap_or_else(|| identity.clone());
            if base.dim() != n {
                return Err(QnError::DimensionMismatch { expected: n, actual: base.dim() });
            }
            let t = base.mul_vec(u);
            if orthonormalize_against(&t, &[crate::linalg::scaled(v, 1.0 / crate::linalg::norm(v))]).is_none() {
                return Err(QnError::InvalidArgument("scaling base maps u onto a multiple of v".into()));
            }
            params
                .values
                .iter()
                .map(|&c| base.scaled(c))
                .collect()
        }
    }
}

/// Frobenius norm of the closed-form influence along a sequence.
pub fn influence_along(family: &UpdateFamily, seq: &[SpdCholesky], s: &[f64], y: &[f64], y_bar: &[f64]) -> Result<Vec<f64>> {
    seq.iter()
        .map(|m| family_influence(family, m, s, y, y_bar).map(|d| d.frobenius()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frobenius_diff, unit};

    #[test]
    fn hand_checked_delta() {
        let i2 = SpdCholesky::identity(2);
        let (s, yb) = (unit(2, 0), unit(2, 1));
        let d = delta_influence(&i2, &s, &s, &s, &yb, &Potential::neg_log()).unwrap();
        let want = SquareMatrix::from_rows(&[&[-1.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!(rel_frobenius_diff(&d, &want) < 1e-15);
        assert!((d.frobenius() - 3f64.sqrt()).abs() < 1e-15);

        let pu = perturbed_update(&UpdateFamily::VBfgsB(Potential::neg_log()), &i2, &s, &s, &yb, 1e-5).unwrap();
        assert!((pu.approx_if - 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn quadratic_consistent_perturbation_vanishes() {
        let b = SpdCholesky::from_diag(&[1.0, 2.0, 3.0]).unwrap();
        let (s, y) = ([1.0, 0.5, -0.2], [0.7, 1.1, 0.1]);
        let p = Potential::power(-1.0).unwrap();
        assert!(delta_influence(&b, &s, &s, &y, &y, &p).unwrap().frobenius() < 1e-12);
        assert!(gamma_influence(&b, &s, &s, &y, &y, &p).unwrap().frobenius() < 1e-12);
        assert!(perturbed_update(&UpdateFamily::VBfgsB(p), &b, &s, &y, &y, 0.0).is_err());
    }

    #[test]
    fn matrix_square_root_examples() {
        let r = matrix_square_root(&SpdCholesky::identity(3));
        assert!(rel_frobenius_diff(&r, &SquareMatrix::identity(3)) < 1e-15);
        let r = matrix_square_root(&SpdCholesky::from_diag(&[4.0, 9.0]).unwrap());
        assert!(rel_frobenius_diff(&r, &SquareMatrix::from_diag(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn broyden_has_no_closed_form() {
        let fam = UpdateFamily::broyden(0.5, Potential::neg_log(), Potential::neg_log()).unwrap();
        let i2 = SpdCholesky::identity(2);
        let e = unit(2, 0);
        assert!(matches!(family_influence(&fam, &i2, &e, &e, &e), Err(QnError::UnsupportedFamily(_))));
    }

    #[test]
    fn sequences_reject_small_dimension() {
        let (u, v) = ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
        let params = AdversarialParams::new(vec![1.0]);
        let err = adversarial_sequence(AdversarialKind::FixedDetUnbounded, &u, &v, &[vec![0.0, 0.0, 1.0]], &params);
        assert!(err.is_err());
        let params = AdversarialParams { base: Some(SpdCholesky::identity(3)), ..AdversarialParams::new(vec![1.0]) };
        assert!(adversarial_sequence(AdversarialKind::UniformScaling, &u, &u, &[], &params).is_err());
    }

    #[test]
    fn sequences_keep_the_secant_pair() {
        let u = [1.0, 0.5, -0.3, 2.0, 0.1];
        let v = [0.7, 1.0, 0.2, 1.5, -0.4];
        let params = AdversarialParams { d: 3.0, excite: Some(vec![0.0, 1.0, 1.0, 0.0, 0.5]), ..AdversarialParams::new(vec![1.0, 50.0, 1e4]) };
        for kind in [AdversarialKind::FixedDetUnbounded, AdversarialKind::GrowingSpike] {
            for m in adversarial_sequence(kind, &u, &v, &[vec![0.0, 0.0, 1.0, 0.0, 0.0]], &params).unwrap() {
                let mu = m.mul_vec(&u);
                let err: f64 = mu.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9 * m.to_dense().frobenius(), "{kind}: {err}");
                if kind == AdversarialKind::FixedDetUnbounded {
                    assert!((m.logdet() - 3f64.ln()).abs() < 1e-9);
                }
            }
        }
    }
}
