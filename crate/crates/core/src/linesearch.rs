//! Step-length selection: a weak-Wolfe bracketing search and a Brent-style
//! bounded scalar minimizer used as a near-exact line search.

use serde::{Deserialize, Serialize};

use crate::error::{QnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearchMode {
    Wolfe,
    NearExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    pub mode: LineSearchMode,
    pub c1: f64,
    pub c2: f64,
    pub tol_x: f64,
    pub max_evals: usize,
    /// Upper limit for the doubling bracket of the near-exact search.
    pub alpha_cap: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            mode: LineSearchMode::Wolfe,
            c1: 1e-4,
            c2: 0.9,
            tol_x: 1e-12,
            max_evals: 100,
            alpha_cap: 2f64.powi(30),
        }
    }
}

impl LineSearchParams {
    pub fn wolfe() -> Self {
        Self::default()
    }

    pub fn near_exact() -> Self {
        Self { mode: LineSearchMode::NearExact, max_evals: 500, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(QnError::InvalidArgument(format!(
                "line search needs 0 < c1 < c2 < 1, got c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.tol_x > 0.0) {
            return Err(QnError::InvalidArgument(format!("tol_x must be positive, got {}", self.tol_x)));
        }
        if self.max_evals == 0 || !(self.alpha_cap >= 1.0) {
            return Err(QnError::InvalidArgument("max_evals >= 1 and alpha_cap >= 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub phi: f64,
    pub evals: usize,
    /// Set when the evaluation budget ran out; `alpha` is then the best
    /// sufficient-decrease step seen (possibly 0).
    pub max_evals_exceeded: bool,
}

fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let den = db - da + 2.0 * d2;
    if den == 0.0 {
        return None;
    }
    let x = b - (b - a) * (db + d2 - d1) / den;
    x.is_finite().then_some(x)
}

/// Weak Wolfe search on `phi(alpha)`; `eval` returns `(phi, phi')`.
///
/// The returned step satisfies `phi(a) <= phi(0) + c1 a phi'(0)` and
/// `phi'(a) >= c2 phi'(0)`, unless `max_evals_exceeded` is set.
pub fn wolfe_search<F>(mut eval: F, phi0: f64, dphi0: f64, params: &LineSearchParams) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    params.validate()?;
    if !(dphi0 < 0.0) {
        return Err(QnError::LineSearch(format!("not a descent direction: phi'(0) = {dphi0}")));
    }
    let (c1, c2) = (params.c1, params.c2);
    let armijo = |a: f64, f: f64| f <= phi0 + c1 * a * dphi0;
    let curvature = |d: f64| d >= c2 * dphi0;
    let mut evals = 0;
    let mut best = (0.0, phi0);

    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, phi0, dphi0);
    let mut a = 1.0;
    let (mut lo, mut hi);
    loop {
        let (f, d) = eval(a)?;
        evals += 1;
        if armijo(a, f) && f < best.1 {
            best = (a, f);
        }
        if !armijo(a, f) || (evals > 1 && f >= f_prev) || !f.is_finite() {
            lo = (a_prev, f_prev, d_prev);
            hi = (a, f, d);
            break;
        }
        if curvature(d) {
            return Ok(LineSearchResult { alpha: a, phi: f, evals, max_evals_exceeded: false });
        }
        if evals >= params.max_evals || a >= 1e20 {
            return Ok(LineSearchResult { alpha: best.0, phi: best.1, evals, max_evals_exceeded: true });
        }
        (a_prev, f_prev, d_prev) = (a, f, d);
        a *= 2.0;
    }

    // zoom: lo satisfies sufficient decrease and has the lowest phi so far
    loop {
        if evals >= params.max_evals {
            return Ok(LineSearchResult { alpha: best.0, phi: best.1, evals, max_evals_exceeded: true });
        }
        let (la, lf, ld) = lo;
        let (ha, hf, hd) = hi;
        let (left, right) = if la < ha { (la, ha) } else { (ha, la) };
        let width = right - left;
        let guess = if hf.is_finite() && hd.is_finite() {
            cubic_min(la, lf, ld, ha, hf, hd)
        } else {
            None
        };
        let a = match guess {
            Some(x) if x > left + 0.1 * width && x < right - 0.1 * width => x,
            _ => 0.5 * (la + ha),
        };
        if width <= f64::EPSILON * right.max(1.0) {
            return Ok(LineSearchResult { alpha: best.0, phi: best.1, evals, max_evals_exceeded: true });
        }
        let (f, d) = eval(a)?;
        evals += 1;
        if !armijo(a, f) || f >= lf || !f.is_finite() {
            hi = (a, f, d);
            continue;
        }
        if f < best.1 {
            best = (a, f);
        }
        if curvature(d) {
            return Ok(LineSearchResult { alpha: a, phi: f, evals, max_evals_exceeded: false });
        }
        if d * (ha - la) >= 0.0 {
            hi = lo;
        }
        lo = (a, f, d);
    }
}

/// Bounded scalar minimization of `phi` on `(0, alpha_max]`, where
/// `alpha_max` doubles from 1 until `phi` increases (capped at
/// `params.alpha_cap`). Brent's golden-section / parabolic method with the
/// stopping rule `|x - xm| <= 2 tol1 - (b - a)/2`, `tol1 = sqrt(eps)|x| + tol_x/3`.
pub fn near_exact_search<F>(mut phi: F, phi0: f64, params: &LineSearchParams) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    params.validate()?;
    let mut evals = 0;
    let mut eval = |x: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let f = phi(x)?;
        Ok(if f.is_nan() { f64::INFINITY } else { f })
    };

    let mut hi = 1.0;
    let mut f_prev = phi0;
    let mut f_hi = eval(hi, &mut evals)?;
    while f_hi < f_prev && hi < params.alpha_cap {
        f_prev = f_hi;
        hi = (2.0 * hi).min(params.alpha_cap);
        f_hi = eval(hi, &mut evals)?;
    }

    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let seps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (0.0, hi);
    let mut x = a + golden * (b - a);
    let (mut v, mut w) = (x, x);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    let mut fx = eval(x, &mut evals)?;
    let (mut fv, mut fw) = (fx, fx);
    let mut exceeded = false;
    loop {
        let xm = 0.5 * (a + b);
        let tol1 = seps * x.abs() + params.tol_x / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        if evals >= params.max_evals {
            exceeded = true;
            break;
        }
        let mut take_golden = true;
        if e.abs() > tol1 {
            let mut r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                take_golden = false;
            }
        }
        if take_golden {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = eval(u, &mut evals)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok(LineSearchResult { alpha: x, phi: fx, evals, max_evals_exceeded: exceeded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wolfe_ok(r: &LineSearchResult, phi: impl Fn(f64) -> (f64, f64), p: &LineSearchParams) {
        let (f0, d0) = phi(0.0);
        let (f, d) = phi(r.alpha);
        assert!(f <= f0 + p.c1 * r.alpha * d0);
        assert!(d >= p.c2 * d0);
    }

    #[test]
    fn wolfe_examples() {
        let p = LineSearchParams::wolfe();
        let q = |a: f64| (0.5 * (1.0 - a) * (1.0 - a), a - 1.0);
        let r = wolfe_search(|a| Ok(q(a)), 0.5, -1.0, &p).unwrap();
        assert_eq!(r.alpha, 1.0);
        wolfe_ok(&r, q, &p);

        assert!(wolfe_search(|a| Ok((a, 1.0)), 0.0, 1.0, &p).is_err());

        let ex = |a: f64| ((-a).exp(), -(-a).exp());
        let r = wolfe_search(|a| Ok(ex(a)), 1.0, -1.0, &p).unwrap();
        assert!(!r.max_evals_exceeded);
        wolfe_ok(&r, ex, &p);
    }

    #[test]
    fn wolfe_needs_zoom_and_expansion() {
        let p = LineSearchParams::wolfe();
        // minimizer at 1e-3: the first trial overshoots
        let narrow = |a: f64| ((a - 1e-3).powi(2), 2.0 * (a - 1e-3));
        let r = wolfe_search(|a| Ok(narrow(a)), 1e-6, -2e-3, &p).unwrap();
        wolfe_ok(&r, narrow, &p);
        // minimizer at 300: the search expands
        let wide = |a: f64| ((a - 300.0).powi(2), 2.0 * (a - 300.0));
        let r = wolfe_search(|a| Ok(wide(a)), 9e4, -600.0, &p).unwrap();
        wolfe_ok(&r, wide, &p);
        assert!(r.alpha > 30.0);
    }

    #[test]
    fn near_exact_examples() {
        let p = LineSearchParams::near_exact();
        let r = near_exact_search(|a| Ok(0.5 * (1.0 - a) * (1.0 - a)), 0.5, &p).unwrap();
        assert!((r.alpha - 1.0).abs() <= 1e-12);
        let r = near_exact_search(|a| Ok((a - 3.0) * (a - 3.0) + 1.0), 10.0, &p).unwrap();
        assert!((r.alpha - 3.0).abs() <= 1e-12);
        // non-quadratic, unimodal
        let r = near_exact_search(|a: f64| Ok((a - 2.5).powi(4) + a.cosh() * 1e-3), 40.0, &p).unwrap();
        assert!(r.alpha > 2.0 && r.alpha < 3.0);
    }

    #[test]
    fn bad_params_rejected() {
        let p = LineSearchParams { c1: 0.95, ..LineSearchParams::default() };
        assert!(p.validate().is_err());
        let p = LineSearchParams { tol_x: 0.0, ..LineSearchParams::default() };
        assert!(p.validate().is_err());
    }
}
