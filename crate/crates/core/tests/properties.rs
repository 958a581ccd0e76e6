use proptest::prelude::*;

use qn_core::linalg::{dot, norm, rel_frobenius_diff, sub, SquareMatrix};
use qn_core::linesearch::{wolfe_search, LineSearchParams};
use qn_core::robustness::{family_influence, perturbed_update};
use qn_core::update::{family_update, primal_update, zeta};
use qn_core::{solve_scale_equation, Potential, SecantPair, Sign, SpdCholesky, UpdateFamily};

/// `A A'/n + I/4` from a flat vector of entries.
fn spd_from(n: usize, entries: &[f64]) -> SpdCholesky {
    let a = SquareMatrix::from_row_major(n, entries.to_vec()).unwrap();
    let mut m = a.matmul(&a.transpose()).scale(1.0 / n as f64);
    for i in 0..n {
        m[(i, i)] += 0.25;
    }
    SpdCholesky::cholesky(&m).unwrap()
}

fn instance() -> impl Strategy<Value = (SpdCholesky, Vec<f64>, Vec<f64>)> {
    (2usize..9).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_filter_map("curvature", move |(a, s, y)| {
                let sy = dot(&s, &y);
                if sy.abs() < 1e-2 * norm(&s) * norm(&y) || norm(&s) < 1e-3 {
                    return None;
                }
                let y = if sy < 0.0 { y.iter().map(|v| -v).collect() } else { y };
                Some((spd_from(n, &a), s, y))
            })
    })
}

fn potential() -> impl Strategy<Value = Potential> {
    prop_oneof![
        Just(Potential::neg_log()),
        (-3.0..0.0f64).prop_map(|g| Potential::power(g).unwrap()),
        (0.1..3.0f64, 0.1..3.0f64).prop_map(|(a, d)| Potential::bounded(a, a + d).unwrap()),
    ]
}

fn family(p: Potential, k: usize) -> UpdateFamily {
    match k {
        0 => UpdateFamily::VBfgsB(p),
        1 => UpdateFamily::VDfpB(p),
        2 => UpdateFamily::VBfgsH(p),
        _ => UpdateFamily::VDfpH(p),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn updates_satisfy_the_secant_condition((b, s, y) in instance(), p in potential(), k in 0usize..4) {
        let fam = family(p, k);
        let (state, u, v) = if fam.is_inverse() { (b.invert().unwrap(), &y, &s) } else { (b, &s, &y) };
        let up = family_update(&fam, &state, &SecantPair::new(s.clone(), y.clone()).unwrap()).unwrap();
        let err = norm(&sub(&up.factor.mul_vec(u), v)) / norm(v);
        prop_assert!(err < 1e-8, "secant error {err}");
        prop_assert!(SpdCholesky::cholesky(&up.factor.to_dense().symmetrized()).is_ok());
    }

    #[test]
    fn power_scale_depends_on_rho_only((b, s, y) in instance(), gamma in -3.0..0.0f64) {
        let n = b.dim();
        let up = primal_update(&b, &s, &y, &Potential::power(gamma).unwrap()).unwrap();
        let rho = gamma / (1.0 - (n as f64 - 1.0) * gamma);
        let expected = (dot(&s, &y) / b.quad_form(&s)).powf(rho);
        prop_assert!((up.theta / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scale_root_solves_its_equation(log_c in -200.0..200.0f64, n in 2usize..200, p in potential()) {
        let r = solve_scale_equation(log_c, &p, n).unwrap();
        prop_assert!((zeta(r.log_z, &p, n) - log_c).abs() <= 1e-12 * log_c.abs().max(1.0));
    }

    #[test]
    fn rank_one_modification_matches_dense((b, s, _y) in instance(), c in 0.0..0.9f64) {
        let up = b.rank_one_modify(&s, Sign::Plus).unwrap();
        let mut dense = b.to_dense();
        dense.add_outer(1.0, &s, &s);
        prop_assert!(rel_frobenius_diff(&up.to_dense(), &dense) < 1e-12);
        // downdate by a fraction of what keeps the matrix positive definite
        let w: Vec<f64> = s.iter().map(|v| v * (c / b.solve(&s).unwrap().iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()).sqrt()).collect();
        let down = b.rank_one_modify(&w, Sign::Minus).unwrap();
        let mut dense = b.to_dense();
        dense.add_outer(-1.0, &w, &w);
        prop_assert!(rel_frobenius_diff(&down.to_dense(), &dense) < 1e-9);
    }

    #[test]
    fn consistent_perturbation_changes_nothing((b, s, y) in instance(), p in potential(), k in 0usize..4, eps in 0.01..0.2f64) {
        let fam = family(p, k);
        let m = if fam.is_inverse() { b.invert().unwrap() } else { b };
        let pu = perturbed_update(&fam, &m, &s, &y, &y, eps).unwrap();
        // the inverted routes lose about cond(M) digits when s'y is small
        let m0 = SpdCholesky::cholesky(&pu.m0.symmetrized()).unwrap();
        let tol = 1e-9f64.max(1e-14 * pu.m0.frobenius() * m0.invert().unwrap().to_dense().frobenius());
        prop_assert!(rel_frobenius_diff(&pu.m_eps, &pu.m0) < tol);
        let d = family_influence(&fam, &m, &s, &y, &y).unwrap();
        prop_assert!(d.frobenius() < tol * pu.m0.frobenius().max(1.0));
    }

    #[test]
    fn closed_form_influence_is_the_derivative((b, s, y) in instance(), k in 0usize..4, ybar in prop::collection::vec(-1.0..1.0f64, 8)) {
        let fam = family(Potential::power(-1.0).unwrap(), k);
        let n = b.dim();
        let ybar = &ybar[..n];
        let m = if fam.is_inverse() { b.invert().unwrap() } else { b };
        let d = family_influence(&fam, &m, &s, &y, ybar).unwrap();
        // central difference: the error is O(eps^2)
        let eps = 1e-5;
        let plus = perturbed_update(&fam, &m, &s, &y, ybar, eps).unwrap();
        let minus = perturbed_update(&fam, &m, &s, &y, ybar, -eps).unwrap();
        let central = plus.m_eps.add_scaled(-1.0, &minus.m_eps).scale(0.5 / eps);
        let scale = d.frobenius().max(plus.m0.frobenius());
        prop_assert!(central.add_scaled(-1.0, &d).frobenius() < 1e-5 * scale);
    }

    #[test]
    fn wolfe_step_meets_both_conditions(a in 0.1..50.0f64, b in -10.0..-0.1f64, c in -1.0..1.0f64) {
        // phi(t) = c + b t + a t^2 / 2 + t^4 / 4 along a descent direction
        let eval = |t: f64| Ok::<_, qn_core::QnError>((c + b * t + 0.5 * a * t * t + 0.25 * t.powi(4), b + a * t + t.powi(3)));
        let params = LineSearchParams::wolfe();
        let r = wolfe_search(eval, c, b, &params).unwrap();
        let (f, df) = eval(r.alpha).unwrap();
        prop_assert!(f <= c + params.c1 * r.alpha * b + 1e-12);
        prop_assert!(df >= params.c2 * b - 1e-12);
    }
}
