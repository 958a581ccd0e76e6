use std::ffi::CString;
use std::ptr;

use qn_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let len = unsafe { qn_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..len.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn potential(text: &str) -> *mut QnPotential {
    let text = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { qn_potential_parse(text.as_ptr(), &mut p) }, QnStatus::Ok);
    p
}

fn dense(m: *const QnSpd) -> Vec<f64> {
    let n = unsafe { qn_spd_dim(m) };
    let mut out = vec![0.0; n * n];
    assert_eq!(unsafe { qn_spd_to_dense(m, out.as_mut_ptr(), out.len()) }, QnStatus::Ok);
    out
}

fn mul(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
}

#[test]
fn update_keeps_secant_pair() {
    let p = potential("power:gamma=-1");
    let b0 = [2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 1.5];
    let s = [1.0, -0.5, 0.25];
    let y = [1.2, 0.1, 0.5];
    let mut b = ptr::null_mut();
    let mut next = ptr::null_mut();
    let mut theta = 0.0;
    let fam = CString::new("vbfgs-b").unwrap();
    unsafe {
        assert_eq!(qn_spd_from_dense(3, b0.as_ptr(), &mut b), QnStatus::Ok);
        assert_eq!(qn_update(fam.as_ptr(), p, b, s.as_ptr(), y.as_ptr(), &mut next, &mut theta), QnStatus::Ok);
    }
    let bs = mul(&dense(next), &s);
    for (u, v) in bs.iter().zip(&y) {
        assert!((u - v).abs() < 1e-10);
    }
    assert!(theta.is_finite() && theta > 0.0);
    let mut logdet = 0.0;
    assert_eq!(unsafe { qn_spd_logdet(next, &mut logdet) }, QnStatus::Ok);
    assert!(logdet.is_finite());
    unsafe {
        qn_spd_free(next);
        qn_spd_free(b);
        qn_potential_free(p);
    }
}

#[test]
fn influence_vanishes_for_consistent_perturbation() {
    let p = potential("neglog");
    let mut h = ptr::null_mut();
    let fam = CString::new("vdfp-h").unwrap();
    let s = [0.3, 1.0];
    let y = [0.5, 0.9];
    let mut d = [1.0; 4];
    unsafe {
        assert_eq!(qn_spd_identity(2, &mut h), QnStatus::Ok);
        assert_eq!(qn_influence(fam.as_ptr(), p, h, s.as_ptr(), y.as_ptr(), y.as_ptr(), d.as_mut_ptr()), QnStatus::Ok);
        qn_spd_free(h);
        qn_potential_free(p);
    }
    assert!(d.iter().all(|v| v.abs() < 1e-10), "{d:?}");
}

#[test]
fn minimize_small_quadratic() {
    let p = potential("neglog");
    let problem = CString::new("p1").unwrap();
    let fam = CString::new("vbfgs-b").unwrap();
    let mut opts = qn_solve_options_default();
    opts.line_search = QnLineSearch::NearExact;
    let x0 = [0.0, 0.0];
    let mut x = [f64::NAN; 2];
    let mut summary = QnSolveSummary { outcome: QnOutcome::MaxIter, iterations: 0, f: 0.0, grad_norm: 0.0 };
    let status = unsafe { qn_minimize(problem.as_ptr(), 2, fam.as_ptr(), p, x0.as_ptr(), &opts, x.as_mut_ptr(), &mut summary) };
    assert_eq!(status, QnStatus::Ok, "{}", last_error());
    assert_eq!(summary.outcome, QnOutcome::Converged);
    assert!(summary.iterations <= 10);
    assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    unsafe { qn_potential_free(p) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut p = ptr::null_mut();
    let bad = CString::new("quadratic").unwrap();
    assert_ne!(unsafe { qn_potential_parse(bad.as_ptr(), &mut p) }, QnStatus::Ok);
    assert!(p.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { qn_potential_parse(ptr::null(), &mut p) }, QnStatus::NullPointer);
    assert!(last_error().contains("null"));

    let indefinite = [1.0, 2.0, 2.0, 1.0];
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { qn_spd_from_dense(2, indefinite.as_ptr(), &mut m) }, QnStatus::NotPositiveDefinite);

    // negative curvature is refused
    let pot = potential("neglog");
    let fam = CString::new("vbfgs-b").unwrap();
    let mut id = ptr::null_mut();
    let mut out = ptr::null_mut();
    let s = [1.0, 0.0];
    let y = [-1.0, 0.0];
    unsafe {
        qn_spd_identity(2, &mut id);
        assert_eq!(qn_update(fam.as_ptr(), pot, id, s.as_ptr(), y.as_ptr(), &mut out, ptr::null_mut()), QnStatus::CurvatureViolation);
        assert!(out.is_null());
        let mut small = [0.0; 2];
        assert_eq!(qn_spd_to_dense(id, small.as_mut_ptr(), 2), QnStatus::DimensionMismatch);
        qn_spd_free(id);
        qn_potential_free(pot);
    }

    // success clears the message
    potential("neglog");
    assert_eq!(last_error(), "");
}

#[test]
fn potential_eval_and_validate() {
    let p = potential("power:gamma=0.25");
    let (mut nu, mut beta, mut ok) = (0.0, 0.0, 1);
    unsafe {
        assert_eq!(qn_potential_eval(p, 2.0, &mut nu, &mut beta), QnStatus::Ok);
        assert_eq!(qn_potential_validate(p, 4, &mut ok), QnStatus::Ok);
        qn_potential_free(p);
    }
    assert!((nu - 2f64.powf(0.25)).abs() < 1e-12);
    assert!((beta - 0.25).abs() < 1e-12);
    assert_eq!(ok, 0);
}
