//! C interface to `qn-core`.
//!
//! Objects cross the boundary as opaque handles (`QnPotential`, `QnSpd`)
//! that the caller frees with the matching `*_free`. Every fallible call
//! returns a `QnStatus`; on failure `qn_last_error` holds a message for the
//! calling thread. Matrices are dense, row-major `n * n` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qn_core::linalg::SquareMatrix;
use qn_core::linesearch::LineSearchParams;
use qn_core::problems::{make_problem, ProblemKind};
use qn_core::robustness::family_influence;
use qn_core::solver::{minimize, NoiseAdvance, NoiseConfig, Outcome, SolverConfig};
use qn_core::update::family_update;
use qn_core::{Potential, QnError, SecantPair, SpdCholesky, UpdateFamily};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    DimensionMismatch = 4,
    NotPositiveDefinite = 5,
    CurvatureViolation = 6,
    /// Scale equation, line search or evaluation failure.
    Numerical = 7,
    Unsupported = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

/// Opaque potential function.
pub struct QnPotential(Potential);

/// Opaque symmetric positive definite matrix, held as its Cholesky factor.
pub struct QnSpd(SpdCholesky);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnLineSearch {
    Wolfe = 0,
    NearExact = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnSolveOptions {
    pub line_search: QnLineSearch,
    /// Step noise level `h`; zero disables the perturbation.
    pub noise: f64,
    pub seed: u64,
    pub max_iter: usize,
    /// Non-positive means `n * 1e-5`.
    pub grad_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnOutcome {
    Converged = 0,
    MaxIter = 1,
    LineSearchFailure = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnSolveSummary {
    pub outcome: QnOutcome,
    pub iterations: usize,
    pub f: f64,
    pub grad_norm: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &QnError) -> QnStatus {
    match err {
        QnError::Parse(_) => QnStatus::Parse,
        QnError::InvalidArgument(_) | QnError::InvalidPotential(_) | QnError::Domain(_) | QnError::Io(_) => {
            QnStatus::InvalidArgument
        }
        QnError::DimensionMismatch { .. } => QnStatus::DimensionMismatch,
        QnError::NotPositiveDefinite { .. } | QnError::DowndateBreakdown { .. } => QnStatus::NotPositiveDefinite,
        QnError::CurvatureViolation { .. } => QnStatus::CurvatureViolation,
        QnError::UnsupportedFamily(_) => QnStatus::Unsupported,
        QnError::DetOverflow { .. }
        | QnError::NonConvergence { .. }
        | QnError::LineSearch(_)
        | QnError::Evaluation => QnStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Core(QnError),
}

impl From<QnError> for Failure {
    fn from(e: QnError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, turning errors and panics into a status plus a message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> QnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            QnStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            QnStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error: panic caught at the C boundary");
            QnStatus::Internal
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Core(QnError::Parse(format!("{what} is not valid UTF-8"))))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Family from its name; `potential` may be null for `broyden:...` names.
unsafe fn family(name: *const c_char, potential: *const QnPotential) -> Result<UpdateFamily, Failure> {
    let name = string(name, "family")?;
    let p = match potential.as_ref() {
        Some(p) => p.0.clone(),
        None if name.starts_with("broyden:") => Potential::neg_log(),
        None => return Err(Failure::Null("potential")),
    };
    Ok(UpdateFamily::from_name(&name, p)?)
}

/// Copies the message of the last failed call on this thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qn_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn qn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses `neglog`, `power:gamma=<g>` or `bounded:a=<a>,b=<b>`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qn_potential_parse(text: *const c_char, out: *mut *mut QnPotential) -> QnStatus {
    guard(|| {
        let p: Potential = string(text, "text")?.parse()?;
        write_out(out, QnPotential(p))
    })
}

/// # Safety
/// `p` must be null or a handle from `qn_potential_parse`, freed once.
#[no_mangle]
pub unsafe extern "C" fn qn_potential_free(p: *mut QnPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `nu(z) = -z V'(z)` and `beta(z) = z nu'(z) / nu(z)`.
///
/// # Safety
/// `p` must be a valid handle; `nu` and `beta` may be null.
#[no_mangle]
pub unsafe extern "C" fn qn_potential_eval(p: *const QnPotential, z: f64, nu: *mut f64, beta: *mut f64) -> QnStatus {
    guard(|| {
        let v = as_ref(p, "potential")?.0.evaluate(z)?;
        if !nu.is_null() {
            *nu = v.nu;
        }
        if !beta.is_null() {
            *beta = v.beta;
        }
        Ok(())
    })
}

/// Checks the potential conditions for dimension `n` on the default grid.
/// `passed` receives 1 or 0.
///
/// # Safety
/// `p` and `passed` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qn_potential_validate(p: *const QnPotential, n: usize, passed: *mut i32) -> QnStatus {
    guard(|| {
        let report = as_ref(p, "potential")?.0.validate(n, &qn_core::potential::default_grid());
        if passed.is_null() {
            return Err(Failure::Null("passed"));
        }
        *passed = report.passed() as i32;
        Ok(())
    })
}

/// Factors the row-major `n * n` matrix `a`.
///
/// # Safety
/// `a` must point to `n * n` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_from_dense(n: usize, a: *const f64, out: *mut *mut QnSpd) -> QnStatus {
    guard(|| {
        let data = slice(a, n * n, "a")?;
        let m = SquareMatrix::from_row_major(n, data.to_vec())?;
        write_out(out, QnSpd(SpdCholesky::cholesky(&m)?))
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_identity(n: usize, out: *mut *mut QnSpd) -> QnStatus {
    guard(|| {
        if n == 0 {
            return Err(QnError::InvalidArgument("dimension must be >= 1".into()).into());
        }
        write_out(out, QnSpd(SpdCholesky::identity(n)))
    })
}

/// # Safety
/// `m` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_free(m: *mut QnSpd) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimension of `m`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_dim(m: *const QnSpd) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `m` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_logdet(m: *const QnSpd, out: *mut f64) -> QnStatus {
    guard(|| {
        let v = as_ref(m, "matrix")?.0.logdet();
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Writes the dense matrix into `out` (`len` must be at least `n * n`).
///
/// # Safety
/// `m` must be a valid handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_spd_to_dense(m: *const QnSpd, out: *mut f64, len: usize) -> QnStatus {
    guard(|| {
        let m = &as_ref(m, "matrix")?.0;
        let n = m.dim();
        if len < n * n {
            return Err(QnError::DimensionMismatch { expected: n * n, actual: len }.into());
        }
        slice_mut(out, n * n, "out")?.copy_from_slice(m.to_dense().as_slice());
        Ok(())
    })
}

/// One quasi-Newton update of `state` (B for `-b` families, H for `-h`
/// families) with the secant pair `(s, y)`. `theta` receives the scale of
/// the BFGS-type part, or NaN for Broyden mixtures; it may be null.
///
/// # Safety
/// Pointers must be valid; `s` and `y` point to `dim(state)` doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_update(
    family_name: *const c_char,
    potential: *const QnPotential,
    state: *const QnSpd,
    s: *const f64,
    y: *const f64,
    out: *mut *mut QnSpd,
    theta: *mut f64,
) -> QnStatus {
    guard(|| {
        let fam = family(family_name, potential)?;
        let state = &as_ref(state, "state")?.0;
        let n = state.dim();
        fam.validate_for_dim(n)?;
        let pair = SecantPair::new(slice(s, n, "s")?.to_vec(), slice(y, n, "y")?.to_vec())?;
        let up = family_update(&fam, state, &pair)?;
        if !theta.is_null() {
            *theta = up.theta.unwrap_or(f64::NAN);
        }
        write_out(out, QnSpd(up.factor))
    })
}

/// Closed-form influence of the perturbation `((1 + eps) s, y + eps ybar)`
/// at `eps = 0`, written row-major into `out` (`n * n` doubles).
///
/// # Safety
/// Pointers must be valid; vectors have `dim(state)` entries.
#[no_mangle]
pub unsafe extern "C" fn qn_influence(
    family_name: *const c_char,
    potential: *const QnPotential,
    state: *const QnSpd,
    s: *const f64,
    y: *const f64,
    y_bar: *const f64,
    out: *mut f64,
) -> QnStatus {
    guard(|| {
        let fam = family(family_name, potential)?;
        let state = &as_ref(state, "state")?.0;
        let n = state.dim();
        let d = family_influence(&fam, state, slice(s, n, "s")?, slice(y, n, "y")?, slice(y_bar, n, "y_bar")?)?;
        slice_mut(out, n * n, "out")?.copy_from_slice(d.as_slice());
        Ok(())
    })
}

/// Defaults: Wolfe search, no noise, seed 0, 50000 iterations, `n * 1e-5`.
#[no_mangle]
pub extern "C" fn qn_solve_options_default() -> QnSolveOptions {
    QnSolveOptions { line_search: QnLineSearch::Wolfe, noise: 0.0, seed: 0, max_iter: 50_000, grad_tol: 0.0 }
}

/// Minimizes the built-in problem `p1` or `p2` of dimension `n` from `x0`.
/// The final iterate goes to `x_out` (`n` doubles). A run that stops
/// without converging still returns `Ok`; check `summary.outcome`.
///
/// # Safety
/// Pointers must be valid; `options` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn qn_minimize(
    problem: *const c_char,
    n: usize,
    family_name: *const c_char,
    potential: *const QnPotential,
    x0: *const f64,
    options: *const QnSolveOptions,
    x_out: *mut f64,
    summary: *mut QnSolveSummary,
) -> QnStatus {
    guard(|| {
        let kind: ProblemKind = string(problem, "problem")?.parse()?;
        let prob = make_problem(kind, n)?;
        let fam = family(family_name, potential)?;
        let opts = options.as_ref().copied().unwrap_or_else(|| qn_solve_options_default());
        let mut config = SolverConfig::new(fam);
        config.line_search = match opts.line_search {
            QnLineSearch::Wolfe => LineSearchParams::wolfe(),
            QnLineSearch::NearExact => LineSearchParams::near_exact(),
        };
        config.noise = NoiseConfig { h: opts.noise, advance: NoiseAdvance::Perturbed };
        config.seed = opts.seed;
        config.max_iter = opts.max_iter;
        config.grad_tol = (opts.grad_tol > 0.0).then_some(opts.grad_tol);
        config.keep_records = false;
        let trace = minimize(&prob, slice(x0, n, "x0")?, &config)?;
        slice_mut(x_out, n, "x_out")?.copy_from_slice(&trace.x);
        if summary.is_null() {
            return Err(Failure::Null("summary"));
        }
        *summary = QnSolveSummary {
            outcome: match trace.outcome {
                Outcome::Converged => QnOutcome::Converged,
                Outcome::MaxIter => QnOutcome::MaxIter,
                Outcome::LineSearchFailure => QnOutcome::LineSearchFailure,
            },
            iterations: trace.iterations,
            f: trace.f,
            grad_norm: trace.grad_norm,
        };
        Ok(())
    })
}
