//! Monte Carlo harnesses for the approximate influence study and the noisy
//! line-search iteration study.
//!
//! Each trial owns a random stream keyed by the master seed and its
//! coordinates, so the records do not depend on how rayon schedules them.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QnError, Result};
use crate::linalg::{dot, norm, orthonormalize_against, scaled};
use crate::linesearch::LineSearchParams;
use crate::potential::Potential;
use crate::problems::{make_problem, ProblemKind};
use crate::rng::{normal_vec, stream_id, stream_rng, uniform};
use crate::robustness::perturbed_update;
use crate::solver::{minimize, NoiseAdvance, NoiseConfig, Outcome, SolverConfig};
use crate::spd::SpdCholesky;
use crate::update::UpdateFamily;

const RESAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Setup {
    /// `diag(1..n) / (n!)^{1/n}`, unit determinant.
    DetOne,
    /// `diag(1..n)`
    Diag,
    /// `I + n^3 p p'` with `p` a unit vector orthogonal to `y = s`.
    Spike,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::DetOne, Setup::Diag, Setup::Spike];

    fn id(self) -> u64 {
        match self {
            Setup::DetOne => 1,
            Setup::Diag => 2,
            Setup::Spike => 3,
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::DetOne => "detone",
            Setup::Diag => "diag",
            Setup::Spike => "spike",
        })
    }
}

impl FromStr for Setup {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "detone" => Ok(Setup::DetOne),
            "diag" => Ok(Setup::Diag),
            "spike" => Ok(Setup::Spike),
            other => Err(QnError::Parse(format!("unknown setup {other:?}"))),
        }
    }
}

/// The four single-potential families, without their potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FamilyKind {
    VBfgsB,
    VDfpB,
    VBfgsH,
    VDfpH,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [FamilyKind::VBfgsB, FamilyKind::VDfpB, FamilyKind::VBfgsH, FamilyKind::VDfpH];

    pub fn with(self, p: Potential) -> UpdateFamily {
        match self {
            FamilyKind::VBfgsB => UpdateFamily::VBfgsB(p),
            FamilyKind::VDfpB => UpdateFamily::VDfpB(p),
            FamilyKind::VBfgsH => UpdateFamily::VBfgsH(p),
            FamilyKind::VDfpH => UpdateFamily::VDfpH(p),
        }
    }

    pub fn is_inverse(self) -> bool {
        matches!(self, FamilyKind::VBfgsH | FamilyKind::VDfpH)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.with(Potential::neg_log()).name())
    }
}

impl FromStr for FamilyKind {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vbfgs-b" => Ok(FamilyKind::VBfgsB),
            "vdfp-b" => Ok(FamilyKind::VDfpB),
            "vbfgs-h" => Ok(FamilyKind::VBfgsH),
            "vdfp-h" => Ok(FamilyKind::VDfpH),
            other => Err(QnError::Parse(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table2Config {
    pub dims: Vec<usize>,
    pub setups: Vec<Setup>,
    pub gammas: Vec<f64>,
    pub families: Vec<FamilyKind>,
    pub trials: usize,
    pub seed: u64,
    /// Replace `ybar` by `y` (the perturbation then leaves every update
    /// unchanged).
    pub ybar_equals_y: bool,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            dims: vec![10, 100],
            setups: Setup::ALL.to_vec(),
            gammas: vec![-2.0, -1.0, 0.0],
            families: FamilyKind::ALL.to_vec(),
            trials: 20,
            seed: 42,
            ybar_equals_y: false,
        }
    }
}

impl Table2Config {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(QnError::InvalidArgument("trials must be >= 1".into()));
        }
        if let Some(n) = self.dims.iter().find(|&&n| n < 3) {
            return Err(QnError::InvalidArgument(format!("dimensions must be >= 3, got {n}")));
        }
        for &g in &self.gammas {
            for &n in &self.dims {
                Potential::power_for_dim(g, n)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Record {
    pub setup: Setup,
    pub family: FamilyKind,
    pub gamma: f64,
    pub n: usize,
    pub trial: usize,
    /// `NaN` when the trial failed; see `error`.
    pub approx_if: f64,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Mean {
    pub setup: Setup,
    pub family: FamilyKind,
    pub gamma: f64,
    pub n: usize,
    pub mean: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct Table2Result {
    pub records: Vec<Table2Record>,
    pub means: Vec<Table2Mean>,
}

impl Table2Result {
    pub fn mean(&self, setup: Setup, family: FamilyKind, gamma: f64, n: usize) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.setup == setup && m.family == family && m.gamma == gamma && m.n == n)
            .map(|m| m.mean)
    }
}

/// Data shared by every (family, gamma) cell of one trial.
struct TrialData {
    b: SpdCholesky,
    s: Vec<f64>,
    y: Vec<f64>,
    y_bar: Vec<f64>,
    eps: f64,
}

fn det_one_diag(n: usize) -> Vec<f64> {
    // (n!)^{1/n} through logs
    let log_fact: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    let scale = (-log_fact / n as f64).exp();
    (1..=n).map(|i| i as f64 * scale).collect()
}

fn trial_data(setup: Setup, n: usize, rng: &mut rand_chacha::ChaCha8Rng, ybar_equals_y: bool) -> Result<TrialData> {
    let std = 10f64.sqrt();
    let s = normal_vec(rng, n, std);
    match setup {
        Setup::DetOne | Setup::Diag => {
            let mut y = normal_vec(rng, n, std);
            if dot(&s, &y) <= 0.0 {
                y = scaled(&y, -1.0);
            }
            let diag: Vec<f64> = match setup {
                Setup::DetOne => det_one_diag(n),
                _ => (1..=n).map(|i| i as f64).collect(),
            };
            for _ in 0..RESAMPLE_CAP {
                let eps = uniform(rng, -0.2, 0.2);
                let y_bar = if ybar_equals_y { y.clone() } else { normal_vec(rng, n, 1.0) };
                let sy = (1.0 + eps) * (dot(&s, &y) + eps * dot(&s, &y_bar));
                if sy > 0.0 && eps != 0.0 {
                    return Ok(TrialData { b: SpdCholesky::from_diag(&diag)?, s, y, y_bar, eps });
                }
            }
            Err(QnError::NonConvergence { iterations: RESAMPLE_CAP, residual: f64::NAN })
        }
        Setup::Spike => {
            let y = s.clone();
            let unit_y = scaled(&y, 1.0 / norm(&y));
            let p = loop {
                if let Some(p) = orthonormalize_against(&normal_vec(rng, n, 1.0), std::slice::from_ref(&unit_y)) {
                    break p;
                }
            };
            let eps = loop {
                let e = uniform(rng, -0.2, 0.2);
                if e != 0.0 {
                    break e;
                }
            };
            let b = SpdCholesky::identity(n).rank_one_modify(&scaled(&p, (n as f64).powf(1.5)), crate::spd::Sign::Plus)?;
            let y_bar = if ybar_equals_y { y.clone() } else { p };
            Ok(TrialData { b, s, y, y_bar, eps })
        }
    }
}

pub fn run_table2(config: &Table2Config) -> Result<Table2Result> {
    config.validate()?;
    let mut tasks = Vec::new();
    for &n in &config.dims {
        for &setup in &config.setups {
            for trial in 0..config.trials {
                tasks.push((setup, n, trial));
            }
        }
    }
    let per_trial: Vec<Vec<Table2Record>> = tasks
        .par_iter()
        .map(|&(setup, n, trial)| {
            // DetOne and Diag differ only in B_k, so they share one data stream per trial
            let stream = if setup == Setup::Spike { setup.id() } else { 0 };
            let ids = [stream, n as u64, trial as u64];
            let trial_seed = stream_id(&ids);
            let mut rng = stream_rng(config.seed, &ids);
            let data = trial_data(setup, n, &mut rng, config.ybar_equals_y);
            let mut out = Vec::new();
            for &family in &config.families {
                for &gamma in &config.gammas {
                    let res = data.as_ref().map_err(|e| e.clone()).and_then(|d| {
                        // the setup matrix is B_k for -b families and H_k for -h families
                        let fam = family.with(Potential::power(gamma)?);
                        perturbed_update(&fam, &d.b, &d.s, &d.y, &d.y_bar, d.eps).map(|p| p.approx_if)
                    });
                    let (approx_if, error) = match res {
                        Ok(v) => (v, None),
                        Err(e) => (f64::NAN, Some(e.to_string())),
                    };
                    out.push(Table2Record { setup, family, gamma, n, trial, approx_if, seed: trial_seed, error });
                }
            }
            out
        })
        .collect();

    let records: Vec<Table2Record> = per_trial.into_iter().flatten().collect();
    let mut means = Vec::new();
    for &n in &config.dims {
        for &setup in &config.setups {
            for &family in &config.families {
                for &gamma in &config.gammas {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| r.n == n && r.setup == setup && r.family == family && r.gamma == gamma)
                        .map(|r| r.approx_if)
                        .collect();
                    let ok: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
                    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
                    means.push(Table2Mean { setup, family, gamma, n, mean, failures: vals.len() - ok.len() });
                }
            }
        }
    }
    Ok(Table2Result { records, means })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// Standard BFGS: V-BFGS-B with the `-log` potential.
    Bfgs,
    /// Standard DFP: V-DFP-B with the `-log` potential.
    Dfp,
}

impl Method {
    pub fn family(self) -> UpdateFamily {
        match self {
            Method::Bfgs => UpdateFamily::VBfgsB(Potential::neg_log()),
            Method::Dfp => UpdateFamily::VDfpB(Potential::neg_log()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bfgs => "bfgs",
            Method::Dfp => "dfp",
        })
    }
}

impl FromStr for Method {
    type Err = QnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bfgs" => Ok(Method::Bfgs),
            "dfp" => Ok(Method::Dfp),
            other => Err(QnError::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table3Config {
    pub problems: Vec<ProblemKind>,
    pub dims: Vec<usize>,
    pub hs: Vec<f64>,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub seed: u64,
    pub line_search: LineSearchParams,
    pub noise_advance: NoiseAdvance,
    pub max_iter: usize,
}

impl Default for Table3Config {
    fn default() -> Self {
        Self {
            problems: vec![ProblemKind::P1, ProblemKind::P2],
            dims: vec![100],
            hs: vec![0.0, 0.1, 0.2, 0.3],
            methods: vec![Method::Bfgs, Method::Dfp],
            runs: 20,
            seed: 42,
            line_search: LineSearchParams::near_exact(),
            noise_advance: NoiseAdvance::Perturbed,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Record {
    pub problem: ProblemKind,
    pub n: usize,
    pub h: f64,
    pub method: Method,
    pub run: usize,
    pub iterations: usize,
    pub outcome: Outcome,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Mean {
    pub problem: ProblemKind,
    pub n: usize,
    pub h: f64,
    pub method: Method,
    pub mean_iterations: f64,
    /// Runs that did not converge.
    pub not_converged: usize,
}

#[derive(Debug, Clone)]
pub struct Table3Result {
    pub records: Vec<Table3Record>,
    pub means: Vec<Table3Mean>,
}

impl Table3Result {
    pub fn mean(&self, problem: ProblemKind, n: usize, h: f64, method: Method) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.problem == problem && m.n == n && m.h == h && m.method == method)
            .map(|m| m.mean_iterations)
    }
}

fn problem_id(p: ProblemKind) -> u64 {
    match p {
        ProblemKind::P1 => 1,
        ProblemKind::P2 => 2,
    }
}

pub fn run_table3(config: &Table3Config) -> Result<Table3Result> {
    if config.runs == 0 {
        return Err(QnError::InvalidArgument("runs must be >= 1".into()));
    }
    if let Some(h) = config.hs.iter().find(|h| !(**h >= 0.0)) {
        return Err(QnError::InvalidArgument(format!("noise levels must be >= 0, got {h}")));
    }
    config.line_search.validate()?;
    let mut tasks = Vec::new();
    for &problem in &config.problems {
        for &n in &config.dims {
            for (hi, &h) in config.hs.iter().enumerate() {
                for &method in &config.methods {
                    for run in 0..config.runs {
                        tasks.push((problem, n, hi, h, method, run));
                    }
                }
            }
        }
    }
    let records: Vec<Table3Record> = tasks
        .par_iter()
        .map(|&(problem, n, hi, h, method, run)| {
            // same start for every h and method of a run
            let mut start_rng = stream_rng(config.seed, &[problem_id(problem), n as u64, run as u64]);
            let x0 = normal_vec(&mut start_rng, n, 10f64.sqrt());
            let seed = stream_id(&[config.seed, problem_id(problem), n as u64, hi as u64, method as u64, run as u64]);
            let cfg = SolverConfig {
                line_search: config.line_search,
                max_iter: config.max_iter,
                noise: NoiseConfig { h, advance: config.noise_advance },
                seed,
                keep_records: false,
                ..SolverConfig::new(method.family())
            };
            let res = make_problem(problem, n).and_then(|p| minimize(&p, &x0, &cfg));
            match res {
                Ok(t) => Table3Record { problem, n, h, method, run, iterations: t.iterations, outcome: t.outcome, seed, error: None },
                Err(e) => Table3Record {
                    problem,
                    n,
                    h,
                    method,
                    run,
                    iterations: 0,
                    outcome: Outcome::LineSearchFailure,
                    seed,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut means = Vec::new();
    for &problem in &config.problems {
        for &n in &config.dims {
            for &h in &config.hs {
                for &method in &config.methods {
                    let cell: Vec<&Table3Record> = records
                        .iter()
                        .filter(|r| r.problem == problem && r.n == n && r.h == h && r.method == method)
                        .collect();
                    let mean = cell.iter().map(|r| r.iterations as f64).sum::<f64>() / cell.len() as f64;
                    let not_converged = cell.iter().filter(|r| r.outcome != Outcome::Converged).count();
                    means.push(Table3Mean { problem, n, h, method, mean_iterations: mean, not_converged });
                }
            }
        }
    }
    Ok(Table3Result { records, means })
}

fn comment_line<W: Write>(out: &mut W, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

pub fn write_table2_csv<W: Write>(mut out: W, comment: &str, result: &Table2Result) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setup", "family", "gamma", "n", "trial", "approx_if"])?;
    for r in &result.records {
        w.write_record([
            r.setup.to_string(),
            r.family.to_string(),
            r.gamma.to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            format!("{:e}", r.approx_if),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (n, setup, family), one column per gamma.
pub fn write_table2_means_csv<W: Write>(mut out: W, comment: &str, config: &Table2Config, result: &Table2Result) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "setup".into(), "family".into()];
    header.extend(config.gammas.iter().map(|g| format!("gamma={g}")));
    w.write_record(&header)?;
    for &n in &config.dims {
        for &setup in &config.setups {
            for &family in &config.families {
                let mut row = vec![n.to_string(), setup.to_string(), family.to_string()];
                for &g in &config.gammas {
                    let m = result.mean(setup, family, g, n).unwrap_or(f64::NAN);
                    row.push(format!("{m:.1e}"));
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_table3_csv<W: Write>(mut out: W, comment: &str, result: &Table3Result) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["problem", "n", "h", "method", "run", "iterations", "outcome"])?;
    for r in &result.records {
        w.write_record([
            r.problem.to_string(),
            r.n.to_string(),
            r.h.to_string(),
            r.method.to_string(),
            r.run.to_string(),
            r.iterations.to_string(),
            r.outcome.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (problem, n, h), one column per method.
pub fn write_table3_means_csv<W: Write>(mut out: W, comment: &str, config: &Table3Config, result: &Table3Result) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["problem".to_string(), "n".into(), "h".into()];
    header.extend(config.methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for &problem in &config.problems {
        for &n in &config.dims {
            for &h in &config.hs {
                let mut row = vec![problem.to_string(), n.to_string(), h.to_string()];
                for &m in &config.methods {
                    row.push(format!("{:.1}", result.mean(problem, n, h, m).unwrap_or(f64::NAN)));
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
