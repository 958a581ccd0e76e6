//! The `qn` command line.
//!
//! Every subcommand also reads a flat `key=value` config file (`--config`);
//! keys are flag names without the leading dashes and explicit flags win.
//! `--save-config` writes the effective settings back in the same format.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{QnError, Result};
use crate::experiments::{
    run_table2, run_table3, write_table2_csv, write_table2_means_csv, write_table3_csv, write_table3_means_csv,
    FamilyKind, Method, Setup, Table2Config, Table3Config,
};
use crate::linalg::{dot, scaled};
use crate::linesearch::LineSearchParams;
use crate::potential::{log_grid, Potential};
use crate::problems::{make_problem, ProblemKind};
use crate::rng::{normal_vec, stream_rng};
use crate::robustness::{
    adversarial_sequence, family_influence, perturbed_update, AdversarialKind, AdversarialParams,
};
use crate::solver::{minimize, NoiseAdvance, NoiseConfig, Outcome, SolverConfig};
use crate::update::UpdateFamily;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qn", version, about = "V-Bregman quasi-Newton updates, solver and robustness probes")]
pub struct Cli {
    /// Read flag defaults from a key=value file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the effective settings of the subcommand to a key=value file.
    #[arg(long, global = true, value_name = "FILE")]
    pub save_config: Option<PathBuf>,
    /// More diagnostics on standard error.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize a benchmark objective.
    #[command(args_override_self = true)]
    Solve(SolveArgs),
    /// Closed-form influence against finite differences along an adversarial sequence.
    #[command(args_override_self = true)]
    Influence(InfluenceArgs),
    /// Reproduce the experiment tables.
    #[command(subcommand)]
    Repro(Repro),
    /// Check the potential conditions on a grid.
    #[command(args_override_self = true)]
    Validate(ValidateArgs),
}

#[derive(Debug, Subcommand)]
pub enum Repro {
    #[command(args_override_self = true)]
    Table2(Table2Args),
    #[command(args_override_self = true)]
    Table3(Table3Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LsArg {
    Wolfe,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StartArg {
    /// `x0 ~ N(0, 10 I)` from the seed.
    Random,
    Zero,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct LsFlags {
    #[arg(long, value_enum, default_value = "wolfe")]
    pub ls: LsArg,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub tolx: Option<f64>,
}

impl LsFlags {
    fn params(&self) -> Result<LineSearchParams> {
        let mut p = match self.ls {
            LsArg::Wolfe => LineSearchParams::wolfe(),
            LsArg::Exact => LineSearchParams::near_exact(),
        };
        if let Some(c1) = self.c1 {
            p.c1 = c1;
        }
        if let Some(c2) = self.c2 {
            p.c2 = c2;
        }
        if let Some(t) = self.tolx {
            p.tol_x = t;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolveArgs {
    #[arg(long, default_value = "p1")]
    pub problem: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value = "vbfgs-b")]
    pub family: String,
    #[arg(long, default_value = "neglog")]
    pub potential: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub ls: LsFlags,
    /// Step noise level: `s~ = (1 + eps) s`, `eps ~ U[-h, h]`.
    #[arg(long, default_value_t = 0.0)]
    pub h: f64,
    #[arg(long, default_value = "perturbed")]
    pub noise_advance: String,
    #[arg(long, value_enum, default_value = "random")]
    pub x0: StartArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    /// Defaults to `n * 1e-5`.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Write the iteration trace as JSON.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct InfluenceArgs {
    #[arg(long, default_value = "vbfgs-b")]
    pub family: String,
    #[arg(long, default_value = "neglog")]
    pub potential: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value = "fixed-det")]
    pub probe: String,
    /// Determinant kept by the fixed-det probe.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    /// Sequence parameters.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "1,10,100,1000")]
    pub a: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Table2Args {
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "10,100")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "-2,-1,0", allow_hyphen_values = true)]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "detone,diag,spike")]
    pub setups: Vec<String>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "vbfgs-b,vdfp-b,vbfgs-h,vdfp-h")]
    pub families: Vec<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Per-trial CSV; the means go next to it as `<stem>_means.csv`.
    #[arg(long, default_value = "table2.csv")]
    pub out: PathBuf,
    /// Add the n = 500 and n = 1000 cells.
    #[arg(long)]
    pub full: bool,
    /// Debug mode: perturb along `y` itself.
    #[arg(long)]
    pub ybar_equals_y: bool,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Table3Args {
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "p1,p2")]
    pub problems: Vec<String>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "100")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "0,0.1,0.2,0.3")]
    pub hs: Vec<f64>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "bfgs,dfp")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "exact")]
    pub ls: String,
    #[arg(long)]
    pub tolx: Option<f64>,
    #[arg(long, default_value = "perturbed")]
    pub noise_advance: String,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    #[arg(long, default_value = "table3.csv")]
    pub out: PathBuf,
    /// Add the n = 500 and n = 1000 cells.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ValidateArgs {
    #[arg(long, default_value = "neglog")]
    pub potential: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 1e8)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
}

impl Command {
    fn settings(&self) -> Value {
        match self {
            Command::Solve(a) => serde_json::to_value(a),
            Command::Influence(a) => serde_json::to_value(a),
            Command::Repro(Repro::Table2(a)) => serde_json::to_value(a),
            Command::Repro(Repro::Table3(a)) => serde_json::to_value(a),
            Command::Validate(a) => serde_json::to_value(a),
        }
        .expect("argument structs serialize")
    }

    fn path(&self) -> &'static [&'static str] {
        match self {
            Command::Solve(_) => &["solve"],
            Command::Influence(_) => &["influence"],
            Command::Repro(Repro::Table2(_)) => &["repro", "table2"],
            Command::Repro(Repro::Table3(_)) => &["repro", "table3"],
            Command::Validate(_) => &["validate"],
        }
    }
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(items.iter().filter_map(value_text).collect::<Vec<_>>().join(",")),
        other => Some(other.to_string()),
    }
}

/// Settings as `key=value` lines, in declaration order.
pub fn config_text(command: &Command) -> String {
    let mut out = format!("# qn {}\n", command.path().join(" "));
    if let Value::Object(map) = command.settings() {
        for (k, v) in map {
            if let Some(text) = value_text(&v) {
                out.push_str(&format!("{k}={text}\n"));
            }
        }
    }
    out
}

/// Turns `key=value` lines into flags. Blank lines and `#` comments are skipped.
pub fn config_flags(text: &str) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| QnError::Parse(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') {
            return Err(QnError::Parse(format!("config line {}: bad key {key:?}", i + 1)));
        }
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => flags.push(format!("--{key}={value}")),
        }
    }
    Ok(flags)
}

fn parse_cli(argv: &[String]) -> std::result::Result<Cli, clap::Error> {
    let cli = Cli::try_parse_from(argv)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        clap::Error::raw(clap::error::ErrorKind::Io, format!("cannot read config {}: {e}\n", path.display()))
    })?;
    let flags = config_flags(&text)
        .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{e}\n")))?;
    // file flags go right after the subcommand so that explicit flags override them
    let mut at = 1;
    for name in cli.command.path() {
        at = argv[at..].iter().position(|a| a == name).map(|p| at + p + 1).unwrap_or(argv.len());
    }
    let mut merged = argv[..at].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&argv[at..]);
    Cli::try_parse_from(&merged)
}

fn exit_code(err: &QnError) -> i32 {
    match err {
        QnError::Parse(_)
        | QnError::InvalidArgument(_)
        | QnError::InvalidPotential(_)
        | QnError::DimensionMismatch { .. }
        | QnError::UnsupportedFamily(_)
        | QnError::Io(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("QN_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(QnError::InvalidArgument(format!("QN_THREADS must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}

/// Entry point; returns the process exit code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match parse_cli(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let invocation = argv.join(" ");
    let result = threads_from_env().and_then(|threads| {
        if let Some(path) = &cli.save_config {
            std::fs::write(path, config_text(&cli.command))?;
        }
        let work = || dispatch(&cli, &invocation);
        match threads {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| QnError::InvalidArgument(e.to_string()))?
                .install(work),
            None => work(),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qn: error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli, invocation: &str) -> Result<i32> {
    match &cli.command {
        Command::Solve(a) => solve(a, cli.verbose, invocation),
        Command::Influence(a) => influence(a, invocation),
        Command::Repro(Repro::Table2(a)) => table2(a, cli.verbose, invocation),
        Command::Repro(Repro::Table3(a)) => table3(a, cli.verbose, invocation),
        Command::Validate(a) => validate(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn header_comment(invocation: &str, seed: u64) -> String {
    format!("invocation: {invocation}\nseed: {seed}")
}

fn solve(a: &SolveArgs, verbose: u8, invocation: &str) -> Result<i32> {
    let kind: ProblemKind = a.problem.parse()?;
    let problem = make_problem(kind, a.n)?;
    let potential: Potential = a.potential.parse()?;
    let family = UpdateFamily::from_name(&a.family, potential)?;
    let mut config = SolverConfig::new(family);
    config.line_search = a.ls.params()?;
    config.noise = NoiseConfig { h: a.h, advance: a.noise_advance.parse::<NoiseAdvance>()? };
    config.seed = a.seed;
    config.max_iter = a.max_iter;
    config.grad_tol = a.grad_tol;
    config.keep_records = a.trace.is_some();
    let x0 = match a.x0 {
        StartArg::Zero => vec![0.0; a.n],
        StartArg::Random => normal_vec(&mut stream_rng(a.seed, &[0x5015e]), a.n, 10f64.sqrt()),
    };
    let trace = minimize(&problem, &x0, &config)?;
    for w in &trace.warnings {
        eprintln!("qn: warning: {w}");
    }
    println!("outcome: {}", trace.outcome);
    println!("iterations: {}", trace.iterations);
    println!("f: {:.12e}", trace.f);
    println!("grad_norm: {:.6e}", trace.grad_norm);
    if verbose > 0 {
        eprintln!("curvature skips: {}", trace.curvature_skips);
    }
    if let Some(path) = &a.trace {
        let mut header = config.to_json(a.n);
        header["problem"] = json!(kind.to_string());
        header["n"] = json!(a.n);
        header["x0"] = json!(a.x0);
        header["invocation"] = json!(invocation);
        let doc = json!({
            "header": header,
            "records": trace.records,
            "outcome": trace.outcome,
            "iterations": trace.iterations,
            "f": trace.f,
            "grad_norm": trace.grad_norm,
            "curvature_skips": trace.curvature_skips,
            "warnings": trace.warnings,
            "x": trace.x,
        });
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &doc)?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok(match trace.outcome {
        Outcome::Converged => EXIT_OK,
        other => {
            eprintln!("qn: solver stopped without converging ({other}), grad norm {:e}", trace.grad_norm);
            EXIT_NUMERIC
        }
    })
}

fn influence(a: &InfluenceArgs, invocation: &str) -> Result<i32> {
    const EPS: f64 = 1e-4;
    let potential: Potential = a.potential.parse()?;
    let family = UpdateFamily::from_name(&a.family, potential)?;
    family.validate_for_dim(a.n)?;
    let kind: AdversarialKind = a.probe.parse()?;
    let mut rng = stream_rng(a.seed, &[0x1f]);
    let std = 10f64.sqrt();
    let s = normal_vec(&mut rng, a.n, std);
    let mut y = normal_vec(&mut rng, a.n, std);
    if dot(&s, &y) <= 0.0 {
        y = scaled(&y, -1.0);
    }
    let y_bar = normal_vec(&mut rng, a.n, 1.0);
    // the sequence is of B for B-families and of H for H-families
    let (u, v) = if family.is_inverse() { (&y, &s) } else { (&s, &y) };
    let params = AdversarialParams { d: a.d, seed: a.seed, excite: Some(y_bar.clone()), ..AdversarialParams::new(a.a.clone()) };
    let seq = adversarial_sequence(kind, u, v, &[], &params)?;

    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "# {}", header_comment(invocation, a.seed).replace('\n', "\n# "))?;
    writeln!(out, "# family: {family}, probe: {kind}, n: {}", a.n)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["probe_param", "closed_form_norm", "fd_norm_eps1e-4", "agreement"])?;
    for (param, m) in a.a.iter().zip(&seq) {
        let closed = match family_influence(&family, m, &s, &y, &y_bar) {
            Ok(c) => Some(c.frobenius()),
            Err(QnError::UnsupportedFamily(_)) => None,
            Err(e) => return Err(e),
        };
        let fd = perturbed_update(&family, m, &s, &y, &y_bar, EPS)?.approx_if;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([param.to_string(), fmt(closed), format!("{fd:e}"), fmt(closed.map(|c| fd / c))])?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn parse_list<T: std::str::FromStr<Err = QnError>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.parse()).collect()
}

fn table2(a: &Table2Args, verbose: u8, invocation: &str) -> Result<i32> {
    let mut dims = a.dims.clone();
    if a.full {
        dims.extend([500, 1000].iter().filter(|n| !a.dims.contains(n)));
    }
    let setups = a
        .setups
        .iter()
        .map(|s| match s.trim() {
            "detone" => Ok(Setup::DetOne),
            "diag" => Ok(Setup::Diag),
            "spike" => Ok(Setup::Spike),
            other => Err(QnError::Parse(format!("unknown setup {other:?} (detone, diag, spike)"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let config = Table2Config {
        dims,
        setups,
        gammas: a.gammas.clone(),
        families: parse_list::<FamilyKind>(&a.families)?,
        trials: a.trials,
        seed: a.seed,
        ybar_equals_y: a.ybar_equals_y,
    };
    let started = std::time::Instant::now();
    let result = run_table2(&config)?;
    if verbose > 0 {
        eprintln!("table2: {} records in {:.2?}", result.records.len(), started.elapsed());
    }
    let comment = header_comment(invocation, a.seed);
    write_table2_csv(create(&a.out)?, &comment, &result)?;
    let means_path = sibling(&a.out, "_means", "csv");
    write_table2_means_csv(create(&means_path)?, &comment, &config, &result)?;
    write_table2_means_csv(std::io::stdout().lock(), &comment, &config, &result)?;
    if a.gnuplot {
        write_gnuplot_table2(&sibling(&a.out, "", "gp"), &a.out)?;
    }
    let failures: usize = result.means.iter().map(|m| m.failures).sum();
    if failures > 0 {
        eprintln!("qn: {failures} trial updates failed; see the error column of the records");
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn table3(a: &Table3Args, verbose: u8, invocation: &str) -> Result<i32> {
    let mut dims = a.dims.clone();
    if a.full {
        dims.extend([500, 1000].iter().filter(|n| !a.dims.contains(n)));
    }
    let mut line_search = match a.ls.as_str() {
        "exact" => LineSearchParams::near_exact(),
        "wolfe" => LineSearchParams::wolfe(),
        other => return Err(QnError::Parse(format!("unknown line search {other:?} (wolfe, exact)"))),
    };
    if let Some(t) = a.tolx {
        line_search.tol_x = t;
    }
    let config = Table3Config {
        problems: parse_list::<ProblemKind>(&a.problems)?,
        dims,
        hs: a.hs.clone(),
        methods: parse_list::<Method>(&a.methods)?,
        runs: a.runs,
        seed: a.seed,
        line_search,
        noise_advance: a.noise_advance.parse()?,
        max_iter: a.max_iter,
    };
    let started = std::time::Instant::now();
    let result = run_table3(&config)?;
    if verbose > 0 {
        eprintln!("table3: {} runs in {:.2?}", result.records.len(), started.elapsed());
    }
    let comment = header_comment(invocation, a.seed);
    write_table3_csv(create(&a.out)?, &comment, &result)?;
    let means_path = sibling(&a.out, "_means", "csv");
    write_table3_means_csv(create(&means_path)?, &comment, &config, &result)?;
    write_table3_means_csv(std::io::stdout().lock(), &comment, &config, &result)?;
    if a.gnuplot {
        write_gnuplot_table3(&sibling(&a.out, "", "gp"), &means_path, &config)?;
    }
    let stuck: usize = result.means.iter().map(|m| m.not_converged).sum();
    if stuck > 0 {
        eprintln!("qn: {stuck} runs did not converge; see the outcome column");
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn write_gnuplot_table2(script: &Path, data: &Path) -> Result<()> {
    let data = data.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = create(script)?;
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set logscale y")?;
    writeln!(out, "set xlabel 'trial'")?;
    writeln!(out, "set ylabel 'approximate influence'")?;
    writeln!(out, "set key outside")?;
    writeln!(out, "plot for [g in \"-2 -1 0\"] '{data}' every ::1 using 5:(strcol(3) eq g ? $6 : 1/0) with points title 'gamma='.g")?;
    out.flush()?;
    Ok(())
}

fn write_gnuplot_table3(script: &Path, means: &Path, config: &Table3Config) -> Result<()> {
    let data = means.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = create(script)?;
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set xlabel 'h'")?;
    writeln!(out, "set ylabel 'mean iterations'")?;
    let plots: Vec<String> = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| format!("'{data}' every ::1 using 3:{} with linespoints title '{m}'", 4 + i))
        .collect();
    writeln!(out, "plot {}", plots.join(", "))?;
    out.flush()?;
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<i32> {
    if a.n == 0 {
        return Err(QnError::InvalidArgument("n must be >= 1".into()));
    }
    if !(a.grid_lo > 0.0 && a.grid_hi > a.grid_lo) || a.grid_points < 2 {
        return Err(QnError::InvalidArgument("grid needs 0 < grid-lo < grid-hi and >= 2 points".into()));
    }
    let potential: Potential = a.potential.parse()?;
    let report = potential.validate(a.n, &log_grid(a.grid_lo, a.grid_hi, a.grid_points));
    print!("{report}");
    Ok(if report.passed() { EXIT_OK } else { EXIT_NUMERIC })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn config_round_trip() {
        let cli = Cli::try_parse_from(argv("qn repro table2 --dims 10 --gammas=-1,0 --full --seed 5")).unwrap();
        let text = config_text(&cli.command);
        let mut v = argv("qn repro table2");
        v.extend(config_flags(&text).unwrap());
        let again = Cli::try_parse_from(&v).unwrap();
        assert_eq!(cli.command.settings(), again.command.settings());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# comment\nn=7\npotential=power:gamma=-1\n").unwrap();
        let v = argv(&format!("qn validate --n 3 --config {}", path.display()));
        let cli = parse_cli(&v).unwrap();
        let Command::Validate(a) = cli.command else { panic!() };
        assert_eq!(a.n, 3);
        assert_eq!(a.potential, "power:gamma=-1");
    }

    #[test]
    fn bad_config_lines() {
        assert!(config_flags("no equals sign").is_err());
        assert!(config_flags("--x=1").is_err());
        assert_eq!(config_flags("full=false\nfull2=true").unwrap(), vec!["--full2".to_string()]);
    }
}
