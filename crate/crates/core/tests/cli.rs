use std::path::Path;
use std::process::{Command, Output};

fn qn(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qn"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("QN_THREADS", t),
        None => cmd.env_remove("QN_THREADS"),
    };
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_examples() {
    let o = qn(&["validate", "--potential", "neglog", "--n", "10"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("pass"));

    let o = qn(&["validate", "--potential", "power:gamma=0.25", "--n", "4"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("beta < 1/n violated"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qn(&["solve", "--bogus"], None).status.code(), Some(1));
    assert_eq!(qn(&["validate", "--potential", "quadratic"], None).status.code(), Some(1));
    assert_eq!(qn(&["validate"], Some("zero")).status.code(), Some(1));
    assert_eq!(qn(&["--help"], None).status.code(), Some(0));
}

#[test]
fn solve_reference_run_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let o = qn(
        &[
            "solve", "--problem", "p1", "--n", "2", "--family", "vbfgs-b", "--potential", "neglog", "--ls", "exact",
            "--trace", trace.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let grad: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("grad_norm: "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(grad <= 2e-5);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(doc["outcome"], "converged");
    assert_eq!(doc["header"]["family"], "vbfgs-b");
    assert_eq!(doc["header"]["line_search"]["mode"], "near-exact");
    assert!(!doc["records"].as_array().unwrap().is_empty());
    let x = doc["x"].as_array().unwrap();
    assert!((x[0].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn influence_csv_layout() {
    let o = qn(
        &["influence", "--family", "vbfgs-b", "--potential", "power:gamma=-1", "--n", "10", "--probe", "fixed-det", "--d", "1", "--a", "1,10,100,1000", "--seed", "7"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "probe_param,closed_form_norm,fd_norm_eps1e-4,agreement");
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let agreement: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((agreement - 1.0).abs() < 1e-2);
    }
}

fn repro_table2(dir: &Path, threads: &str) -> (String, String) {
    let out = dir.join(format!("t2_{threads}.csv"));
    let cfg = dir.join(format!("t2_{threads}.cfg"));
    let o = qn(
        &[
            "repro", "table2", "--dims", "5", "--trials", "3", "--seed", "9", "--out", out.to_str().unwrap(),
            "--gnuplot", "--save-config", cfg.to_str().unwrap(),
        ],
        Some(threads),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let body = |p: &Path| {
        std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("# invocation")).collect::<Vec<_>>().join("\n")
    };
    (body(&out), body(&dir.join(format!("t2_{threads}_means.csv"))))
}

#[test]
fn table2_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = repro_table2(dir.path(), "1");
    let four = repro_table2(dir.path(), "4");
    assert_eq!(one, four);
    assert!(one.0.contains("setup,family,gamma,n,trial,approx_if"));
    assert!(one.0.contains("# seed: 9"));
    assert!(dir.path().join("t2_1.gp").exists());

    // the saved config reproduces the run
    let cfg = dir.path().join("t2_1.cfg");
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("trials=3"));
    let replay = dir.path().join("replay.csv");
    let o = qn(&["repro", "table2", "--config", cfg.to_str().unwrap(), "--out", replay.to_str().unwrap()], Some("2"));
    assert_eq!(o.status.code(), Some(0));
    let replay_body: Vec<String> = std::fs::read_to_string(&replay)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# invocation"))
        .map(String::from)
        .collect();
    assert_eq!(replay_body.join("\n"), one.0);
}

#[test]
fn table3_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t3.csv");
    let o = qn(
        &["repro", "table3", "--problems", "p1", "--dims", "10", "--hs", "0,0.3", "--runs", "2", "--seed", "3", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("problem,n,h,method,run,iterations,outcome"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",converged")).count(), 8);
    let means = std::fs::read_to_string(dir.path().join("t3_means.csv")).unwrap();
    assert!(means.contains("problem,n,h,bfgs,dfp"));
}
