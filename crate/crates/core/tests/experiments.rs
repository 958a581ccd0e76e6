use qn_core::experiments::{run_table2, run_table3, FamilyKind, Method, Setup, Table2Config, Table3Config};
use qn_core::linesearch::LineSearchParams;
use qn_core::problems::{make_problem, ProblemKind};
use qn_core::solver::{minimize, Outcome, SolverConfig};
use qn_core::UpdateFamily;

#[test]
fn small_quadratic_from_zero() {
    let problem = make_problem(ProblemKind::P1, 2).unwrap();
    let mut config = SolverConfig::new(Method::Bfgs.family());
    config.line_search = LineSearchParams::near_exact();
    let trace = minimize(&problem, &[0.0, 0.0], &config).unwrap();
    assert_eq!(trace.outcome, Outcome::Converged);
    assert!(trace.iterations <= 10);
    assert!((trace.x[0] - 1.0).abs() < 1e-6 && (trace.x[1] - 1.0).abs() < 1e-6);
}

#[test]
fn consistent_perturbation_gives_zero_influence() {
    let config = Table2Config { dims: vec![6], trials: 4, ybar_equals_y: true, ..Default::default() };
    let result = run_table2(&config).unwrap();
    for r in result.records.iter().filter(|r| r.setup != Setup::Spike) {
        assert!(r.approx_if.abs() < 1e-7, "{r:?}");
    }
}

#[test]
fn spike_b_columns_match_and_runs_repeat() {
    let config = Table2Config { dims: vec![10], trials: 5, setups: vec![Setup::Spike, Setup::DetOne], ..Default::default() };
    let a = run_table2(&config).unwrap();
    let b = run_table2(&config).unwrap();
    assert_eq!(a.records, b.records);
    for &g in &config.gammas {
        let x = a.mean(Setup::Spike, FamilyKind::VBfgsB, g, 10).unwrap();
        let y = a.mean(Setup::Spike, FamilyKind::VDfpB, g, 10).unwrap();
        // identical as eps -> 0; the finite perturbation leaves an O(eps) gap
        assert!((x - y).abs() <= 1e-3 * x, "{x} vs {y}");
    }
}

#[test]
fn neglog_bfgs_influence_ignores_the_prior_matrix() {
    // DetOne and Diag share their data, and -log BFGS-B does not depend on B_k
    let config = Table2Config { dims: vec![8], trials: 6, gammas: vec![0.0], ..Default::default() };
    let r = run_table2(&config).unwrap();
    let detone = r.mean(Setup::DetOne, FamilyKind::VBfgsB, 0.0, 8).unwrap();
    let diag = r.mean(Setup::Diag, FamilyKind::VBfgsB, 0.0, 8).unwrap();
    assert!((detone - diag).abs() < 1e-9 * detone);
}

#[test]
fn table3_noise_separates_bfgs_from_dfp() {
    let config = Table3Config { problems: vec![ProblemKind::P1], dims: vec![30], hs: vec![0.0, 0.3], runs: 3, ..Default::default() };
    let r = run_table3(&config).unwrap();
    let ratio = |m| r.mean(ProblemKind::P1, 30, 0.3, m).unwrap() / r.mean(ProblemKind::P1, 30, 0.0, m).unwrap();
    assert!(ratio(Method::Bfgs) < ratio(Method::Dfp));
    assert!(r.records.iter().all(|x| x.outcome == Outcome::Converged));
}

#[test]
fn broyden_mix_solves_p2() {
    let problem = make_problem(ProblemKind::P2, 20).unwrap();
    let family = UpdateFamily::from_name("broyden:theta=0.5,v1=neglog,v2=power:gamma=-1", qn_core::Potential::neg_log()).unwrap();
    let mut config = SolverConfig::new(family);
    config.keep_records = false;
    let trace = minimize(&problem, &[1.0; 20], &config).unwrap();
    assert_eq!(trace.outcome, Outcome::Converged);
}
