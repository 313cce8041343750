use std::path::Path;
use std::process::Command;

use bubbler::emit::{parse_report, report_json};
use bubbler::pipeline::Status;
use bubbler::{emit, parse_config_str, run_pipeline, Stage};

const M1: &str = r#"{"alpha": 0.5, "m": 1, "t_ladder": [20, 40, 80], "quadrature_budget": 50000, "seed": 3}"#;
const M0_SOLVE: &str = r#"{"alpha": 0.0, "m": 0, "t_ladder": [5, 20, 40], "grid_n": 512, "quadrature_budget": 50000}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_binary(args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bubbler"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn report_round_trips_through_json() {
    let cfg = parse_config_str(M1).unwrap();
    let out = run_pipeline(&cfg, Stage::Verify, false);
    let text = report_json(&out.report);
    assert_eq!(parse_report(&text).unwrap(), out.report);
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let cfg = parse_config_str(M1).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit(&run_pipeline(&cfg, Stage::All, false), a.path()).unwrap();
    emit(&run_pipeline(&cfg, Stage::All, false), b.path()).unwrap();
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "report.json"), read(b.path(), "report.json"));
    for name in ["ladder", "trace_t20", "fields_t40"] {
        let f = format!("tables/{name}.csv");
        assert_eq!(read(a.path(), &f), read(b.path(), &f), "{f}");
    }
}

#[test]
fn ladder_table_schema() {
    let cfg = parse_config_str(M1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, Stage::Energy, false);
    emit(&out, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("tables/ladder.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "J_quadrature", "surrogate", "remainder", "mass", "mass_rel_err"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(t, [20.0, 40.0, 80.0]);
    assert_eq!(out.report.construct.status, Status::Skipped);
    assert_eq!(out.report.solve.status, Status::Skipped);
}

#[test]
fn single_center_pipeline_passes_its_checks() {
    let cfg = parse_config_str(M1).unwrap();
    let out = run_pipeline(&cfg, Stage::All, false);
    let r = &out.report;
    assert!(r.passed, "{:#?}", r.checks);
    assert_eq!(r.exit_code(), 0);
    // the ladder has no point inside the corrector window
    assert_eq!(r.solve.status, Status::Skipped);
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    for n in ["boundary_exactness", "maximizer_converged_t20", "mass_quantization", "remainder_without_linear_trend"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let xi = &r.maximize.result.as_ref().unwrap()[0].result.xi_star;
    assert_eq!(xi.len(), 1);
}

#[test]
fn no_centers_skips_maximize_and_solves_once() {
    let cfg = parse_config_str(M0_SOLVE).unwrap();
    let out = run_pipeline(&cfg, Stage::All, false);
    let r = &out.report;
    assert_eq!(r.maximize.status, Status::Skipped);
    assert!(r.maximize.reason.as_deref().unwrap().contains("m = 0"));
    let solved = r.solve.result.as_ref().unwrap();
    assert_eq!(solved.len(), 1);
    let s = solved[0].solution.as_ref().unwrap();
    assert_eq!((solved[0].t, s.grid_n), (5.0, 512));
    assert!(s.converged);
    assert_eq!(r.energy.result.as_ref().unwrap().table.rows.len(), 3);
    assert!(out.tables.iter().any(|t| t.name == "solution_t5"));
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn solve_failure_keeps_energy_tables() {
    let cfg = parse_config_str(&M0_SOLVE.replace("512", "256")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, Stage::All, false);
    emit(&out, dir.path()).unwrap();
    assert_eq!(out.report.solve.status, Status::Failed);
    assert!(out.report.solve.reason.as_deref().unwrap().contains("under-resolves"));
    assert_eq!(out.report.energy.status, Status::Ok);
    assert!(dir.path().join("tables/ladder.csv").exists());
    assert_eq!(out.report.exit_code(), 2);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let good = write_config(dir.path(), "good.json", M1);
    let (code, stdout) = run_binary(&["maximize", "--config", good.to_str().unwrap(), "--output-dir", out], &[]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS") || stdout.is_empty());
    assert!(Path::new(out).join("report.json").exists());

    let strict = write_config(
        dir.path(),
        "strict.json",
        &M1.replace("\"seed\": 3", "\"seed\": 3, \"tolerances\": {\"mass_rel\": 1e-12}"),
    );
    let (code, stdout) = run_binary(&["energy", "--config", strict.to_str().unwrap(), "--output-dir", out], &[]);
    assert_eq!(code, 0, "energy alone runs no checks: {stdout}");
    let (code, stdout) = run_binary(&["verify", "--config", strict.to_str().unwrap(), "--output-dir", out], &[]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("FAIL mass_quantization"));

    let bad = write_config(dir.path(), "bad.json", r#"{"alpha": 2.0, "m": 1, "t_ladder": [20]}"#);
    let (code, _) = run_binary(&["all", "--config", bad.to_str().unwrap(), "--output-dir", out], &[]);
    assert_eq!(code, 2);

    let (code, _) = run_binary(
        &["construct", "--config", good.to_str().unwrap(), "--output-dir", out],
        &[("BUBBLER_THREADS", "zero")],
    );
    assert_eq!(code, 2);
    let (code, _) = run_binary(
        &["construct", "--config", good.to_str().unwrap(), "--output-dir", out],
        &[("BUBBLER_THREADS", "2")],
    );
    assert_eq!(code, 0);
}
