use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hitchin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitchin"))
        .arg("--out")
        .arg(out)
        .arg("--cache-dir")
        .arg(out.join("cache"))
        .args(args)
        .output()
        .expect("run hitchin")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn record(out: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn cohomology_row_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hitchin(dir.path(), &["cohomology", "--genus", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(2, 4, 0, 6, 0, -6, 6, MATCH)"));
    let r = record(dir.path(), "cohomology");
    assert_eq!(r["tool"], "hitchin");
    assert!(r["version"].as_str().unwrap().starts_with('v'));
    assert_eq!(r["passed"], true);

    assert_eq!(hitchin(dir.path(), &["cohomology", "--genus", "2", "--punctures", "3"]).status.code(), Some(2));
    assert_eq!(hitchin(dir.path(), &["cohomology", "--genus", "1"]).status.code(), Some(2));
    assert_eq!(hitchin(dir.path(), &["sweep", "--experiment", "fiducial", "--param", "t", "--values"]).status.code(), Some(2));
    assert_eq!(hitchin(dir.path(), &["sweep", "--experiment", "nope", "--param", "t", "--values", "1"]).status.code(), Some(2));
    assert_eq!(hitchin(dir.path(), &["residual", "--pair", "bogus"]).status.code(), Some(2));
}

#[test]
fn config_file_rules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[cohomology]\nbogus = 1\n").unwrap();
    let o = hitchin(dir.path(), &["--config", cfg.to_str().unwrap(), "cohomology"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    // flags override the file
    std::fs::write(&cfg, "[run]\nseed = 5\n[cohomology]\ngenus = [3]\n").unwrap();
    let o = hitchin(dir.path(), &["--config", cfg.to_str().unwrap(), "cohomology", "--genus", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("(2, "));
    assert_eq!(record(dir.path(), "cohomology")["seed"], 5);
}

#[test]
fn divergence_writes_csv_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = hitchin(dir.path(), &["divergence", "--ustar", "1", "--eps", "1e-4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("divergence-partial.csv").is_file());
    assert!(dir.path().join("divergence-partial.svg").is_file());
    let slope = record(dir.path(), "divergence")["result"]["slope"].as_f64().unwrap();
    assert!((slope - std::f64::consts::TAU).abs() < 0.01 * std::f64::consts::TAU);
}

#[test]
fn zero_tolerance_fails_the_named_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = hitchin(dir.path(), &["verify-all", "--criteria", "2,3", "--tolerance", "fiducial_residual=0"]);
    assert_eq!(o.status.code(), Some(3));
    let s = stdout(&o);
    assert!(s.contains("PASS [2] model solutions"), "{s}");
    assert!(s.contains("FAIL [3] fiducial family") && s.contains("rescaled residual sup"), "{s}");
    assert_eq!(hitchin(dir.path(), &["verify-all", "--tolerance", "nonsense=1"]).status.code(), Some(2));
}

#[test]
fn repeated_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for args in [&["cohomology", "--genus", "2,3"][..], &["residual", "--draws", "5"][..], &["spectrum"][..], &["fiducial", "--t", "1,2"][..]] {
        assert_eq!(hitchin(a.path(), args).status.code(), Some(0));
        assert_eq!(hitchin(b.path(), args).status.code(), Some(0));
        let name = args[0];
        assert_eq!(record(a.path(), name)["result"], record(b.path(), name)["result"], "{name}");
        assert_eq!(record(a.path(), name)["config"], record(b.path(), name)["config"], "{name}");
    }
}

#[test]
fn sweeps_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = hitchin(dir.path(), &["sweep", "--experiment", "fiducial", "--param", "t", "--values", "1,2,4,8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("sup_h: strictly decreasing"));
    let o = hitchin(dir.path(), &["sweep", "--experiment", "spectrum", "--param", "r", "--values", "0.04,0.01,0.0025,0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("near_kernel: constant"));
    let csv = std::fs::read_to_string(dir.path().join("sweep_spectrum_r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("sweep/spectrum_r_3.json").is_file());
}
