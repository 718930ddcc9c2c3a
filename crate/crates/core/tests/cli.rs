use std::path::Path;
use std::process::{Command, Output};

use rholab::grid::ScalarField;
use rholab::report::{parse_json_lines, Record};

const CONFIG: &str = r#"
seed = 9
[grid]
d = 3
n = 7
L = 2.0
[potential]
kind = "constant"
value = 1.0
[weight]
kind = "power"
alpha = 1.0
[suite]
count = 5
[family]
center_stride = 2
radii = [0.75, 1.5]
include_boundary = true
include_box_ball = true
"#;

fn rholab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rholab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn rho_field_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = rholab(
        dir.path(),
        &[
            "--config", "c.toml", "--out", "r.jsonl", "rho", "--field", "rho.txt",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rho = ScalarField::read_text(&dir.path().join("rho.txt")).unwrap();
    assert_eq!(rho.values().len(), 343);
    let exact = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
    assert!(rho.values().iter().all(|&r| (r - exact).abs() < 1e-5));
    assert!(dir.path().join("r.jsonl.summary.txt").exists());
    let text = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    let records = parse_json_lines(&text).unwrap();
    assert!(records
        .iter()
        .any(|r| matches!(r, Record::Check(c) if c.name == "rho_comparability")));
    let summary = rholab(dir.path(), &["report", "r.jsonl"]);
    assert!(summary.status.success());
    assert!(String::from_utf8_lossy(&summary.stdout).contains("rho_comparability"));
}

#[test]
fn grid_flag_overrides_config_and_csv_is_written() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = rholab(
        dir.path(),
        &[
            "--config", "c.toml", "--grid", "3,5,2", "morrey", "--flavor", "llogl", "--csv",
            "m.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(csv.starts_with("center,radius,local,factor,entry"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("lloglog_morrey_norm"));
}

#[test]
fn single_suite_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = rholab(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "--seed",
            "2",
            "--out",
            "v.jsonl",
            "verify",
            "--suite",
            "weak-morrey",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records =
        parse_json_lines(&std::fs::read_to_string(dir.path().join("v.jsonl")).unwrap()).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records
        .iter()
        .all(|r| r.name() == "weak_morrey" && r.pass()));
}

#[test]
fn bad_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[grid]\nd = 3\nn = 7\nL = 2.0\nbogus = 1\n",
    )
    .unwrap();
    let out = rholab(dir.path(), &["--config", "bad.toml", "bmo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = rholab(dir.path(), &["--config", "missing.toml", "bmo"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.toml"));
}
