use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvxent"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> Option<i32> {
    o.status.code()
}

#[test]
fn pack_writes_certificate_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pack", "--d", "1", "--eta", "1/25", "--seed", "0"]);
    assert_eq!(code(&o), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("certificate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("i,j,hamming,l1_distance,bound,margin,error_estimate,pass"));
    assert!(lines.all(|l| l.ends_with(",true")));
    let family: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("packing_family.json")).unwrap()).unwrap();
    assert_eq!(family["system"]["k"], 5);
    let curve = fs::read_to_string(dir.path().join("lower_bound_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5);
}

#[test]
fn invalid_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["pack", "--d", "1", "--eta", "1.5"][..],
        &["pack", "--d", "1", "--eta", "banana"],
        &["pack", "--d", "2", "--eta", "1/400"],
        &["schedule", "--p", "0.5", "--eta", "2^-96"],
        &["scaling", "--d", "1", "--eta", ""],
        &["verify", "--only", "fjfamily", "--j", "2"],
        &["nonsense"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(code(&o), Some(2), "{args:?}");
    }
}

#[test]
fn schedule_reports_cut_index() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--json", "schedule", "--p", "1", "--eta", "2^-96"]);
    assert_eq!(code(&o), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["a"], 4);
    assert_eq!(summary["all_pass"], true);
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    // Rows m = 1..=A+1 after the header.
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn empty_schedule_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["schedule", "--p", "1", "--eta", "1e-3"]);
    assert_eq!(code(&o), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("empty schedule"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["empty_schedule"], true);
}

#[test]
fn verify_single_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--only", "fjfamily", "--j", "1", "--k", "3"]);
    assert_eq!(code(&o), Some(0));
    let line = fs::read_to_string(dir.path().join("verify.jsonl")).unwrap();
    let r: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(r["rhs"], 0.75);

    let o = run(dir.path(), &["verify", "--only", "hinge", "--alpha", "1", "--p", "1"]);
    assert_eq!(code(&o), Some(0));
    let summary = fs::read_to_string(dir.path().join("verify_summary.csv")).unwrap();
    assert!(summary.starts_with("name,lhs,rhs,slack,pass\n"));
    assert_eq!(summary.lines().count(), 3);
}

fn label_pairs(svg: &str) -> Vec<(String, String)> {
    svg.lines()
        .filter(|l| l.contains("class=\"point\""))
        .map(|l| {
            let attr = |name: &str| {
                let start = l.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                l[start..].split('"').next().unwrap().to_string()
            };
            (attr("data-x"), attr("data-y"))
        })
        .collect()
}

#[test]
fn scaling_plot_labels_match_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["scaling", "--d", "1"]);
    assert_eq!(code(&o), Some(0));
    let csv = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let svg = fs::read_to_string(dir.path().join("scaling.svg")).unwrap();
    let labels = label_pairs(&svg);
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(labels.len(), rows.len());
    for ((x, y), row) in labels.iter().zip(&rows) {
        let inv_eps: f64 = row[3].parse().unwrap();
        let log_m: f64 = row[4].parse().unwrap();
        assert_eq!(x, &format!("{inv_eps:.5e}"));
        assert_eq!(y, &format!("{log_m:.5e}"));
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("scaling.json")).unwrap()).unwrap();
    assert_eq!(summary["slope_pass"], true);
}

#[test]
fn single_eta_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["scaling", "--d", "1", "--eta", "1/25"])), Some(2));
}
