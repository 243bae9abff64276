//! End-to-end tests of the command-line interface and its exit-code
//! contract: 0 success, 1 input error, 2 non-convergence, 3 certification
//! failure, 4 reproduction mismatch.

#![allow(clippy::needless_range_loop)]

use qdro::solver::CertifiedSolution;
use std::path::Path;
use std::process::{Command, Output};

fn qdro(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdro"))
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .output()
        .expect("binary runs")
}

fn read_solution(dir: &Path) -> CertifiedSolution {
    let text = std::fs::read_to_string(dir.join("solution.json")).expect("solution written");
    serde_json::from_str(&text).expect("solution parses")
}

#[test]
fn solve_writes_certified_solution_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record = read_solution(dir.path());
    let target = [0.1342, 0.1792, 0.1792, 0.2332, 0.2742];
    for j in 0..5 {
        assert!((record.solution.x.get(j) - target[j]).abs() < 1e-3);
    }
    assert!(record.kkt_max_residual.unwrap() <= 1e-6);
    assert!(record.duality_gap.abs() <= 1e-4);
}

#[test]
fn solve_rejects_negative_radius_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &["solve", "--p-hat", "0.5,0.5", "--eps", "-1", "--q", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("radius"), "stderr: {stderr}");
}

#[test]
fn solve_rejects_exponent_below_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &["solve", "--p-hat", "0.5,0.5", "--eps", "0.1", "--q", "0.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_handles_degenerate_radius_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.1,0.2,0.3,0.4",
            "--eps",
            "5",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let record = read_solution(dir.path());
    assert!(record.solution.degenerate);
    for j in 0..4 {
        assert_eq!(record.solution.x.get(j), 0.25);
    }
}

#[test]
fn solve_accepts_inf_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.0,0.2,0.3,0.5",
            "--eps",
            "0.2",
            "--q",
            "inf",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let record = read_solution(dir.path());
    assert!((record.solution.x.get(1) - record.solution.x.get(2)).abs() <= 1e-6);
}

#[test]
fn solve_reports_nonconvergence_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
            "--max-iterations",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn instance_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let instance_path = dir.path().join("instance.json");
    std::fs::write(
        &instance_path,
        r#"{"p_hat": [0.1, 0.2, 0.3, 0.4], "epsilon": 0.05, "q": 2}"#,
    )
    .unwrap();

    let with_override = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--instance",
            instance_path.to_str().unwrap(),
            "--eps",
            "0.1",
        ],
        with_override.path(),
    );
    assert_eq!(out.status.code(), Some(0));

    let inline = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.1,0.2,0.3,0.4",
            "--eps",
            "0.1",
            "--q",
            "2",
        ],
        inline.path(),
    );
    assert_eq!(out.status.code(), Some(0));

    let a = std::fs::read(with_override.path().join("solution.json")).unwrap();
    let b = std::fs::read(inline.path().join("solution.json")).unwrap();
    assert_eq!(a, b, "flag override must behave like the inline instance");
}

#[test]
fn certify_accepts_a_fresh_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "certify",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("certification.json").exists());
}

#[test]
fn certify_rejects_a_perturbed_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "solve",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));

    // hand-edit the solution: shift one component and renormalize
    let mut record = read_solution(dir.path());
    let mut probs: Vec<f64> = record.solution.x.clone().into();
    probs[0] += 0.01;
    let sum: f64 = probs.iter().sum();
    for v in probs.iter_mut() {
        *v /= sum;
    }
    record.solution.x = qdro::core::Distribution::new(probs).unwrap();
    let edited = dir.path().join("edited.json");
    std::fs::write(&edited, serde_json::to_string_pretty(&record).unwrap()).unwrap();

    let out = qdro(
        &[
            "certify",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
            "--solution",
            edited.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn certify_accepts_a_degenerate_solution_via_the_gap_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "certify",
            "--p-hat",
            "0.1,0.2,0.3,0.4",
            "--eps",
            "5",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certification.json")).unwrap())
            .unwrap();
    assert_eq!(report["assumption1"], serde_json::Value::Bool(false));
    assert!(report["kkt_max_residual"].is_null());
}

#[test]
fn repro_writes_all_artifacts_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(&["repro"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "experiment1.json",
        "experiment1.csv",
        "experiment1.svg",
        "sweep.json",
        "sweep.csv",
        "sweep.svg",
        "boundary.json",
        "boundary.csv",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("repro check"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn repro_with_truncated_budget_reports_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(&["repro", "--max-iterations", "1"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn repro_format_filter_limits_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(&["repro", "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("experiment1.csv").exists());
    assert!(!dir.path().join("experiment1.json").exists());
    assert!(!dir.path().join("experiment1.svg").exists());
}

#[test]
fn laplace_subcommand_writes_smoothed_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &["laplace", "--p-hat", "0.0,1.0", "--pseudocount", "1.0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("laplace.json")).unwrap())
            .unwrap();
    let smoothed = record["smoothed"].as_array().unwrap();
    assert!((smoothed[0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn axioms_subcommand_reports_for_both_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "axioms",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("order preservation"));

    let out = qdro(
        &[
            "axioms",
            "--p-hat",
            "0.0,0.15,0.15,0.30,0.40",
            "--eps",
            "0.2",
            "--q",
            "2",
            "--estimator",
            "laplace",
            "--pseudocount",
            "0.1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn sweep_subcommand_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdro(
        &[
            "sweep",
            "--p-hat",
            "0.1,0.2,0.3,0.4",
            "--q",
            "2",
            "--eps-grid",
            "0.0,0.1,0.2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("epsilon,x1,x2,x3,x4"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn out_dir_environment_variable_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qdro"))
        .args(["laplace", "--p-hat", "0.5,0.5"])
        .env("QDRO_OUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("laplace.json").exists());
}

#[test]
fn help_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_qdro"))
        .arg("--help")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_flag_is_an_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_qdro"))
        .args(["solve", "--bogus"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
}
