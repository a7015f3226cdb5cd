use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffincl")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn converge_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["converge", "--problem", "signs1d", "--dt-list", "0.1,0.05,0.025", "--refine", "8", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["verdict"], "pass");
    assert_eq!(doc["reports"][0]["kind"], "convergence");
    assert_eq!(doc["reports"][0]["rows"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("convergence.csv").exists());
}

#[test]
fn reach_exports_tube_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["reach", "--problem", "rotation2d", "--dt", "0.1", "--refine", "4", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["tube"]["steps"], 10);
    for f in ["tube.csv", "tube.meta.json", "reference.csv", "reference.meta.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = run(&["reach", "--dt", "0.25", "--prune-cell", "0", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    // signs1d from 0 over four steps: 1 + 2 + 3 + 4 + 5 points plus the header
    assert_eq!(text.lines().count(), 16);
    assert!(text.starts_with("n,point_index,x_1"));
}

#[test]
fn track_modes_succeed_on_suitable_problems() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for args in [
        vec!["track", "relaxed", "--schedule", "chatter:0,1"],
        vec!["track", "nonconvex", "--problem", "rotation2d", "--schedule", "blend:0,1", "--beam", "2"],
        vec!["track", "controls", "--problem", "affine2d", "--schedule", "weights:0.2,0.3,0.5"],
    ] {
        let mut full = args.clone();
        full.extend(["--out", out_dir, "--format", "csv"]);
        let out = run(&full);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("kind,dt,steps,max_deviation"));
        assert!(text.trim_end().ends_with("pass"));
        assert!(dir.path().join("path.csv").exists());
    }
}

#[test]
fn inclusion_checks_and_audit_pass() {
    for args in [
        vec!["verify-inclusions", "coco", "--samples", "100"],
        vec!["verify-inclusions", "psi-hull", "--point", "0.3,-0.2", "--samples", "100"],
        vec!["verify-inclusions", "psi-hull", "--problem", "rotation2d", "--samples", "100", "--seed", "5"],
        vec!["validate", "--problem", "affine2d", "--samples", "300"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json(&out)["verdict"], "pass");
    }
}

#[test]
fn understated_constants_fail_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("slow.toml");
    std::fs::write(&file, "dim = 1\nM = 2\nb = [[-1.0], [1.0]]\nA = [[[0.0]], [[0.0]]]\nx0 = [0.0]\nT = 1.0\nK = 0.5\nL = 0.0\n")
        .unwrap();
    let out = run(&["validate", "--problem", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verdict"], "fail");
}

#[test]
fn bounds_sheet_for_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    std::fs::write(&file, r#"{"benchmark": "signs1d", "T": 2.0}"#).unwrap();
    let out = run(&["bounds", "--problem", file.to_str().unwrap(), "--dt", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["inputs"]["N"], 4);
    // K = 1, L = 0, d = 1: (K²d(d+1) + 2Kd)Δt = 4 · 0.5
    assert_eq!(doc["reach_sets"], 2.0);
}

#[test]
fn bad_input_exits_with_two() {
    for args in [
        vec!["track", "controls", "--problem", "rotation2d"],
        vec!["track", "relaxed", "--schedule", "zigzag"],
        vec!["reach", "--dt", "0.3"],
        vec!["converge", "--dt-list", "0.1,0.05"],
        vec!["bounds", "--problem", "no-such-problem"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}
