use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdsp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = cdsp(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 48x48, 8-frame simulated sequence with ground truth.
fn simulate(dir: &Path) {
    ok(&[
        "simulate", "--scene", "blocks", "--size", "48", "--frames", "8", "--out", s(dir),
    ]);
}

fn pngs(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("frame_"))
        .collect();
    names.sort();
    names.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn simulate_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    assert_eq!(pngs(&dir.path().join("frames")).len(), 8);
    assert_eq!(fs::read_dir(dir.path().join("flows")).unwrap().count(), 8);
    assert!(dir.path().join("clean.png").exists());
    assert!(dir.path().join("manifest.txt").exists());
}

#[test]
fn restore_reports_gain() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = dir.path().join("out");
    ok(&[
        "--set", "max_iters=5", "restore", "--input", s(&dir.path().join("frames")), "--clean",
        s(&dir.path().join("clean.png")), "--out", s(&out),
    ]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let psnr: Vec<f64> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(psnr.len(), 2);
    assert!(psnr[1] > psnr[0], "{report}");
    for f in ["final.png", "reference.png", "objective.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(pngs(&out.join("restored")).len(), 8);
}

#[test]
fn stage_subsets_run() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let frames = dir.path().join("frames");
    ok(&[
        "--set", "max_iters=3", "restore", "--input", s(&frames), "--stages", "refine", "--out",
        s(&dir.path().join("a")),
    ]);
    ok(&[
        "restore", "--input", s(&frames), "--stages", "ref-frame,register", "--out",
        s(&dir.path().join("b")),
    ]);
    assert!(!dir.path().join("b/objective.csv").exists());
}

#[test]
fn resuming_from_exact_intermediates_matches_full_run() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let frames = dir.path().join("frames");
    let (full, reg, refined) = (dir.path().join("full"), dir.path().join("reg"), dir.path().join("ref"));
    let common = ["--exact-intermediates", "--set", "max_iters=4"];
    let run = |rest: &[&str]| ok(&[&common[..], rest].concat());
    run(&["restore", "--input", s(&frames), "--out", s(&full)]);
    run(&["register", "--input", s(&frames), "--out", s(&reg)]);
    run(&["refine", "--input", s(&reg.join("registered.fseq")), "--out", s(&refined)]);
    assert_eq!(pngs(&full.join("registered")), pngs(&reg));
    assert_eq!(pngs(&full.join("restored")), pngs(&refined.join("frames")));
    assert_eq!(
        fs::read(full.join("final.png")).unwrap(),
        fs::read(refined.join("final.png")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cdsp(&["restore", "--input", s(&dir.path().join("absent")), "--out", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));

    simulate(dir.path());
    let frames = dir.path().join("frames");
    let bad_plan = cdsp(&["restore", "--input", s(&frames), "--stages", "register", "--out", s(&dir.path().join("x"))]);
    assert_eq!(bad_plan.status.code(), Some(2));
    let bad_value = cdsp(&["--set", "alpha=-1", "refine", "--input", s(&frames), "--out", s(&dir.path().join("y"))]);
    assert_eq!(bad_value.status.code(), Some(2));

    let z = dir.path().join("z");
    let strict = [
        "--strict", "--set", "max_iters=1", "--set", "tolerance=1e-12", "refine", "--input",
        s(&frames), "--out", s(&z),
    ];
    assert_eq!(cdsp(&strict).status.code(), Some(3));
    assert_eq!(cdsp(&strict[1..]).status.code(), Some(0));
}

#[test]
fn evaluate_and_motion_analysis() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let report = dir.path().join("eval.csv");
    ok(&[
        "evaluate", "--input", s(&dir.path().join("frames")), "--ref",
        s(&dir.path().join("clean.png")), "--out", s(&report),
    ]);
    assert!(fs::read_to_string(&report).unwrap().starts_with("scene,severity,method,psnr,ssim,runtime_s"));

    let checker = dir.path().join("checker");
    ok(&[
        "simulate", "--scene", "checker", "--size", "96", "--frames", "20", "--out", s(&checker),
    ]);
    let out = cdsp(&["analyze-motion", "--input", s(&checker.join("frames"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary.get("p_value").is_some(), "{summary}");
}
