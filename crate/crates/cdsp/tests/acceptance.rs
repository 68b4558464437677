//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cdsp::pipeline::{self, AblationReport};
use cdsp_core::motionstats::{fit_gaussian, track_features};
use cdsp_core::optflow::{estimate_flow, FlowField};
use cdsp_core::refframe::{build_frf, build_temp_avg};
use cdsp_core::scenes::{self, smooth_texture};
use cdsp_core::simulator::{generate, TurbulenceParams};
use cdsp_core::slrtr::{tensor_svt, Tensor3};
use cdsp_core::{FlowConfig, FrameSequence, Image, Volume};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TILTS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn frf_degenerate_case() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (h, w, t) = (
            rng.random_range(16..33),
            rng.random_range(16..33),
            rng.random_range(2..40),
        );
        let seq = FrameSequence::new(Volume::from_fn(h, w, t, |_, _, _| rng.random::<f64>())).unwrap();
        let frf = build_frf(&seq, 0.0).unwrap();
        let avg = build_temp_avg(&seq);
        for (a, b) in frf.image.as_slice().iter().zip(avg.image.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 10.0,
        format!("max deviation {worst:.2e} (<= 1e-12), {secs:.2} s (< 10 s)"),
    )
}

/// Full DFT along mode 3, complex SVD shrinkage of every slice, inverse DFT.
fn brute_force_svt(x: &Tensor3, tau: f64) -> Tensor3 {
    let (n1, n2, n3) = x.dims();
    let slices: Vec<DMatrix<Complex64>> = (0..n3)
        .map(|k| {
            let s = DMatrix::from_fn(n1, n2, |i, j| {
                (0..n3)
                    .map(|m| Complex64::from_polar(x.get(i, j, m), -2.0 * PI * (k * m) as f64 / n3 as f64))
                    .sum::<Complex64>()
            });
            let svd = s.svd(true, true);
            let d = DMatrix::from_diagonal(&svd.singular_values.map(|v| Complex64::new((v - tau).max(0.0), 0.0)));
            svd.u.unwrap() * d * svd.v_t.unwrap()
        })
        .collect();
    Tensor3::from_fn(n1, n2, n3, |i, j, m| {
        (0..n3)
            .map(|k| slices[k][(i, j)] * Complex64::from_polar(1.0, 2.0 * PI * (k * m) as f64 / n3 as f64))
            .sum::<Complex64>()
            .re
            / n3 as f64
    })
}

fn svt_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cases: Vec<(Tensor3, f64)> = (0..200)
        .map(|_| {
            let x = Tensor3::from_fn(3, 3, 4, |_, _, _| rng.random_range(-1.0..1.0));
            (x, rng.random_range(0.05..1.5))
        })
        .collect();
    let start = Instant::now();
    let fast: Vec<Tensor3> = cases.iter().map(|(x, tau)| tensor_svt(x, *tau).0).collect();
    let secs = start.elapsed().as_secs_f64();
    let worst = cases
        .iter()
        .zip(&fast)
        .map(|((x, tau), f)| {
            let slow = brute_force_svt(x, *tau);
            f.as_slice()
                .iter()
                .zip(slow.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    verdict(
        worst <= 1e-10 && secs < 5.0,
        format!("max deviation {worst:.2e} (<= 1e-10), {secs:.3} s (< 5 s)"),
    )
}

fn shifted(image: &Image, s: usize) -> Image {
    let (h, w) = image.dims();
    Image::from_fn(h, w, |y, x| image.get(y, (x + s) % w))
}

fn flow_recovery() -> Verdict {
    let cfg = FlowConfig::default();
    let texture = smooth_texture(128, 128, 2.0, 5);
    let mut shift_errors = Vec::new();
    for s in 1..=4 {
        // fixed(y, x) = moving(y, x + s): the backward-warp flow is (s, 0).
        let flow = estimate_flow(&texture, &shifted(&texture, s), &cfg).unwrap();
        let truth = FlowField::constant(128, 128, s as f64, 0.0);
        shift_errors.push(flow.mean_endpoint_error(&truth, 8));
    }
    let clean = scenes::standard_scene(3, 128, 128);
    let bundle = generate(
        &clean,
        &TurbulenceParams {
            tilt_std: 2.0,
            frames: 10,
            ..TurbulenceParams::default()
        },
    )
    .unwrap();
    let sim_error = (0..10)
        .map(|t| {
            estimate_flow(&clean, &bundle.distorted.frame(t), &cfg)
                .unwrap()
                .mean_endpoint_error(&bundle.flows[t], 8)
        })
        .sum::<f64>()
        / 10.0;
    let pass = shift_errors.iter().all(|&e| e <= 0.3) && sim_error <= 1.0;
    verdict(
        pass,
        format!(
            "shift EPE {} (<= 0.3 px); simulator tilt EPE {sim_error:.3} (<= 1.0 px)",
            shift_errors
                .iter()
                .map(|e| format!("{e:.3}"))
                .collect::<Vec<_>>()
                .join("/")
        ),
    )
}

fn objective_monotonicity(report: &AblationReport) -> Verdict {
    let worst = report
        .diagnostics
        .iter()
        .map(|d| d.worst_objective_increase())
        .fold(f64::NEG_INFINITY, f64::max);
    let runs: usize = report.diagnostics.iter().map(|d| d.traces.len()).sum();
    verdict(
        worst <= 1e-8,
        format!("{runs} solver runs, largest relative increase {worst:.2e} (<= 1e-8)"),
    )
}

fn pipeline_gain(report: &AblationReport, secs: f64) -> Verdict {
    let gains: Vec<f64> = TILTS
        .iter()
        .map(|t| {
            let s = format!("tilt{t}");
            report.mean_psnr_at(pipeline::METHOD_FULL, &s) - report.mean_psnr_at(pipeline::METHOD_NEITHER, &s)
        })
        .collect();
    let monotone = gains.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        gains[1] >= 3.0 && monotone && secs < 600.0,
        format!(
            "gain by tilt {} dB (tilt 2 >= 3 dB, non-decreasing: {monotone}); suite {secs:.0} s (< 600 s)",
            gains
                .iter()
                .map(|g| format!("{g:.2}"))
                .collect::<Vec<_>>()
                .join("/")
        ),
    )
}

fn ablation_ordering(report: &AblationReport) -> Verdict {
    let full = report.mean_psnr(pipeline::METHOD_FULL);
    let frf = report.mean_psnr(pipeline::METHOD_FRF_ONLY);
    let slrtr = report.mean_psnr(pipeline::METHOD_SLRTR_ONLY);
    let neither = report.mean_psnr(pipeline::METHOD_NEITHER);
    let pass = full > frf && frf >= neither && full > slrtr && full > neither;
    verdict(
        pass,
        format!("full {full:.3} > frf-only {frf:.3} >= neither {neither:.3}; slrtr-only {slrtr:.3}"),
    )
}

fn reference_swap(report: &AblationReport) -> Verdict {
    let frf = report.mean_psnr(pipeline::METHOD_REF_FRF);
    let ta = report.mean_psnr(pipeline::METHOD_REF_TEMP_AVG);
    verdict(frf > ta, format!("frf {frf:.3} dB > temp-avg {ta:.3} dB"))
}

fn low_rank_concentration(report: &AblationReport) -> Verdict {
    let bad: Vec<String> = report
        .diagnostics
        .iter()
        .filter(|d| !(d.concentration[2] > d.concentration[1] && d.concentration[1] > d.concentration[0]))
        .map(|d| format!("{} {}", d.scene, d.severity))
        .collect();
    let min_gap = report
        .diagnostics
        .iter()
        .map(|d| (d.concentration[2] - d.concentration[1]).min(d.concentration[1] - d.concentration[0]))
        .fold(f64::INFINITY, f64::min);
    verdict(
        bad.is_empty(),
        format!(
            "{} of {} sequences ordered refined > registered > distorted (smallest gap {min_gap:.3}){}",
            report.diagnostics.len() - bad.len(),
            report.diagnostics.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; violations: {}", bad.join(", "))
            }
        ),
    )
}

fn displacement_statistics() -> Verdict {
    let clean = scenes::checkerboard(128, 128, 16, 0.2, 0.8);
    let bundle = generate(
        &clean,
        &TurbulenceParams {
            tilt_std: 2.0,
            frames: 200,
            ..TurbulenceParams::default()
        },
    )
    .unwrap();
    let samples = track_features(&bundle.distorted).unwrap();
    let fit = fit_gaussian(&samples.pairs()).unwrap();
    let pass = fit.mean.iter().all(|m| m.abs() <= 0.1)
        && fit.std.iter().all(|s| (s - 2.0).abs() <= 0.3)
        && fit.p_value > 0.01;
    verdict(
        pass,
        format!(
            "{} features; mean ({:.3}, {:.3}) px, std ({:.3}, {:.3}) px, p = {:.3}",
            samples.feature_count(),
            fit.mean[0],
            fit.mean[1],
            fit.std[0],
            fit.std[1],
            fit.p_value
        ),
    )
}

fn run_restore(dir: &Path, out: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_cdsp"))
        .args(["--seed", "42", "--set", "max_iters=5", "restore", "--input"])
        .arg(dir.join("frames"))
        .arg("--clean")
        .arg(dir.join("clean.png"))
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .expect("run cdsp");
    assert!(status.status.success(), "restore failed: {}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(dir.join(out).join("report.csv")).expect("report")
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let sim = Command::new(env!("CARGO_BIN_EXE_cdsp"))
        .args(["--seed", "42", "simulate", "--scene", "blocks", "--size", "64", "--frames", "12", "--out"])
        .arg(dir.path())
        .output()
        .expect("run cdsp");
    if !sim.status.success() {
        return verdict(false, "simulate failed".into());
    }
    let a = run_restore(dir.path(), "run1");
    let b = run_restore(dir.path(), "run2");
    verdict(
        a == b && !a.is_empty(),
        format!("two restore runs, report.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("FRF degenerate-case equality", frf_degenerate_case()),
        ("SVT oracle equivalence", svt_oracle()),
        ("Flow recovery", flow_recovery()),
    ];

    let start = Instant::now();
    let suite = pipeline::standard_suite(5, &TILTS, 50, 42).unwrap();
    let report = pipeline::run_ablation_matrix(&suite, &pipeline::suite_config(), false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    results.push(("Objective monotonicity", objective_monotonicity(&report)));
    results.push(("Pipeline gain", pipeline_gain(&report, secs)));
    results.push(("Ablation ordering", ablation_ordering(&report)));
    results.push(("Reference-frame swap", reference_swap(&report)));
    results.push(("Low-rank concentration", low_rank_concentration(&report)));
    results.push(("Displacement statistics", displacement_statistics()));
    results.push(("Determinism", determinism()));

    println!("\nacceptance criteria:");
    for (name, v) in &results {
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = results.iter().filter(|(_, v)| !v.pass).count();
    println!("{} passed, {failed} failed\n", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
