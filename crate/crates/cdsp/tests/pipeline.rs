use cdsp::pipeline::{
    restore, run_ablation_matrix, score, standard_suite, suite_config, write_report, PipelinePlan,
    ReportRow, Stage, METHOD_FRF_ONLY, METHOD_FULL, METHOD_NEITHER, METHOD_REF_FRF,
    METHOD_REF_TEMP_AVG, METHOD_SLRTR_ONLY,
};
use cdsp::videoio::Sequence;
use cdsp_core::simulator::{generate, TurbulenceParams};
use cdsp_core::{scenes, Image, RunConfig};

fn small_bundle() -> (Sequence, Image) {
    let clean = scenes::standard_scene(2, 48, 48);
    let bundle = generate(
        &clean,
        &TurbulenceParams {
            frames: 8,
            ..TurbulenceParams::default()
        },
    )
    .unwrap();
    (Sequence::gray(bundle.distorted), clean)
}

fn quick() -> RunConfig {
    RunConfig {
        max_iters: 4,
        group_size: 10,
        ..RunConfig::default()
    }
}

#[test]
fn plan_validation() {
    let mut plan = PipelinePlan::full(quick());
    assert!(plan.validate().is_ok());
    plan.stages = vec![];
    assert!(plan.validate().is_err());
    plan.stages = vec![Stage::Register, Stage::RefFrame];
    assert!(plan.validate().is_err());
    plan.stages = vec![Stage::Register];
    assert!(plan.validate().is_err());
    plan.reference = Some(Image::filled(48, 48, 0.5));
    assert!(plan.validate().is_ok());
    plan.stages = vec![Stage::Refine];
    plan.config.alpha = -1.0;
    assert!(plan.validate().is_err());
}

#[test]
fn full_pipeline_improves_on_input() {
    let (seq, clean) = small_bundle();
    let out = restore(&seq, &PipelinePlan::full(quick())).unwrap();
    let before = score(&seq, std::slice::from_ref(&clean)).unwrap().0;
    let after = score(&out.restored, std::slice::from_ref(&clean)).unwrap().0;
    assert!(after > before, "{after:.3} <= {before:.3}");
    assert!(out.reference.is_some() && out.registered.is_some() && out.refined.is_some());
    assert_eq!(out.flows.as_ref().unwrap().len(), 8);
}

#[test]
fn partial_plans_run() {
    let (seq, _) = small_bundle();
    let refine_only = PipelinePlan {
        stages: vec![Stage::Refine],
        ..PipelinePlan::full(quick())
    };
    let out = restore(&seq, &refine_only).unwrap();
    assert!(out.flows.is_none() && out.refined.is_some());
    assert_eq!(out.restored.dims(), seq.dims());

    let no_refine = PipelinePlan {
        stages: vec![Stage::RefFrame, Stage::Register],
        ..PipelinePlan::full(quick())
    };
    let out = restore(&seq, &no_refine).unwrap();
    assert!(out.refined.is_none());
    assert_eq!(
        out.registered.unwrap().channels()[0].as_slice(),
        out.restored.channels()[0].as_slice()
    );
}

#[test]
fn color_input_shares_one_flow() {
    let (seq, _) = small_bundle();
    let gray = seq.channels()[0].clone();
    let color = Sequence::from_channels(vec![gray.clone(), gray.clone(), gray]).unwrap();
    let plan = PipelinePlan {
        stages: vec![Stage::RefFrame, Stage::Register],
        ..PipelinePlan::full(quick())
    };
    let a = restore(&seq, &plan).unwrap();
    let b = restore(&color, &plan).unwrap();
    for c in b.restored.channels() {
        let worst = c
            .as_slice()
            .iter()
            .zip(a.restored.channels()[0].as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{worst:e}");
    }
}

#[test]
fn ablation_matrix_has_six_rows_per_entry() {
    let suite = standard_suite(1, &[2.0], 6, 42).unwrap();
    let cfg = RunConfig {
        max_iters: 3,
        ref_passes: 1,
        ..suite_config()
    };
    let report = run_ablation_matrix(&suite, &cfg, false).unwrap();
    let methods: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(
        methods,
        [
            METHOD_NEITHER,
            METHOD_FRF_ONLY,
            METHOD_SLRTR_ONLY,
            METHOD_FULL,
            METHOD_REF_TEMP_AVG,
            METHOD_REF_FRF
        ]
    );
    assert!(report.rows.iter().all(|r| r.scene == "checker" && r.severity == "tilt2"));
    assert!(report.rows.iter().all(|r| r.runtime_s.is_none()));
    assert_eq!(report.diagnostics.len(), 1);
}

#[test]
fn report_csv_layout() {
    let rows = [
        ReportRow {
            scene: "bars".into(),
            severity: "tilt1".into(),
            method: "full".into(),
            psnr: 21.0,
            ssim: 0.5,
            runtime_s: None,
        },
        ReportRow {
            scene: "bars".into(),
            severity: "tilt1".into(),
            method: "neither".into(),
            psnr: 18.25,
            ssim: 0.25,
            runtime_s: Some(1.5),
        },
    ];
    let mut out = Vec::new();
    write_report(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scene,severity,method,psnr,ssim,runtime_s");
    assert!(lines[1].starts_with("bars,tilt1,full,21.000000,0.500000,"));
    assert!(lines[1].ends_with(','));
    assert!(lines[2].starts_with("bars,tilt1,neither,18.250000,0.250000,1.5"));
}
