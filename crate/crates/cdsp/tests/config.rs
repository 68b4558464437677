use cdsp::config::{load_config, parse_config, render};
use cdsp::Error;
use cdsp_core::refframe::{build_reference, ReferenceMethod};
use cdsp_core::{FrameSequence, RunConfig, Volume};
use proptest::prelude::*;

#[test]
fn empty_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(
        (cfg.sigma, cfg.patch_size, cfg.group_size, cfg.subspace_dim, cfg.max_iters),
        (0.1, 8, 40, 3, 30)
    );
}

#[test]
fn sigma_zero_reproduces_temporal_average() {
    let cfg = parse_config("sigma=0  # plain average\n").unwrap();
    assert_eq!(cfg.sigma, 0.0);
    let seq = FrameSequence::new(Volume::from_fn(16, 16, 5, |y, x, t| {
        ((y * 7 + x * 3 + t * 11) % 17) as f64 / 16.0
    }))
    .unwrap();
    let frf = build_reference(&seq, ReferenceMethod::FrequencyAware, cfg.sigma).unwrap();
    let avg = build_reference(&seq, ReferenceMethod::TemporalAverage, cfg.sigma).unwrap();
    for (a, b) in frf.image.as_slice().iter().zip(avg.image.as_slice()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn subspace_dimension_must_be_below_frame_count() {
    let cfg = parse_config("subspace_dim=100").unwrap();
    assert!(cfg.validate_for_frames(50).is_err());
    assert!(cfg.validate_for_frames(101).is_ok());
}

#[test]
fn malformed_lines_report_their_position() {
    match parse_config("sigma=0.2\n\nthis is not a pair\n") {
        Err(Error::Config { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config("colour=red"), Err(Error::Config { line: 1, .. })));
    assert!(matches!(parse_config("alpha=lots"), Err(Error::Config { line: 1, .. })));
}

#[test]
fn out_of_range_values_are_rejected() {
    for text in ["alpha=-1", "sigma=-0.5", "patch_size=2", "tolerance=0", "beta=0"] {
        assert!(parse_config(text).is_err(), "{text}");
    }
}

#[test]
fn noise_level_accepts_auto() {
    assert_eq!(parse_config("noise_level=0.02").unwrap().noise_level, Some(0.02));
    assert_eq!(parse_config("noise_level=auto").unwrap().noise_level, None);
}

proptest! {
    #[test]
    fn rendered_configs_parse_back(
        sigma in 0.0f64..5.0,
        alpha in 0.01f64..10.0,
        beta in 0.001f64..1.0,
        patch_size in 4usize..16,
        d in 1usize..6,
        max_iters in 1usize..100,
        noise in proptest::option::of(0.001f64..0.5),
        seed in any::<u64>(),
    ) {
        let cfg = RunConfig {
            sigma,
            alpha,
            beta,
            patch_size,
            patch_stride: patch_size / 2,
            subspace_dim: d,
            max_iters,
            noise_level: noise,
            seed,
            ..RunConfig::default()
        };
        prop_assert_eq!(parse_config(&render(&cfg)).unwrap(), cfg);
    }
}
