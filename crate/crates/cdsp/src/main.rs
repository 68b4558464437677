use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdsp::config;
use cdsp::pipeline::{self, PipelinePlan, ReportRow, Stage};
use cdsp::videoio::{self, Sequence};
use cdsp::{Error, Result};
use cdsp_core::motionstats::{fit_gaussian, track_features};
use cdsp_core::refframe::ReferenceMethod;
use cdsp_core::scenes::{standard_scene, SCENE_NAMES};
use cdsp_core::simulator::{generate, TurbulenceParams};
use cdsp_core::slrtr::RefineOutput;
use cdsp_core::{Image, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Turbulence mitigation for static scenes: frequency-aware reference
/// frames, optical-flow registration and low-rank tensor refinement.
#[derive(Parser)]
#[command(name = "cdsp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Keep intermediates in the lossless float container as well as PNG
    #[arg(long, global = true)]
    exact_intermediates: bool,
    /// Exit with status 3 when the solver hits its iteration limit
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a distorted sequence with ground truth
    Simulate(SimulateArgs),
    /// Build a reference frame
    RefFrame(RefFrameArgs),
    /// Register every frame onto a reference
    Register(RegisterArgs),
    /// Low-rank refinement of a registered sequence
    Refine(RefineArgs),
    /// Run the pipeline end to end
    Restore(RestoreArgs),
    /// Score a sequence against a clean image
    Evaluate(EvaluateArgs),
    /// Track corners and fit their displacement distribution
    AnalyzeMotion(MotionArgs),
    /// Ablation matrix over the synthetic suite
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Clean PNG; defaults to a built-in scene
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Built-in scene name or index (checker, bars, blocks, texture, star)
    #[arg(long, default_value = "texture")]
    scene: String,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 2.0)]
    tilt: f64,
    #[arg(long, default_value_t = 8.0)]
    correlation_length: f64,
    #[arg(long, default_value_t = 0.8)]
    blur: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefFrameArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "frf", value_parser = pipeline::parse_method)]
    method: ReferenceMethod,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    input: PathBuf,
    /// Register onto this image instead of a built reference
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "frf", value_parser = pipeline::parse_method)]
    method: ReferenceMethod,
    #[arg(long)]
    dump_flow: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Also write the sparse error E (as 0.5 + E)
    #[arg(long)]
    dump_error: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Clean image; adds report.csv with PSNR/SSIM
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long, default_value = "frf", value_parser = pipeline::parse_method)]
    method: ReferenceMethod,
    /// Comma-separated subset of ref-frame,register,refine
    #[arg(long, value_delimiter = ',', default_value = "ref-frame,register,refine")]
    stages: Vec<Stage>,
    /// Explicit reference image for the register stage
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Reference/registration passes
    #[arg(long)]
    passes: Option<usize>,
    /// Keep frames START:END (half-open) before restoring
    #[arg(long, value_parser = parse_trim)]
    trim: Option<(usize, usize)>,
    /// Unsharp-mask post-process (not part of the restoration model)
    #[arg(long)]
    deblur: bool,
    #[arg(long)]
    dump_flow: Option<PathBuf>,
    /// Fill the runtime_s column (makes reports run-dependent)
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = "input")]
    scene: String,
    #[arg(long, default_value = "")]
    severity: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Clean reference image
    #[arg(long = "ref")]
    clean: PathBuf,
    #[arg(long, default_value = "restored")]
    method: String,
    #[arg(long, default_value = "input")]
    scene: String,
    #[arg(long, default_value = "")]
    severity: String,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MotionArgs {
    #[arg(long)]
    input: PathBuf,
    /// CSV of per-feature, per-frame displacements
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Histogram of both axes as a PNG
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, default_value_t = 5)]
    scenes: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    tilts: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_trim(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.parse().map_err(|_| "bad START")?;
    let b = b.parse().map_err(|_| "bad END")?;
    Ok((a, b))
}

enum Outcome {
    Done,
    NotConverged,
}

fn run_config(g: &Global, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            config::parse_config_over(&text, base)?
        }
        None => base,
    };
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--set expects KEY=VALUE, got `{o}`")))?;
        config::set(&mut cfg, k.trim(), v.trim()).map_err(Error::Input)?;
    }
    if let Some(s) = g.sigma {
        cfg.sigma = s;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_reference(path: &Path) -> Result<Image> {
    let mut channels = videoio::load_image(path)?;
    Ok(match channels.len() {
        1 => channels.remove(0),
        _ => {
            let (r, g, b) = (&channels[0], &channels[1], &channels[2]);
            Image::from_fn(r.height(), r.width(), |y, x| {
                0.299 * r.get(y, x) + 0.587 * g.get(y, x) + 0.114 * b.get(y, x)
            })
        }
    })
}

fn write_traces(outputs: &[RefineOutput], dir: &Path) -> Result<()> {
    for (c, o) in outputs.iter().enumerate() {
        let name = if outputs.len() == 1 {
            "objective.csv".to_string()
        } else {
            format!("objective_{c}.csv")
        };
        let mut text = String::from("iteration,objective,rel_change\n");
        for e in &o.trace {
            text.push_str(&format!("{},{:.12e},{:.6e}\n", e.iteration, e.objective, e.rel_change));
        }
        write_file(&dir.join(name), &text)?;
    }
    Ok(())
}

fn write_error(outputs: &[RefineOutput], dir: &Path) -> Result<()> {
    let channels = outputs
        .iter()
        .map(|o| {
            let mut e = o.state.error.clone();
            e.as_mut_slice().iter_mut().for_each(|v| *v += 0.5);
            Ok(cdsp_core::FrameSequence::from_volume_clamped(e)?)
        })
        .collect::<Result<_>>()?;
    videoio::save_sequence(&Sequence::from_channels(channels)?, dir)
}

fn warn_not_converged(outputs: &[RefineOutput]) -> Outcome {
    if outputs.iter().all(|o| o.converged) {
        return Outcome::Done;
    }
    for o in outputs.iter().filter(|o| !o.converged) {
        eprintln!(
            "warning: refinement stopped at the iteration limit ({} iterations, relative change {:.3e})",
            o.state.iteration, o.state.rel_change
        );
    }
    Outcome::NotConverged
}

fn simulate(g: &Global, a: &SimulateArgs) -> Result<Outcome> {
    let cfg = run_config(g, RunConfig::default())?;
    let clean = match &a.clean {
        Some(p) => load_reference(p)?,
        None => {
            let index = a
                .scene
                .parse::<usize>()
                .ok()
                .or_else(|| SCENE_NAMES.iter().position(|n| *n == a.scene))
                .ok_or_else(|| Error::Input(format!("unknown scene `{}`", a.scene)))?;
            standard_scene(index, a.size, a.size)
        }
    };
    let params = TurbulenceParams {
        tilt_std: a.tilt,
        correlation_length: a.correlation_length,
        blur_sigma: a.blur,
        noise_std: a.noise,
        frames: a.frames,
        seed: cfg.seed,
    };
    let bundle = generate(&clean, &params)?;
    create_dir(&a.out)?;
    let seq = Sequence::gray(bundle.distorted.clone());
    videoio::save_sequence(&seq, &a.out.join("frames"))?;
    if g.exact_intermediates {
        videoio::write_fseq(&seq, &a.out.join("frames.fseq"))?;
    }
    videoio::save_flows(&bundle.flows, &a.out.join("flows"))?;
    videoio::save_image(&[clean], &a.out.join("clean.png"))?;
    let manifest = format!(
        "# tilt_std stands in for imaging distance\ntilt_std={}\ncorrelation_length={}\nblur_sigma={}\nnoise_std={}\nframes={}\nseed={}\n",
        params.tilt_std, params.correlation_length, params.blur_sigma, params.noise_std, params.frames, params.seed
    );
    write_file(&a.out.join("manifest.txt"), &manifest)?;
    Ok(Outcome::Done)
}

fn ref_frame(g: &Global, a: &RefFrameArgs) -> Result<Outcome> {
    let cfg = run_config(g, RunConfig::default())?;
    let seq = videoio::load_sequence(&a.input)?;
    let plan = PipelinePlan {
        stages: vec![Stage::RefFrame],
        method: a.method,
        ..PipelinePlan::full(cfg)
    };
    let out = pipeline::restore(&seq, &plan)?;
    videoio::save_image(out.reference.as_deref().unwrap_or_default(), &a.out)?;
    Ok(Outcome::Done)
}

fn save_registered(g: &Global, reg: &Sequence, dir: &Path) -> Result<()> {
    videoio::save_sequence(reg, dir)?;
    if g.exact_intermediates {
        videoio::write_fseq(reg, &dir.join("registered.fseq"))?;
    }
    Ok(())
}

fn register(g: &Global, a: &RegisterArgs) -> Result<Outcome> {
    let cfg = run_config(g, RunConfig::default())?;
    let seq = videoio::load_sequence(&a.input)?;
    let reference = a.reference.as_deref().map(load_reference).transpose()?;
    let stages = if reference.is_some() {
        vec![Stage::Register]
    } else {
        vec![Stage::RefFrame, Stage::Register]
    };
    let plan = PipelinePlan {
        stages,
        method: a.method,
        reference,
        ..PipelinePlan::full(cfg)
    };
    let out = pipeline::restore(&seq, &plan)?;
    save_registered(g, &out.restored, &a.out)?;
    if let Some(r) = &out.reference {
        videoio::save_image(r, &a.out.join("reference.png"))?;
    }
    if let (Some(dir), Some(flows)) = (&a.dump_flow, &out.flows) {
        videoio::save_flows(flows, dir)?;
    }
    Ok(Outcome::Done)
}

fn refine(g: &Global, a: &RefineArgs) -> Result<Outcome> {
    let cfg = run_config(g, RunConfig::default())?;
    let seq = videoio::load_sequence(&a.input)?;
    let plan = PipelinePlan {
        stages: vec![Stage::Refine],
        ..PipelinePlan::full(cfg)
    };
    let out = pipeline::restore(&seq, &plan)?;
    let outputs = out.refined.as_deref().unwrap_or_default();
    videoio::save_sequence(&out.restored, &a.out.join("frames"))?;
    if g.exact_intermediates {
        videoio::write_fseq(&out.restored, &a.out.join("background.fseq"))?;
    }
    videoio::save_image(&out.final_image(), &a.out.join("final.png"))?;
    write_traces(outputs, &a.out)?;
    if a.dump_error {
        write_error(outputs, &a.out.join("error"))?;
    }
    Ok(warn_not_converged(outputs))
}

fn restore(g: &Global, a: &RestoreArgs) -> Result<Outcome> {
    let mut cfg = run_config(g, RunConfig::default())?;
    if let Some(p) = a.passes {
        cfg.ref_passes = p;
    }
    let mut seq = videoio::load_sequence(&a.input)?;
    if let Some((s, e)) = a.trim {
        seq = seq.trim(s, e)?;
    }
    let plan = PipelinePlan {
        stages: a.stages.clone(),
        method: a.method,
        config: cfg,
        reference: a.reference.as_deref().map(load_reference).transpose()?,
        deblur: a.deblur,
    };
    let out = pipeline::restore(&seq, &plan)?;
    create_dir(&a.out)?;
    videoio::save_sequence(&out.restored, &a.out.join("restored"))?;
    videoio::save_image(&out.final_image(), &a.out.join("final.png"))?;
    if let Some(r) = &out.reference {
        videoio::save_image(r, &a.out.join("reference.png"))?;
    }
    if let Some(reg) = &out.registered {
        save_registered(g, reg, &a.out.join("registered"))?;
    }
    if let (Some(dir), Some(flows)) = (&a.dump_flow, &out.flows) {
        videoio::save_flows(flows, dir)?;
    }
    let outputs = out.refined.as_deref().unwrap_or_default();
    write_traces(outputs, &a.out)?;
    if let Some(clean_path) = &a.clean {
        let clean = videoio::load_image(clean_path)?;
        let total: f64 = out.stage_seconds.iter().map(|(_, s)| s).sum();
        let row = |method: &str, s: &Sequence, runtime: Option<f64>| -> Result<ReportRow> {
            let (psnr, ssim) = pipeline::score(s, &clean)?;
            Ok(ReportRow {
                scene: a.scene.clone(),
                severity: a.severity.clone(),
                method: method.to_string(),
                psnr,
                ssim,
                runtime_s: runtime.filter(|_| a.timing),
            })
        };
        let rows = vec![
            row("distorted", &seq, Some(0.0))?,
            row("restored", &out.restored, Some(total))?,
        ];
        let file = fs::File::create(a.out.join("report.csv")).map_err(|source| Error::Io {
            path: a.out.join("report.csv"),
            source,
        })?;
        pipeline::write_report(&rows, file)?;
        for r in &rows {
            eprintln!("{r}");
        }
    }
    Ok(warn_not_converged(outputs))
}

fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let seq = videoio::load_sequence(&a.input)?;
    let clean = videoio::load_image(&a.clean)?;
    let (psnr, ssim) = pipeline::score(&seq, &clean)?;
    let rows = [ReportRow {
        scene: a.scene.clone(),
        severity: a.severity.clone(),
        method: a.method.clone(),
        psnr,
        ssim,
        runtime_s: None,
    }];
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            pipeline::write_report(&rows, file)?;
        }
        None => pipeline::write_report(&rows, std::io::stdout().lock())?,
    }
    Ok(Outcome::Done)
}

fn histogram_image(pairs: &[(f64, f64)], limit: f64) -> Image {
    const BINS: usize = 64;
    const HEIGHT: usize = 64;
    let count = |axis: usize| {
        let mut c = [0usize; BINS];
        for p in pairs {
            let v = if axis == 0 { p.0 } else { p.1 };
            let b = ((v + limit) / (2.0 * limit) * BINS as f64).floor();
            if (0.0..BINS as f64).contains(&b) {
                c[b as usize] += 1;
            }
        }
        c
    };
    let (cx, cy) = (count(0), count(1));
    let peak = cx.iter().chain(&cy).copied().max().unwrap_or(1).max(1) as f64;
    // Two panels side by side: dx then dy.
    Image::from_fn(HEIGHT, 2 * BINS + 1, |y, x| {
        let c = match x.cmp(&BINS) {
            std::cmp::Ordering::Less => cx[x],
            std::cmp::Ordering::Equal => return 0.5,
            std::cmp::Ordering::Greater => cy[x - BINS - 1],
        };
        let bar = (c as f64 / peak * HEIGHT as f64).round() as usize;
        if HEIGHT - y <= bar {
            0.0
        } else {
            1.0
        }
    })
}

fn analyze_motion(a: &MotionArgs) -> Result<Outcome> {
    let seq = videoio::load_sequence(&a.input)?;
    let samples = track_features(&seq.luma())?;
    let pairs = samples.pairs();
    let fit = fit_gaussian(&pairs)?;
    if let Some(path) = &a.samples {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "y", "x", "frame", "dx", "dy"])?;
        for (i, t) in samples.tracks.iter().enumerate() {
            for (f, o) in t.offsets.iter().enumerate() {
                if let Some((dx, dy)) = o {
                    w.write_record([
                        i.to_string(),
                        t.position.0.to_string(),
                        t.position.1.to_string(),
                        f.to_string(),
                        format!("{dx:.6}"),
                        format!("{dy:.6}"),
                    ])?;
                }
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    if let Some(path) = &a.histogram {
        let limit = 4.0 * fit.std[0].max(fit.std[1]);
        videoio::save_image(&[histogram_image(&pairs, limit)], path)?;
    }
    let summary = serde_json::json!({
        "features": samples.feature_count(),
        "frames": samples.frames,
        "samples": pairs.len(),
        "mean": fit.mean,
        "std": fit.std,
        "chi_square": fit.chi_square,
        "dof": fit.dof,
        "p_value": fit.p_value,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain values"));
    Ok(Outcome::Done)
}

fn ablate(g: &Global, a: &AblateArgs) -> Result<Outcome> {
    let cfg = run_config(g, pipeline::suite_config())?;
    let entries = pipeline::standard_suite(a.scenes, &a.tilts, a.frames, cfg.seed)?;
    let report = pipeline::run_ablation_matrix(&entries, &cfg, a.timing)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    pipeline::write_report(&report.rows, file)?;
    let mut err = std::io::stderr().lock();
    for m in [
        pipeline::METHOD_NEITHER,
        pipeline::METHOD_FRF_ONLY,
        pipeline::METHOD_SLRTR_ONLY,
        pipeline::METHOD_FULL,
        pipeline::METHOD_REF_TEMP_AVG,
    ] {
        let _ = writeln!(err, "{m:>14}: mean PSNR {:.3} dB", report.mean_psnr(m));
    }
    Ok(Outcome::Done)
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Input(format!("--threads: {e}")))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Simulate(a) => simulate(g, a),
        Command::RefFrame(a) => ref_frame(g, a),
        Command::Register(a) => register(g, a),
        Command::Refine(a) => refine(g, a),
        Command::Restore(a) => restore(g, a),
        Command::Evaluate(a) => evaluate(a),
        Command::AnalyzeMotion(a) => analyze_motion(a),
        Command::Ablate(a) => ablate(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) if cli.global.strict => ExitCode::from(3),
        Ok(Outcome::NotConverged) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
