//! Restoration pipeline, evaluation reports and the ablation matrix.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use cdsp_core::metrics::{sequence_psnr, sequence_ssim, singular_spectrum};
use cdsp_core::optflow::{estimate_flow, warp_sequence, FlowField};
use cdsp_core::refframe::{build_reference, ReferenceMethod};
use cdsp_core::scenes::{standard_scene, SCENE_NAMES, STANDARD_SCENES};
use cdsp_core::simulator::{severity_ladder, GroundTruthBundle, TurbulenceParams};
use cdsp_core::slrtr::{refine, RefineOutput};
use cdsp_core::{filter, FrameSequence, Image, RunConfig};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::videoio::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    RefFrame,
    Register,
    Refine,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::RefFrame => "ref-frame",
            Stage::Register => "register",
            Stage::Refine => "refine",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ref-frame" => Ok(Stage::RefFrame),
            "register" => Ok(Stage::Register),
            "refine" => Ok(Stage::Refine),
            _ => Err(format!("unknown stage `{s}` (ref-frame, register, refine)")),
        }
    }
}

pub fn parse_method(s: &str) -> std::result::Result<ReferenceMethod, String> {
    match s {
        "frf" => Ok(ReferenceMethod::FrequencyAware),
        "temp-avg" => Ok(ReferenceMethod::TemporalAverage),
        _ => Err(format!("unknown reference method `{s}` (frf, temp-avg)")),
    }
}

pub fn method_name(m: ReferenceMethod) -> &'static str {
    match m {
        ReferenceMethod::FrequencyAware => "frf",
        ReferenceMethod::TemporalAverage => "temp-avg",
    }
}

#[derive(Debug, Clone)]
pub struct PipelinePlan {
    /// Ordered, duplicate-free subset of the three stages.
    pub stages: Vec<Stage>,
    pub method: ReferenceMethod,
    pub config: RunConfig,
    /// Registers against this image (one per channel or luma) instead of a
    /// built reference.
    pub reference: Option<Image>,
    /// Unsharp-mask post-process. Not part of the restoration model.
    pub deblur: bool,
}

impl PipelinePlan {
    pub fn full(config: RunConfig) -> Self {
        Self {
            stages: vec![Stage::RefFrame, Stage::Register, Stage::Refine],
            method: ReferenceMethod::FrequencyAware,
            config,
            reference: None,
            deblur: false,
        }
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Input("a plan needs at least one stage".into()));
        }
        if self.stages.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Input(
                "stages must be ordered ref-frame, register, refine without repeats".into(),
            ));
        }
        if self.has(Stage::Register) && !self.has(Stage::RefFrame) && self.reference.is_none() {
            return Err(Error::Input(
                "register needs the ref-frame stage or an explicit reference image".into(),
            ));
        }
        self.config.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Restoration {
    /// Per-channel reference frames (final pass).
    pub reference: Option<Vec<Image>>,
    pub flows: Option<Vec<FlowField>>,
    pub registered: Option<Sequence>,
    /// One solver run per channel.
    pub refined: Option<Vec<RefineOutput>>,
    pub restored: Sequence,
    pub stage_seconds: Vec<(Stage, f64)>,
}

impl Restoration {
    pub fn converged(&self) -> bool {
        self.refined
            .as_ref()
            .is_none_or(|r| r.iter().all(|o| o.converged))
    }

    /// Temporal median of the restored frames.
    pub fn final_image(&self) -> Vec<Image> {
        self.restored.temporal_median()
    }
}

/// Flows that register every frame of `seq` onto `reference`.
pub fn estimate_flows(
    seq: &FrameSequence,
    reference: &Image,
    cfg: &RunConfig,
) -> Result<Vec<FlowField>> {
    (0..seq.frames())
        .into_par_iter()
        .map(|t| Ok(estimate_flow(&seq.frame(t), reference, &cfg.flow)?))
        .collect()
}

/// Warp every channel with the shared flows.
pub fn apply_flows(seq: &Sequence, flows: &[FlowField]) -> Result<Sequence> {
    let channels = seq
        .channels()
        .iter()
        .map(|c| Ok(FrameSequence::from_volume_clamped(warp_sequence(c, flows)?)?))
        .collect::<Result<_>>()?;
    Sequence::from_channels(channels)
}

fn channel_references(
    seq: &Sequence,
    method: ReferenceMethod,
    sigma: f64,
) -> Result<Vec<Image>> {
    seq.channels()
        .iter()
        .map(|c| Ok(build_reference(c, method, sigma)?.image))
        .collect()
}

/// Reference frame plus registration, repeated `cfg.ref_passes` times: every
/// later pass rebuilds the reference from the previous pass's registered
/// frames and registers the original frames again. Flow runs on luma.
pub fn register_passes(
    seq: &Sequence,
    method: ReferenceMethod,
    explicit: Option<&Image>,
    cfg: &RunConfig,
) -> Result<(Vec<Image>, Vec<FlowField>, Sequence)> {
    let luma = seq.luma();
    let mut reference = match explicit {
        Some(r) => r.clone(),
        None => build_reference(&luma, method, cfg.sigma)?.image,
    };
    let mut refs = match explicit {
        Some(r) => vec![r.clone(); seq.channels().len()],
        None => channel_references(seq, method, cfg.sigma)?,
    };
    let mut flows = estimate_flows(&luma, &reference, cfg)?;
    let mut registered = apply_flows(seq, &flows)?;
    for _ in 1..cfg.ref_passes {
        reference = build_reference(&registered.luma(), method, cfg.sigma)?.image;
        refs = channel_references(&registered, method, cfg.sigma)?;
        flows = estimate_flows(&luma, &reference, cfg)?;
        registered = apply_flows(seq, &flows)?;
    }
    Ok((refs, flows, registered))
}

/// Per-channel solver runs.
pub fn refine_channels(seq: &Sequence, cfg: &RunConfig) -> Result<(Vec<RefineOutput>, Sequence)> {
    let outputs: Vec<RefineOutput> = seq
        .channels()
        .par_iter()
        .map(|c| Ok(refine(c, cfg)?))
        .collect::<Result<_>>()?;
    let channels = outputs
        .iter()
        .map(|o| Ok(o.background_sequence()?))
        .collect::<Result<_>>()?;
    Ok((outputs, Sequence::from_channels(channels)?))
}

/// `x + amount * (x - blur(x))`, clipped.
pub fn unsharp_mask(seq: &Sequence, sigma: f64, amount: f64) -> Result<Sequence> {
    let channels = seq
        .channels()
        .iter()
        .map(|c| {
            let frames: Vec<Image> = c
                .frame_images()
                .iter()
                .map(|f| {
                    let blurred = filter::gaussian_blur(f, sigma);
                    let mut out = f.clone();
                    for (o, b) in out.as_mut_slice().iter_mut().zip(blurred.as_slice()) {
                        *o = (*o + amount * (*o - b)).clamp(0.0, 1.0);
                    }
                    out
                })
                .collect();
            Ok(FrameSequence::from_frames(&frames)?)
        })
        .collect::<Result<_>>()?;
    Sequence::from_channels(channels)
}

/// Run the stages of `plan` on `input`.
pub fn restore(input: &Sequence, plan: &PipelinePlan) -> Result<Restoration> {
    plan.validate()?;
    plan.config.validate_for_frames(input.dims().2)?;
    let cfg = &plan.config;
    let mut stage_seconds = Vec::new();
    let mut out = Restoration {
        reference: None,
        flows: None,
        registered: None,
        refined: None,
        restored: input.clone(),
        stage_seconds: Vec::new(),
    };

    if plan.has(Stage::Register) {
        let start = Instant::now();
        let (refs, flows, registered) =
            register_passes(input, plan.method, plan.reference.as_ref(), cfg)
                .map_err(Error::in_stage("register"))?;
        stage_seconds.push((Stage::Register, start.elapsed().as_secs_f64()));
        out.reference = Some(refs);
        out.flows = Some(flows);
        out.restored = registered.clone();
        out.registered = Some(registered);
    } else if plan.has(Stage::RefFrame) {
        let start = Instant::now();
        out.reference = Some(
            channel_references(input, plan.method, cfg.sigma)
                .map_err(Error::in_stage("ref-frame"))?,
        );
        stage_seconds.push((Stage::RefFrame, start.elapsed().as_secs_f64()));
    }

    if plan.has(Stage::Refine) {
        let start = Instant::now();
        let (outputs, background) =
            refine_channels(&out.restored, cfg).map_err(Error::in_stage("refine"))?;
        stage_seconds.push((Stage::Refine, start.elapsed().as_secs_f64()));
        out.refined = Some(outputs);
        out.restored = background;
    }

    if plan.deblur {
        out.restored = unsharp_mask(&out.restored, 1.0, 0.5)?;
    }
    out.stage_seconds = stage_seconds;
    Ok(out)
}

/// Pooled PSNR over frames and channels, and mean SSIM.
pub fn score(seq: &Sequence, clean: &[Image]) -> Result<(f64, f64)> {
    if clean.len() != seq.channels().len() {
        return Err(Error::Input(format!(
            "clean image has {} channels, sequence has {}",
            clean.len(),
            seq.channels().len()
        )));
    }
    let mut mse = 0.0;
    let mut ssim = 0.0;
    for (c, img) in seq.channels().iter().zip(clean) {
        let p = sequence_psnr(c, img)?;
        mse += if p >= cdsp_core::metrics::PSNR_CAP {
            0.0
        } else {
            10f64.powf(-p / 10.0)
        };
        ssim += sequence_ssim(c, img)?;
    }
    let n = clean.len() as f64;
    let psnr = if mse == 0.0 {
        cdsp_core::metrics::PSNR_CAP
    } else {
        (10.0 * (n / mse).log10()).min(cdsp_core::metrics::PSNR_CAP)
    };
    Ok((psnr, ssim / n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scene: String,
    pub severity: String,
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Left blank unless timing is requested, so reports stay reproducible.
    pub runtime_s: Option<f64>,
}

impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {:.3} dB, SSIM {:.4}",
            self.scene, self.severity, self.method, self.psnr, self.ssim
        )
    }
}

pub const REPORT_HEADER: [&str; 6] = ["scene", "severity", "method", "psnr", "ssim", "runtime_s"];

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.scene.clone(),
            r.severity.clone(),
            r.method.clone(),
            format!("{:.6}", r.psnr),
            format!("{:.6}", r.ssim),
            r.runtime_s.map_or_else(String::new, |s| format!("{s:.3}")),
        ])?;
    }
    w.flush().map_err(Error::io("report"))?;
    Ok(())
}

/// One simulated sequence of a benchmark suite.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub scene: String,
    pub severity: String,
    pub bundle: GroundTruthBundle,
}

/// Standard scenes at 128x128, each degraded at `tilts` (pixels) with `t`
/// frames, correlation length 8 px and the simulator's default blur and noise.
pub fn standard_suite(scenes: usize, tilts: &[f64], frames: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let base = TurbulenceParams {
        tilt_std: 1.0,
        frames,
        seed,
        ..TurbulenceParams::default()
    };
    let mut out = Vec::new();
    for s in 0..scenes.min(STANDARD_SCENES) {
        let clean = standard_scene(s, 128, 128);
        for (bundle, tilt) in severity_ladder(&clean, &base, tilts)?.into_iter().zip(tilts) {
            out.push(SuiteEntry {
                scene: SCENE_NAMES[s].to_string(),
                severity: format!("tilt{tilt}"),
                bundle,
            });
        }
    }
    Ok(out)
}

/// Solver settings used for suite runs: default parameters except a coarser
/// group grid, smaller groups, ten outer iterations and three
/// reference/registration passes, which keeps the 20-sequence suite within
/// minutes on one core.
pub fn suite_config() -> RunConfig {
    RunConfig {
        patch_stride: 8,
        group_size: 20,
        max_iters: 10,
        ref_passes: 3,
        ..RunConfig::default()
    }
}

pub const METHOD_NEITHER: &str = "neither";
pub const METHOD_FRF_ONLY: &str = "frf-only";
pub const METHOD_SLRTR_ONLY: &str = "slrtr-only";
pub const METHOD_FULL: &str = "full";
pub const METHOD_REF_TEMP_AVG: &str = "ref-temp-avg";
pub const METHOD_REF_FRF: &str = "ref-frf";

/// Solver diagnostics of one suite entry.
#[derive(Debug, Clone)]
pub struct EntryDiagnostics {
    pub scene: String,
    pub severity: String,
    /// `sigma_1 / sum(sigma)` of the distorted, registered and refined stacks.
    pub concentration: [f64; 3],
    /// Objective traces of the full, refine-only and temporal-average runs.
    pub traces: Vec<Vec<f64>>,
}

impl EntryDiagnostics {
    /// Largest `obj[k] - obj[k-1]` relative to `|obj[k-1]|` over all traces.
    pub fn worst_objective_increase(&self) -> f64 {
        self.traces
            .iter()
            .flat_map(|t| t.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<ReportRow>,
    pub diagnostics: Vec<EntryDiagnostics>,
}

impl AblationReport {
    /// Mean PSNR of `method` over all entries.
    pub fn mean_psnr(&self, method: &str) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.psnr)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn mean_psnr_at(&self, method: &str, severity: &str) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.severity == severity)
            .map(|r| r.psnr)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn timed<T>(timing: bool, f: impl FnOnce() -> Result<T>) -> Result<(T, Option<f64>)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, timing.then(|| start.elapsed().as_secs_f64())))
}

fn trace_values(o: &[RefineOutput]) -> Vec<f64> {
    o[0].trace.iter().map(|e| e.objective).collect()
}

fn ablate_entry(entry: &SuiteEntry, cfg: &RunConfig, timing: bool) -> Result<(Vec<ReportRow>, EntryDiagnostics)> {
    let clean = [entry.bundle.clean.clone()];
    let distorted = Sequence::gray(entry.bundle.distorted.clone());
    let row = |method: &str, seq: &Sequence, runtime_s: Option<f64>| -> Result<ReportRow> {
        let (psnr, ssim) = score(seq, &clean)?;
        Ok(ReportRow {
            scene: entry.scene.clone(),
            severity: entry.severity.clone(),
            method: method.to_string(),
            psnr,
            ssim,
            runtime_s,
        })
    };

    let ((_, _, registered), t_reg) = timed(timing, || {
        register_passes(&distorted, ReferenceMethod::FrequencyAware, None, cfg)
    })?;
    let ((full_out, full), t_ref) = timed(timing, || refine_channels(&registered, cfg))?;
    let ((slrtr_out, slrtr), t_slrtr) = timed(timing, || refine_channels(&distorted, cfg))?;
    let ((ta_out, ta), t_ta) = timed(timing, || {
        let (_, _, r) = register_passes(&distorted, ReferenceMethod::TemporalAverage, None, cfg)?;
        refine_channels(&r, cfg)
    })?;
    let t_full = t_reg.zip(t_ref).map(|(a, b)| a + b);

    let rows = vec![
        row(METHOD_NEITHER, &distorted, timing.then_some(0.0))?,
        row(METHOD_FRF_ONLY, &registered, t_reg)?,
        row(METHOD_SLRTR_ONLY, &slrtr, t_slrtr)?,
        row(METHOD_FULL, &full, t_full)?,
        row(METHOD_REF_TEMP_AVG, &ta, t_ta)?,
        row(METHOD_REF_FRF, &full, t_full)?,
    ];
    let diag = EntryDiagnostics {
        scene: entry.scene.clone(),
        severity: entry.severity.clone(),
        concentration: [
            singular_spectrum(&distorted.channels()[0], "distorted").concentration,
            singular_spectrum(&registered.channels()[0], "registered").concentration,
            singular_spectrum(&full.channels()[0], "refined").concentration,
        ],
        traces: vec![
            trace_values(&full_out),
            trace_values(&slrtr_out),
            trace_values(&ta_out),
        ],
    };
    Ok((rows, diag))
}

/// For every entry: the 2x2 reference-registration / refinement matrix
/// (`neither`, `frf-only`, `slrtr-only`, `full`) and the reference-frame swap
/// (`ref-temp-avg`, `ref-frf`), in entry order.
pub fn run_ablation_matrix(entries: &[SuiteEntry], cfg: &RunConfig, timing: bool) -> Result<AblationReport> {
    if entries.is_empty() {
        return Err(Error::Input("the ablation needs at least one sequence".into()));
    }
    cfg.validate()?;
    let results: Vec<(Vec<ReportRow>, EntryDiagnostics)> = entries
        .par_iter()
        .map(|e| ablate_entry(e, cfg, timing))
        .collect::<Result<_>>()?;
    let mut report = AblationReport {
        rows: Vec::new(),
        diagnostics: Vec::new(),
    };
    for (rows, diag) in results {
        report.rows.extend(rows);
        report.diagnostics.push(diag);
    }
    Ok(report)
}
