//! Dense registration: coarse-to-fine Horn-Schunck optical flow and
//! backward warping.
//!
//! Flow follows the backward-warping convention used everywhere in this
//! crate: a field `(u, v)` maps `moving` onto `fixed` when
//! `fixed(y, x) ~ moving(y + v(y, x), x + u(y, x))`.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::FlowConfig;
use crate::error::{Error, Result};
use crate::filter;
use crate::refframe::ReferenceFrame;
use crate::volume::{FrameSequence, Image, Volume};

/// Smallest side allowed at the coarsest pyramid level.
pub const MIN_LEVEL_SIDE: usize = 16;

/// SOR relaxation factor for the Horn-Schunck sweeps.
const RELAXATION: f64 = 1.8;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            u: vec![0.0; height * width],
            v: vec![0.0; height * width],
        }
    }

    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: (height, width, 2),
                found: (u.len(), v.len(), 2),
            });
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn u(&self, y: usize, x: usize) -> f64 {
        self.u[y * self.width + x]
    }

    #[inline]
    pub fn v(&self, y: usize, x: usize) -> f64 {
        self.v[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, u: f64, v: f64) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn u_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn v_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0, |m, &c| if c.abs() > m { c.abs() } else { m })
    }

    pub fn mean_magnitude(&self) -> f64 {
        let s: f64 = self
            .u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| libm::sqrt(u * u + v * v))
            .sum();
        s / self.u.len() as f64
    }

    /// Mean endpoint error against `truth` over pixels at least `margin`
    /// away from the border.
    pub fn mean_endpoint_error(&self, truth: &FlowField, margin: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let du = self.u(y, x) - truth.u(y, x);
                let dv = self.v(y, x) - truth.v(y, x);
                sum += libm::sqrt(du * du + dv * dv);
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }

    fn component_images(&self) -> (Image, Image) {
        (
            Image::new(self.height, self.width, self.u.clone()).expect("shape"),
            Image::new(self.height, self.width, self.v.clone()).expect("shape"),
        )
    }

    fn from_components(u: Image, v: Image) -> Self {
        let (height, width) = u.dims();
        Self {
            height,
            width,
            u: u.into_vec(),
            v: v.into_vec(),
        }
    }

    /// Resample to a new resolution, scaling vectors by the size ratio.
    fn rescale(&self, height: usize, width: usize) -> Self {
        let (u, v) = self.component_images();
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let u = filter::resize(&u, height, width).map(|c| c * sx);
        let v = filter::resize(&v, height, width).map(|c| c * sy);
        Self::from_components(u, v)
    }

    fn median_filtered(&self) -> Self {
        let (u, v) = self.component_images();
        Self::from_components(filter::median3x3(&u), filter::median3x3(&v))
    }

    fn clamp(&mut self, limit: f64) {
        for c in self.u.iter_mut().chain(self.v.iter_mut()) {
            *c = c.clamp(-limit, limit);
        }
    }
}

/// Image pyramid, finest level first, halving each side per level.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<Image>,
}

impl Pyramid {
    /// Build up to `max_levels` levels, stopping before any side would drop
    /// below [`MIN_LEVEL_SIDE`].
    pub fn build(image: &Image, max_levels: usize) -> Self {
        let mut levels = vec![image.clone()];
        while levels.len() < max_levels {
            let last = levels.last().expect("non-empty");
            if last.height() / 2 < MIN_LEVEL_SIDE || last.width() / 2 < MIN_LEVEL_SIDE {
                break;
            }
            levels.push(filter::downsample(last));
        }
        Self { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, i: usize) -> &Image {
        &self.levels[i]
    }
}

/// `output(y, x) = moving(y + v, x + u)` with bilinear interpolation and
/// edge clamping.
pub fn warp_backward(moving: &Image, flow: &FlowField) -> Image {
    assert_eq!(moving.dims(), flow.dims(), "flow and image sizes differ");
    Image::from_fn(moving.height(), moving.width(), |y, x| {
        let (u, v) = (flow.u(y, x), flow.v(y, x));
        if u == 0.0 && v == 0.0 {
            moving.get(y, x)
        } else {
            moving.sample_bilinear(y as f64 + v, x as f64 + u)
        }
    })
}

/// Relaxation sweeps of the linearized Horn-Schunck system around `flow`.
fn horn_schunck_sweeps(
    flow: &mut FlowField,
    gx: &Image,
    gy: &Image,
    gt: &Image,
    alpha_sq: f64,
    sweeps: usize,
) {
    let (h, w) = flow.dims();
    let n_pix = h * w;
    let base_u = flow.u.clone();
    let base_v = flow.v.clone();
    let (ix, iy, it) = (gx.as_slice(), gy.as_slice(), gt.as_slice());
    let neighbours = |y: usize, x: usize| -> f64 {
        (usize::from(x > 0) + usize::from(x + 1 < w) + usize::from(y > 0) + usize::from(y + 1 < h))
            as f64
    };
    let mut inv_n = Vec::with_capacity(n_pix);
    let mut inv_den = Vec::with_capacity(n_pix);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let n = neighbours(y, x);
            inv_n.push(1.0 / n);
            inv_den.push(1.0 / (alpha_sq * n + ix[i] * ix[i] + iy[i] * iy[i]));
        }
    }
    let (u, v) = (&mut flow.u, &mut flow.v);
    // Red-black ordering: pixels of one colour only read the other colour.
    for _ in 0..sweeps {
        for colour in 0..2 {
            for y in 0..h {
                for x in ((y + colour) % 2..w).step_by(2) {
                    let i = y * w + x;
                    let (mut su, mut sv) = (0.0, 0.0);
                    if x > 0 {
                        su += u[i - 1];
                        sv += v[i - 1];
                    }
                    if x + 1 < w {
                        su += u[i + 1];
                        sv += v[i + 1];
                    }
                    if y > 0 {
                        su += u[i - w];
                        sv += v[i - w];
                    }
                    if y + 1 < h {
                        su += u[i + w];
                        sv += v[i + w];
                    }
                    // Increment suggested by the neighbourhood average, corrected
                    // along the image gradient by the brightness residual.
                    let p = su * inv_n[i] - base_u[i];
                    let q = sv * inv_n[i] - base_v[i];
                    let (a, b) = (ix[i], iy[i]);
                    let r = (a * p + b * q + it[i]) * inv_den[i];
                    let new_u = base_u[i] + p - a * r;
                    let new_v = base_v[i] + q - b * r;
                    u[i] += RELAXATION * (new_u - u[i]);
                    v[i] += RELAXATION * (new_v - v[i]);
                }
            }
        }
    }
}

/// Estimate the flow that warps `moving` onto `fixed`.
pub fn estimate_flow(moving: &Image, fixed: &Image, cfg: &FlowConfig) -> Result<FlowField> {
    if moving.dims() != fixed.dims() {
        return Err(Error::DimensionMismatch {
            expected: (fixed.height(), fixed.width(), 1),
            found: (moving.height(), moving.width(), 1),
        });
    }
    let moving_pyr = Pyramid::build(moving, cfg.levels);
    let fixed_pyr = Pyramid::build(fixed, cfg.levels);
    // Smoothness on the 8-bit scale, intensities here are in [0, 1].
    let alpha = cfg.smoothness / 255.0;
    let alpha_sq = alpha * alpha;

    let mut flow: Option<FlowField> = None;
    for level in (0..moving_pyr.len()).rev() {
        let m = filter::gaussian_blur(moving_pyr.level(level), cfg.presmooth_sigma);
        let f = filter::gaussian_blur(fixed_pyr.level(level), cfg.presmooth_sigma);
        let (h, w) = m.dims();
        let mut current = match flow.take() {
            None => FlowField::zeros(h, w),
            Some(coarse) => coarse.rescale(h, w),
        };
        let (fgx, fgy) = filter::gradients(&f);
        // The sweep budget of a level is shared between its warps.
        let sweeps = cfg.iterations.div_ceil(cfg.warps);
        for _ in 0..cfg.warps {
            let warped = warp_backward(&m, &current);
            let (wgx, wgy) = filter::gradients(&warped);
            let gx = Image::from_fn(h, w, |y, x| 0.5 * (wgx.get(y, x) + fgx.get(y, x)));
            let gy = Image::from_fn(h, w, |y, x| 0.5 * (wgy.get(y, x) + fgy.get(y, x)));
            let gt = Image::from_fn(h, w, |y, x| warped.get(y, x) - f.get(y, x));
            horn_schunck_sweeps(&mut current, &gx, &gy, &gt, alpha_sq, sweeps);
            current.clamp(cfg.max_displacement);
        }
        current = current.median_filtered();
        flow = Some(current);
    }
    Ok(flow.expect("pyramid has at least one level"))
}

/// One registered frame and the flow that produced it.
pub fn register_frame(
    frame: &Image,
    reference: &Image,
    cfg: &FlowConfig,
) -> Result<(Image, FlowField)> {
    let flow = estimate_flow(frame, reference, cfg)?;
    let warped = warp_backward(frame, &flow).clamp_unit();
    Ok((warped, flow))
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub registered: FrameSequence,
    pub flows: Vec<FlowField>,
}

/// Align every frame of `seq` to `reference`.
pub fn register_sequence(
    seq: &FrameSequence,
    reference: &ReferenceFrame,
    cfg: &FlowConfig,
) -> Result<Registration> {
    let mut frames = Vec::with_capacity(seq.frames());
    let mut flows = Vec::with_capacity(seq.frames());
    for t in 0..seq.frames() {
        let (warped, flow) = register_frame(&seq.frame(t), &reference.image, cfg)?;
        frames.push(warped);
        flows.push(flow);
    }
    Ok(Registration {
        registered: FrameSequence::new(Volume::from_frames(&frames)?)?,
        flows,
    })
}

/// Warp every frame of `seq` with its own flow.
pub fn warp_sequence(seq: &Volume, flows: &[FlowField]) -> Result<Volume> {
    if flows.len() != seq.frames() {
        return Err(Error::DimensionMismatch {
            expected: seq.dims(),
            found: (seq.height(), seq.width(), flows.len()),
        });
    }
    let frames: Vec<Image> = flows
        .iter()
        .enumerate()
        .map(|(t, flow)| warp_backward(&seq.frame(t), flow))
        .collect();
    Volume::from_frames(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_warp_is_identity() {
        let img = Image::from_fn(20, 24, |y, x| ((y * 31 + x * 17) % 13) as f64 / 13.0);
        let out = warp_backward(&img, &FlowField::zeros(20, 24));
        assert_eq!(out, img);
    }

    #[test]
    fn unit_flow_shifts_ramp_by_one_column() {
        let w = 32;
        let img = Image::from_fn(16, w, |_, x| x as f64 / w as f64);
        let out = warp_backward(&img, &FlowField::constant(16, w, 1.0, 0.0));
        for y in 0..16 {
            for x in 0..w - 1 {
                assert!((out.get(y, x) - (x + 1) as f64 / w as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn outside_flow_clamps_to_edge() {
        let img = Image::from_fn(16, 16, |y, x| (y + x) as f64 / 30.0);
        let out = warp_backward(&img, &FlowField::constant(16, 16, 100.0, -100.0));
        assert!(out.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(out.get(5, 5), img.get(0, 15));
    }

    #[test]
    fn pyramid_stops_at_sixteen_pixels() {
        let img = Image::zeros(128, 128);
        let pyr = Pyramid::build(&img, 10);
        assert_eq!(pyr.len(), 4);
        assert_eq!(pyr.level(3).dims(), (16, 16));
        let small = Pyramid::build(&Image::zeros(40, 40), 4);
        assert_eq!(small.len(), 2);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let cfg = FlowConfig::default();
        let err = estimate_flow(&Image::zeros(16, 16), &Image::zeros(16, 20), &cfg);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
