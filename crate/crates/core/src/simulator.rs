//! Synthetic turbulence: random tilt, blur and sensor noise applied to a
//! clean image, with the true per-frame displacement fields kept as ground
//! truth.
//!
//! Tilt fields are i.i.d. Gaussian vector fields smoothed with a periodic
//! Gaussian of width `correlation_length` and rescaled so every pixel's
//! displacement has standard deviation `tilt_std` on each axis. Frames are
//! independent of each other.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filter::{self, Border};
use crate::optflow::{warp_backward, FlowField};
use crate::volume::{FrameSequence, Image, Volume};

#[derive(Debug, Clone, PartialEq)]
pub struct TurbulenceParams {
    /// Per-axis displacement standard deviation, pixels.
    pub tilt_std: f64,
    /// Width of the Gaussian that correlates the tilt field, pixels.
    pub correlation_length: f64,
    /// Gaussian blur applied after warping, pixels (0 disables).
    pub blur_sigma: f64,
    /// Additive Gaussian noise standard deviation, intensity units.
    pub noise_std: f64,
    pub frames: usize,
    pub seed: u64,
}

impl Default for TurbulenceParams {
    fn default() -> Self {
        Self {
            tilt_std: 2.0,
            correlation_length: 8.0,
            blur_sigma: 0.8,
            noise_std: 0.01,
            frames: 50,
            seed: 42,
        }
    }
}

impl TurbulenceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.tilt_std.is_finite() && self.tilt_std >= 0.0) {
            return bad("tilt_std", "must be >= 0");
        }
        if !(self.correlation_length.is_finite() && self.correlation_length > 0.0) {
            return bad("correlation_length", "must be > 0");
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return bad("blur_sigma", "must be >= 0");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std", "must be >= 0");
        }
        if self.frames < 2 {
            return bad("frames", "must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub clean: Image,
    pub distorted: FrameSequence,
    /// True field of every frame: `warp_backward(clean, flows[t])` is frame
    /// `t` before blur and noise.
    pub flows: Vec<FlowField>,
    pub params: TurbulenceParams,
}

/// Independent random streams per frame.
fn frame_rng(seed: u64, frame: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 * 2 + stream);
    rng
}

fn white_noise(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Image {
    Image::from_fn(height, width, |_, _| StandardNormal.sample(rng))
}

/// Draw the tilt field of one frame.
pub fn tilt_field(
    height: usize,
    width: usize,
    params: &TurbulenceParams,
    frame: usize,
) -> FlowField {
    if params.tilt_std == 0.0 {
        return FlowField::zeros(height, width);
    }
    let mut rng = frame_rng(params.seed, frame, 0);
    let kernel = filter::gaussian_kernel(params.correlation_length);
    // A separable unit-sum kernel scales white-noise variance by (sum g_i^2)^2.
    let gain: f64 = kernel.iter().map(|g| g * g).sum();
    let scale = params.tilt_std / gain;
    let u = filter::separable(
        &white_noise(&mut rng, height, width),
        &kernel,
        Border::Periodic,
    );
    let v = filter::separable(
        &white_noise(&mut rng, height, width),
        &kernel,
        Border::Periodic,
    );
    FlowField::new(
        height,
        width,
        u.as_slice().iter().map(|c| c * scale).collect(),
        v.as_slice().iter().map(|c| c * scale).collect(),
    )
    .expect("matching sizes")
}

/// Synthesize a distorted sequence from `clean`.
pub fn generate(clean: &Image, params: &TurbulenceParams) -> Result<GroundTruthBundle> {
    params.validate()?;
    let (h, w) = clean.dims();
    let mut frames = Vec::with_capacity(params.frames);
    let mut flows = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        let flow = tilt_field(h, w, params, t);
        let mut frame = filter::gaussian_blur(&warp_backward(clean, &flow), params.blur_sigma);
        if params.noise_std > 0.0 {
            let mut rng = frame_rng(params.seed, t, 1);
            for v in frame.as_mut_slice() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += params.noise_std * n;
            }
        }
        frames.push(frame.clamp_unit());
        flows.push(flow);
    }
    Ok(GroundTruthBundle {
        clean: clean.clone(),
        distorted: FrameSequence::new(Volume::from_frames(&frames)?)?,
        flows,
        params: params.clone(),
    })
}

/// One bundle per severity; level `i` scales `base.tilt_std` by `levels[i]`
/// and uses seed `base.seed + i`.
pub fn severity_ladder(
    clean: &Image,
    base: &TurbulenceParams,
    levels: &[f64],
) -> Result<Vec<GroundTruthBundle>> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: "must not be empty",
        });
    }
    if levels.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: "must be strictly ascending",
        });
    }
    levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            let params = TurbulenceParams {
                tilt_std: base.tilt_std * level,
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            generate(clean, &params)
        })
        .collect()
}
