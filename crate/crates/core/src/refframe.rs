//! Reference frames: the plain temporal average and the frequency-aware
//! reference frame (FRF).
//!
//! The FRF counts, at every pixel, how often each 8-bit intensity level
//! occurs along time and averages the levels with weights that grow
//! exponentially with that count. Levels that show up most often (the pixel
//! most likely sitting at its undistorted position) dominate the result.
//! With `sigma = 0` every weight is one and the FRF collapses to the
//! temporal average.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::{FrameSequence, Image};

/// Number of quantization levels used for counting.
pub const LEVELS: usize = 256;

/// Map an intensity in `[0, 1]` to its 8-bit level.
#[inline]
pub fn quantize(value: f64) -> u16 {
    libm::round(value.clamp(0.0, 1.0) * (LEVELS - 1) as f64) as u16
}

/// Occurrences of one quantized level at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCount {
    pub level: u16,
    pub count: u32,
    /// Sum of the original (unquantized) samples that fell in this level.
    pub sum: f64,
}

impl LevelCount {
    /// Representative intensity of the level: the mean of its original samples.
    pub fn intensity(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Per-position table of intensity-level counts, stored compactly.
#[derive(Debug, Clone)]
pub struct IntensityHistogram {
    height: usize,
    width: usize,
    frames: usize,
    offsets: Vec<usize>,
    entries: Vec<LevelCount>,
}

impl IntensityHistogram {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Occupied levels at `(y, x)` in increasing level order.
    pub fn at(&self, y: usize, x: usize) -> &[LevelCount] {
        let p = y * self.width + x;
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }
}

pub fn build_histogram(seq: &FrameSequence) -> IntensityHistogram {
    let (h, w, t) = seq.dims();
    let mut offsets = Vec::with_capacity(h * w + 1);
    let mut entries = Vec::with_capacity(h * w * 4);
    let mut samples: Vec<(u16, f64)> = Vec::with_capacity(t);
    offsets.push(0);
    for y in 0..h {
        for x in 0..w {
            samples.clear();
            samples.extend((0..t).map(|f| {
                let v = seq.get(y, x, f);
                (quantize(v), v)
            }));
            samples.sort_by_key(|s| s.0);
            let mut current: Option<LevelCount> = None;
            for &(level, v) in &samples {
                match current.as_mut() {
                    Some(c) if c.level == level => {
                        c.count += 1;
                        c.sum += v;
                    }
                    _ => {
                        if let Some(c) = current.take() {
                            entries.push(c);
                        }
                        current = Some(LevelCount {
                            level,
                            count: 1,
                            sum: v,
                        });
                    }
                }
            }
            entries.extend(current);
            offsets.push(entries.len());
        }
    }
    IntensityHistogram {
        height: h,
        width: w,
        frames: t,
        offsets,
        entries,
    }
}

/// Raw frequency weight `exp(sigma * count)`. Overflows to infinity for
/// large `sigma * count`; the reference-frame code uses [`relative_weight`].
pub fn frequency_weight(count: u32, sigma: f64) -> f64 {
    libm::exp(sigma * count as f64)
}

/// Frequency weight divided by the largest weight at the same position,
/// `exp(sigma * (count - max_count))`, which lies in `(0, 1]`.
pub fn relative_weight(count: u32, max_count: u32, sigma: f64) -> f64 {
    libm::exp(sigma * (count as f64 - max_count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    TemporalAverage,
    FrequencyAware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrame {
    pub image: Image,
    pub method: ReferenceMethod,
    pub sigma: f64,
}

/// Weighted average of the levels at one position.
fn frequency_aware_value(levels: &[LevelCount], sigma: f64) -> f64 {
    let max_count = levels.iter().map(|l| l.count).max().unwrap_or(1);
    let mut num = 0.0;
    let mut den = 0.0;
    for l in levels {
        let wgt = relative_weight(l.count, max_count, sigma);
        // N * I * w, with N * I being the level's sample sum.
        num += l.sum * wgt;
        den += l.count as f64 * wgt;
    }
    num / den
}

/// Frequency-aware reference frame built from a precomputed histogram.
pub fn frf_from_histogram(hist: &IntensityHistogram, sigma: f64) -> Result<ReferenceFrame> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: "must be >= 0",
        });
    }
    let (h, w) = hist.dims();
    let image = Image::from_fn(h, w, |y, x| {
        frequency_aware_value(hist.at(y, x), sigma).clamp(0.0, 1.0)
    });
    Ok(ReferenceFrame {
        image,
        method: ReferenceMethod::FrequencyAware,
        sigma,
    })
}

pub fn build_frf(seq: &FrameSequence, sigma: f64) -> Result<ReferenceFrame> {
    frf_from_histogram(&build_histogram(seq), sigma)
}

pub fn build_temp_avg(seq: &FrameSequence) -> ReferenceFrame {
    ReferenceFrame {
        image: seq.temporal_mean().clamp_unit(),
        method: ReferenceMethod::TemporalAverage,
        sigma: 0.0,
    }
}

pub fn build_reference(
    seq: &FrameSequence,
    method: ReferenceMethod,
    sigma: f64,
) -> Result<ReferenceFrame> {
    match method {
        ReferenceMethod::TemporalAverage => Ok(build_temp_avg(seq)),
        ReferenceMethod::FrequencyAware => build_frf(seq, sigma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use alloc::vec;

    fn trace_sequence(trace: &[f64]) -> FrameSequence {
        FrameSequence::new(Volume::from_fn(16, 16, trace.len(), |_, _, t| trace[t])).unwrap()
    }

    #[test]
    fn constant_sequence_has_single_level() {
        let seq = trace_sequence(&[0.5; 10]);
        let hist = build_histogram(&seq);
        for y in 0..16 {
            for x in 0..16 {
                let at = hist.at(y, x);
                assert_eq!(at.len(), 1);
                assert_eq!(at[0].count, 10);
            }
        }
    }

    #[test]
    fn counts_two_level_trace() {
        let trace: Vec<f64> = [10.0, 10.0, 10.0, 20.0, 20.0]
            .iter()
            .map(|v| v / 255.0)
            .collect();
        let hist = build_histogram(&trace_sequence(&trace));
        let at = hist.at(3, 7);
        let got: Vec<(u16, u32)> = at.iter().map(|l| (l.level, l.count)).collect();
        assert_eq!(got, vec![(10, 3), (20, 2)]);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(frequency_weight(5, 0.0), 1.0);
        assert!((frequency_weight(3, core::f64::consts::LN_2) - 8.0).abs() < 1e-12);
        let w = relative_weight(800, 800, 0.1);
        assert_eq!(w, 1.0);
        assert!(relative_weight(1, 800, 10.0).is_finite());
    }

    #[test]
    fn frf_on_two_level_trace() {
        let trace: Vec<f64> = [10.0, 10.0, 10.0, 20.0, 20.0]
            .iter()
            .map(|v| v / 255.0)
            .collect();
        let seq = trace_sequence(&trace);
        let frf = build_frf(&seq, core::f64::consts::LN_2).unwrap();
        assert!((frf.image.get(0, 0) - 12.5 / 255.0).abs() < 1e-14);
        let flat = build_frf(&seq, 0.0).unwrap();
        assert!((flat.image.get(5, 5) - 14.0 / 255.0).abs() < 1e-14);
        let avg = build_temp_avg(&seq);
        assert!((avg.image.get(5, 5) - 14.0 / 255.0).abs() < 1e-14);
    }

    #[test]
    fn temp_avg_of_binary_trace() {
        let seq = trace_sequence(&[0.0, 1.0]);
        assert_eq!(build_temp_avg(&seq).image.get(2, 2), 0.5);
    }

    #[test]
    fn constant_sequence_is_fixed_for_any_sigma() {
        let seq = trace_sequence(&[0.3; 6]);
        for sigma in [0.0, 0.1, 2.0, 50.0] {
            let frf = build_frf(&seq, sigma).unwrap();
            assert!((frf.image.get(1, 1) - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_sigma_rejected() {
        let seq = trace_sequence(&[0.3; 6]);
        assert!(build_frf(&seq, -1.0).is_err());
    }
}
