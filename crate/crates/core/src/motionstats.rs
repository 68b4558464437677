//! Displacement statistics of tracked corners.
//!
//! Corners are detected once on the temporal median frame and followed
//! through every frame with a translational Lucas-Kanade fit. Each track is
//! expressed relative to its own temporal median position, which is what a
//! static scene seen through turbulence should wobble around.

use alloc::vec::Vec;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filter;
use crate::volume::{FrameSequence, Image};

/// Side of the tracking window.
pub const WINDOW: usize = 15;
/// Integer search range of the initial match, pixels.
pub const SEARCH: usize = 8;
pub const MIN_FEATURES: usize = 4;
pub const MIN_SAMPLES: usize = 100;
/// Equal-probability bins of the goodness-of-fit test.
pub const CHI_SQUARE_BINS: usize = 20;

const HARRIS_K: f64 = 0.04;
const HARRIS_SIGMA: f64 = 1.5;
/// Corners weaker than this fraction of the strongest are ignored.
const HARRIS_THRESHOLD: f64 = 0.05;
const SUPPRESSION_RADIUS: usize = 5;
const MAX_FEATURES: usize = 400;
const LK_ITERATIONS: usize = 20;
const LK_STEP_TOL: f64 = 1e-3;
/// A track needs valid observations in this fraction of the frames.
const MIN_VALID_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Corner position `(y, x)` in the median frame.
    pub position: (usize, usize),
    /// Per-frame `(dx, dy)` relative to the track's median; `None` where the
    /// fit failed.
    pub offsets: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementSamples {
    pub tracks: Vec<Track>,
    pub frames: usize,
}

impl DisplacementSamples {
    pub fn feature_count(&self) -> usize {
        self.tracks.len()
    }

    /// All valid `(dx, dy)` pairs, track by track.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.tracks
            .iter()
            .flat_map(|t| t.offsets.iter().flatten().copied())
            .collect()
    }
}

/// Harris response `det(M) - k tr(M)^2` of the smoothed structure tensor.
pub fn harris_response(image: &Image) -> Image {
    let (gx, gy) = filter::gradients(image);
    let prod = |a: &Image, b: &Image| {
        let data = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x * y)
            .collect();
        filter::gaussian_blur(
            &Image::new(a.height(), a.width(), data).expect("same shape"),
            HARRIS_SIGMA,
        )
    };
    let (xx, yy, xy) = (prod(&gx, &gx), prod(&gy, &gy), prod(&gx, &gy));
    let (h, w) = image.dims();
    Image::from_fn(h, w, |y, x| {
        let (a, b, c) = (xx.get(y, x), yy.get(y, x), xy.get(y, x));
        let tr = a + b;
        a * b - c * c - HARRIS_K * tr * tr
    })
}

/// Local maxima of the Harris response at least `margin` pixels from the
/// border, strongest first.
pub fn detect_corners(image: &Image, margin: usize) -> Vec<(usize, usize)> {
    let (h, w) = image.dims();
    if h <= 2 * margin || w <= 2 * margin {
        return Vec::new();
    }
    let resp = harris_response(image);
    let peak = resp.as_slice().iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let r = SUPPRESSION_RADIUS;
    let mut corners = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let v = resp.get(y, x);
            if v < HARRIS_THRESHOLD * peak {
                continue;
            }
            let mut is_max = true;
            'nbhd: for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    let u = resp.get(ny, nx);
                    // Plateaus keep their first pixel in raster order.
                    if u > v || (u == v && (ny, nx) < (y, x)) {
                        is_max = false;
                        break 'nbhd;
                    }
                }
            }
            if is_max {
                corners.push((v, y, x));
            }
        }
    }
    corners.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    corners.truncate(MAX_FEATURES);
    corners.into_iter().map(|(_, y, x)| (y, x)).collect()
}

fn window_ssd(
    frame: &Image,
    template: &[f64],
    center: (usize, usize),
    dy: isize,
    dx: isize,
) -> f64 {
    let half = (WINDOW / 2) as isize;
    let (cy, cx) = (center.0 as isize + dy, center.1 as isize + dx);
    let mut sum = 0.0;
    let mut k = 0;
    for y in -half..=half {
        for x in -half..=half {
            let d = frame.get_clamped(cy + y, cx + x) - template[k];
            sum += d * d;
            k += 1;
        }
    }
    sum
}

/// Translation `(dx, dy)` with `frame(p + d) ~ template(p)` over the window
/// around `center`: exhaustive integer search, then Gauss-Newton.
fn track_window(
    frame: &Image,
    grads: &(Image, Image),
    template: &[f64],
    center: (usize, usize),
) -> Option<(f64, f64)> {
    let s = SEARCH as isize;
    let mut best = (f64::INFINITY, 0isize, 0isize);
    for dy in -s..=s {
        for dx in -s..=s {
            let ssd = window_ssd(frame, template, center, dy, dx);
            // Ties prefer the smaller shift, then raster order.
            let better = ssd < best.0
                || (ssd == best.0 && dy * dy + dx * dx < best.1 * best.1 + best.2 * best.2);
            if better {
                best = (ssd, dy, dx);
            }
        }
    }
    let half = (WINDOW / 2) as isize;
    let (mut vy, mut vx) = (best.1 as f64, best.2 as f64);
    let (gx, gy) = grads;
    for _ in 0..LK_ITERATIONS {
        let (mut a, mut b, mut c, mut ex, mut ey) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut k = 0;
        for y in -half..=half {
            for x in -half..=half {
                let py = center.0 as f64 + y as f64 + vy;
                let px = center.1 as f64 + x as f64 + vx;
                let ix = gx.sample_bilinear(py, px);
                let iy = gy.sample_bilinear(py, px);
                let it = frame.sample_bilinear(py, px) - template[k];
                a += ix * ix;
                b += ix * iy;
                c += iy * iy;
                ex += ix * it;
                ey += iy * it;
                k += 1;
            }
        }
        let det = a * c - b * b;
        if !(det > 1e-12 * (a + c) * (a + c)) {
            return None;
        }
        let step_x = -(c * ex - b * ey) / det;
        let step_y = -(a * ey - b * ex) / det;
        vx += step_x;
        vy += step_y;
        if vx.abs() > SEARCH as f64 + 1.0 || vy.abs() > SEARCH as f64 + 1.0 {
            return None;
        }
        if step_x.abs() < LK_STEP_TOL && step_y.abs() < LK_STEP_TOL {
            return Some((vx, vy));
        }
    }
    None
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Detect corners on the temporal median frame and measure their per-frame
/// displacement.
pub fn track_features(seq: &FrameSequence) -> Result<DisplacementSamples> {
    let t = seq.frames();
    let reference = seq.temporal_median();
    let margin = WINDOW / 2 + SEARCH + 2;
    let corners = detect_corners(&reference, margin);
    if corners.len() < MIN_FEATURES {
        return Err(Error::InsufficientFeatures {
            found: corners.len(),
            required: MIN_FEATURES,
        });
    }
    let half = (WINDOW / 2) as isize;
    let templates: Vec<Vec<f64>> = corners
        .iter()
        .map(|&(cy, cx)| {
            let mut w = Vec::with_capacity(WINDOW * WINDOW);
            for y in -half..=half {
                for x in -half..=half {
                    w.push(reference.get_clamped(cy as isize + y, cx as isize + x));
                }
            }
            w
        })
        .collect();
    let mut raw: Vec<Vec<Option<(f64, f64)>>> = vec_of(corners.len(), t);
    for f in 0..t {
        let frame = seq.frame(f);
        let grads = filter::gradients(&frame);
        for (i, &c) in corners.iter().enumerate() {
            raw[i][f] = track_window(&frame, &grads, &templates[i], c);
        }
    }
    let min_valid = libm::ceil(MIN_VALID_FRACTION * t as f64) as usize;
    let mut tracks = Vec::new();
    for (i, obs) in raw.into_iter().enumerate() {
        let valid: Vec<(f64, f64)> = obs.iter().flatten().copied().collect();
        if valid.len() < min_valid {
            continue;
        }
        let mx = median(&mut valid.iter().map(|v| v.0).collect::<Vec<_>>());
        let my = median(&mut valid.iter().map(|v| v.1).collect::<Vec<_>>());
        tracks.push(Track {
            position: corners[i],
            offsets: obs
                .into_iter()
                .map(|o| o.map(|(x, y)| (x - mx, y - my)))
                .collect(),
        });
    }
    if tracks.len() < MIN_FEATURES {
        return Err(Error::InsufficientFeatures {
            found: tracks.len(),
            required: MIN_FEATURES,
        });
    }
    Ok(DisplacementSamples { tracks, frames: t })
}

fn vec_of(n: usize, t: usize) -> Vec<Vec<Option<(f64, f64)>>> {
    (0..n).map(|_| alloc::vec![None; t]).collect()
}

/// Maximum-likelihood Gaussian fit of one axis with a chi-square statistic
/// over equal-probability bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFit {
    pub mean: f64,
    pub std: f64,
    pub chi_square: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    /// `[x, y]`, pixels.
    pub mean: [f64; 2],
    pub std: [f64; 2],
    /// Sum of both axes' chi-square statistics.
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Fit one axis. Bin edges are the quantiles of the fitted normal.
pub fn fit_axis(values: &[f64]) -> Result<AxisFit> {
    let n = values.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            found: n,
            required: MIN_SAMPLES,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(var);
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::DegenerateSpread);
    }
    let normal = Normal::new(mean, std).map_err(|_| Error::DegenerateSpread)?;
    let mut counts = [0usize; CHI_SQUARE_BINS];
    for &v in values {
        let bin = (normal.cdf(v) * CHI_SQUARE_BINS as f64) as usize;
        counts[bin.min(CHI_SQUARE_BINS - 1)] += 1;
    }
    let expected = n as f64 / CHI_SQUARE_BINS as f64;
    let chi_square = counts
        .iter()
        .map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected)
        .sum();
    Ok(AxisFit {
        mean,
        std,
        chi_square,
    })
}

/// Fit both axes; degrees of freedom are `bins - 1 - 2` per axis.
pub fn fit_gaussian(samples: &[(f64, f64)]) -> Result<GaussianFit> {
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let fx = fit_axis(&xs)?;
    let fy = fit_axis(&ys)?;
    let chi_square = fx.chi_square + fy.chi_square;
    let dof = 2 * (CHI_SQUARE_BINS - 3);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(GaussianFit {
        mean: [fx.mean, fy.mean],
        std: [fx.std, fy.std],
        chi_square,
        dof,
        p_value: 1.0 - dist.cdf(chi_square),
    })
}
