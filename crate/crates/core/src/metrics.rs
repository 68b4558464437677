//! PSNR, SSIM and the singular spectrum of a frame stack.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filter::gaussian_kernel;
use crate::volume::{Image, Volume};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Something with a shape and a flat sample buffer.
pub trait Raster {
    fn shape(&self) -> (usize, usize, usize);
    fn samples(&self) -> &[f64];
}

impl Raster for Image {
    fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), 1)
    }
    fn samples(&self) -> &[f64] {
        self.as_slice()
    }
}

impl Raster for Volume {
    fn shape(&self) -> (usize, usize, usize) {
        self.dims()
    }
    fn samples(&self) -> &[f64] {
        self.as_slice()
    }
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * libm::log10(1.0 / mse)).min(PSNR_CAP)
    }
}

/// Peak signal-to-noise ratio for unit-range signals, capped at 99 dB.
pub fn psnr<R: Raster>(a: &R, b: &R) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let (sa, sb) = (a.samples(), b.samples());
    let mse = sa
        .iter()
        .zip(sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / sa.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR of every frame of `seq` against `clean`, pooled into one MSE.
pub fn sequence_psnr(seq: &Volume, clean: &Image) -> Result<f64> {
    if (seq.height(), seq.width()) != clean.dims() {
        return Err(Error::DimensionMismatch {
            expected: (clean.height(), clean.width(), seq.frames()),
            found: seq.dims(),
        });
    }
    let c = clean.as_slice();
    let mut sum = 0.0;
    for t in 0..seq.frames() {
        sum += seq
            .frame_slice(t)
            .iter()
            .zip(c)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(psnr_from_mse(sum / seq.as_slice().len() as f64))
}

/// Valid-mode separable filtering.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut tmp = alloc::vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = alloc::vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// averaged over windows that fit entirely inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: (a.height(), a.width(), 1),
            found: (b.height(), b.width(), 1),
        });
    }
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageSmallerThanWindow {
            height: h,
            width: w,
            size: SSIM_WINDOW,
        });
    }
    if a == b {
        return Ok(1.0);
    }
    let k = gaussian_kernel(SSIM_SIGMA);
    debug_assert_eq!(k.len(), SSIM_WINDOW);
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        sa.iter().zip(sb).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(sa, h, w, &k);
    let mu_b = filter_valid(sb, h, w, &k);
    let e_aa = filter_valid(&prod(&|x, _| x * x), h, w, &k);
    let e_bb = filter_valid(&prod(&|_, y| y * y), h, w, &k);
    let e_ab = filter_valid(&prod(&|x, y| x * y), h, w, &k);
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// Mean SSIM of every frame against `clean`.
pub fn sequence_ssim(seq: &Volume, clean: &Image) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..seq.frames() {
        total += ssim(&seq.frame(t), clean)?;
    }
    Ok(total / seq.frames() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Singular values of the `(h*w) x t` frame matrix, non-increasing.
    pub values: Vec<f64>,
    /// `sigma_1 / sum(sigma)`.
    pub concentration: f64,
    pub label: String,
}

/// Singular values of the matrix whose columns are the frames.
pub fn singular_spectrum(seq: &Volume, label: &str) -> SpectrumReport {
    let (h, w, t) = seq.dims();
    let m = DMatrix::from_column_slice(h * w, t, seq.as_slice());
    let mut values: Vec<f64> = m.singular_values().iter().map(|s| s.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = values.iter().sum();
    let concentration = if total > 0.0 { values[0] / total } else { 0.0 };
    SpectrumReport {
        values,
        concentration,
        label: String::from(label),
    }
}
