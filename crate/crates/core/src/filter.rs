//! Small separable filters shared by the registration, simulation and
//! metric code.

use alloc::vec;
use alloc::vec::Vec;

use crate::volume::Image;

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    Clamp,
    Periodic,
}

#[inline]
fn wrap(i: isize, n: usize, border: Border) -> usize {
    match border {
        Border::Clamp => i.clamp(0, n as isize - 1) as usize,
        Border::Periodic => i.rem_euclid(n as isize) as usize,
    }
}

/// Convolve rows then columns with the same symmetric kernel.
pub fn separable(image: &Image, kernel: &[f64], border: Border) -> Image {
    if kernel.len() == 1 {
        return image.clone();
    }
    let (h, w) = image.dims();
    let r = (kernel.len() / 2) as isize;
    let src = image.as_slice();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &c) in kernel.iter().enumerate() {
                acc += c * row[wrap(x as isize + k as isize - r, w, border)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, &c) in kernel.iter().enumerate() {
            let sy = wrap(y as isize + k as isize - r, h, border);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src_row) {
                *d += c * s;
            }
        }
    }
    Image::new(h, w, out).expect("shape preserved")
}

pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    separable(image, &gaussian_kernel(sigma), Border::Clamp)
}

/// Spatial derivatives with the 5-point central stencil `[1, -8, 0, 8, -1] / 12`,
/// clamped at the border. Returns `(d/dx, d/dy)`.
pub fn gradients(image: &Image) -> (Image, Image) {
    let (h, w) = image.dims();
    let mut gx = Image::zeros(h, w);
    let mut gy = Image::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let dx = (image.get_clamped(yi, xi - 2) - 8.0 * image.get_clamped(yi, xi - 1)
                + 8.0 * image.get_clamped(yi, xi + 1)
                - image.get_clamped(yi, xi + 2))
                / 12.0;
            let dy = (image.get_clamped(yi - 2, xi) - 8.0 * image.get_clamped(yi - 1, xi)
                + 8.0 * image.get_clamped(yi + 1, xi)
                - image.get_clamped(yi + 2, xi))
                / 12.0;
            gx.set(y, x, dx);
            gy.set(y, x, dy);
        }
    }
    (gx, gy)
}

/// Halve the resolution: anti-alias, then average 2x2 blocks.
pub fn downsample(image: &Image) -> Image {
    let smooth = gaussian_blur(image, 0.5);
    let (h, w) = image.dims();
    let (nh, nw) = (h / 2, w / 2);
    Image::from_fn(nh, nw, |y, x| {
        0.25 * (smooth.get(2 * y, 2 * x)
            + smooth.get(2 * y, 2 * x + 1)
            + smooth.get(2 * y + 1, 2 * x)
            + smooth.get(2 * y + 1, 2 * x + 1))
    })
}

/// Bilinear resize to `height x width` using pixel-center alignment.
pub fn resize(image: &Image, height: usize, width: usize) -> Image {
    let sy = image.height() as f64 / height as f64;
    let sx = image.width() as f64 / width as f64;
    Image::from_fn(height, width, |y, x| {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        let fx = (x as f64 + 0.5) * sx - 0.5;
        image.sample_bilinear(fy, fx)
    })
}

/// 3x3 median with clamped borders.
pub fn median3x3(image: &Image) -> Image {
    let mut win = [0.0f64; 9];
    Image::from_fn(image.height(), image.width(), |y, x| {
        let mut k = 0;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                win[k] = image.get_clamped(y as isize + dy, x as isize + dx);
                k += 1;
            }
        }
        win.sort_unstable_by(f64::total_cmp);
        win[4]
    })
}
