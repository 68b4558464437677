//! Procedural clean test images.
//!
//! The five standard scenes mix flat regions, sharp edges and fine texture
//! so that both the reference-frame and the refinement stages have something
//! to work on. They are deterministic functions of their size.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::filter;
use crate::volume::Image;

pub const STANDARD_SCENES: usize = 5;

pub const SCENE_NAMES: [&str; STANDARD_SCENES] = ["checker", "bars", "blocks", "texture", "star"];

/// Checkerboard with `square`-pixel cells alternating between `lo` and `hi`.
pub fn checkerboard(height: usize, width: usize, square: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(height, width, |y, x| {
        if ((y / square) + (x / square)) % 2 == 0 {
            lo
        } else {
            hi
        }
    })
}

fn checker_disks(h: usize, w: usize) -> Image {
    let mut img = checkerboard(h, w, 16, 0.25, 0.75);
    let disks = [
        (0.3, 0.3, 0.12, 0.95),
        (0.7, 0.65, 0.16, 0.05),
        (0.25, 0.75, 0.08, 0.5),
    ];
    for (cy, cx, r, val) in disks {
        let (cy, cx, r) = (cy * h as f64, cx * w as f64, r * h.min(w) as f64);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                if dy * dy + dx * dx <= r * r {
                    img.set(y, x, val);
                }
            }
        }
    }
    img
}

fn bars(h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |y, x| {
        let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
        if fy < 0.5 {
            // vertical bars, period shrinking to the right
            let period = 20.0 - 8.0 * fx;
            if libm::fmod(x as f64, period) < period / 2.0 {
                0.85
            } else {
                0.15
            }
        } else if fx < 0.5 {
            if (y / 6) % 2 == 0 {
                0.7
            } else {
                0.3
            }
        } else {
            0.5 + 0.4 * libm::sin(2.0 * PI * (x as f64 + y as f64) / 16.0)
        }
    })
}

fn blocks(h: usize, w: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b10c);
    let mut img = Image::filled(h, w, 0.55);
    for _ in 0..40 {
        let bh = rng.random_range(3..=h / 5);
        let bw = rng.random_range(3..=w / 5);
        let y0 = rng.random_range(0..h - bh);
        let x0 = rng.random_range(0..w - bw);
        let val = [0.05, 0.2, 0.4, 0.8, 0.95][rng.random_range(0..5)];
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                img.set(y, x, val);
            }
        }
    }
    img
}

fn texture(h: usize, w: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57_0e11);
    let noise = Image::from_fn(h, w, |_, _| StandardNormal.sample(&mut rng));
    let smooth = filter::gaussian_blur(&noise, 2.0);
    let (lo, hi) = smooth
        .as_slice()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut img = smooth.map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo));
    // a few hard edges on top of the soft texture
    for y in 0..h {
        for x in 0..w {
            if x > w / 3 && x < w / 3 + 6 {
                img.set(y, x, 0.9);
            }
            if y > 2 * h / 3 && y < 2 * h / 3 + 4 {
                img.set(y, x, 0.1);
            }
        }
    }
    img
}

fn star(h: usize, w: usize) -> Image {
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    Image::from_fn(h, w, |y, x| {
        let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
        let r = libm::sqrt(dy * dy + dx * dx);
        let theta = libm::atan2(dy, dx);
        let side = h.min(w) as f64;
        if r < 0.12 * side {
            0.5
        } else if r < 0.42 * side {
            if libm::sin(8.0 * theta) > 0.0 {
                0.9
            } else {
                0.1
            }
        } else if (libm::floor(r / 6.0) as i64) % 2 == 0 {
            0.6
        } else {
            0.35
        }
    })
}

/// Standard scene `index` (0..5) rendered at `height x width`.
pub fn standard_scene(index: usize, height: usize, width: usize) -> Image {
    match index % STANDARD_SCENES {
        0 => checker_disks(height, width),
        1 => bars(height, width),
        2 => blocks(height, width),
        3 => texture(height, width),
        _ => star(height, width),
    }
}

/// Smooth random texture, handy for flow experiments.
pub fn smooth_texture(height: usize, width: usize, sigma: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Image::from_fn(height, width, |_, _| StandardNormal.sample(&mut rng));
    let smooth = filter::separable(
        &noise,
        &filter::gaussian_kernel(sigma),
        filter::Border::Periodic,
    );
    let (lo, hi) = smooth
        .as_slice()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    smooth.map(|v| (v - lo) / (hi - lo))
}
