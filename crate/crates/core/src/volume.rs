//! Dense image and image-stack containers.
//!
//! Everything is stored as `f64` in row-major order. A [`Volume`] stacks
//! frames one after another, so frame `f` occupies the contiguous slice
//! `f*h*w .. (f+1)*h*w`. [`FrameSequence`] is a `Volume` whose samples are
//! known to be finite intensities in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 16;
pub const MIN_FRAMES: usize = 2;

/// A single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: (height, width, 1),
                found: (data.len(), 1, 1),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real-valued position, clamping to the edge.
    pub fn sample_bilinear(&self, y: f64, x: f64) -> f64 {
        let ymax = (self.height - 1) as f64;
        let xmax = (self.width - 1) as f64;
        let y = y.clamp(0.0, ymax);
        let x = x.clamp(0.0, xmax);
        let y0 = libm::floor(y);
        let x0 = libm::floor(x);
        let fy = y - y0;
        let fx = x - x0;
        let y0 = y0 as usize;
        let x0 = x0 as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let w = self.width;
        let d = &self.data;
        let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
        let bottom = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_unit(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// An `h x w x t` real tensor without range constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    height: usize,
    width: usize,
    frames: usize,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(height: usize, width: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * frames {
            return Err(Error::DimensionMismatch {
                expected: (height, width, frames),
                found: (data.len(), 1, 1),
            });
        }
        Ok(Self {
            height,
            width,
            frames,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, frames: usize) -> Self {
        Self {
            height,
            width,
            frames,
            data: vec![0.0; height * width * frames],
        }
    }

    /// `f(y, x, frame)`
    pub fn from_fn(
        height: usize,
        width: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * frames);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, t));
                }
            }
        }
        Self {
            height,
            width,
            frames,
            data,
        }
    }

    /// Stack equally sized images as frames.
    pub fn from_frames(frames: &[Image]) -> Result<Self> {
        let first = frames.first().ok_or(Error::TooSmall {
            height: 0,
            width: 0,
            frames: 0,
        })?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(h * w * frames.len());
        for img in frames {
            if img.dims() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: (h, w, 1),
                    found: (img.height(), img.width(), 1),
                });
            }
            data.extend_from_slice(img.as_slice());
        }
        Ok(Self {
            height: h,
            width: w,
            frames: frames.len(),
            data,
        })
    }

    /// The same image repeated `frames` times.
    pub fn repeat(image: &Image, frames: usize) -> Self {
        let mut data = Vec::with_capacity(image.as_slice().len() * frames);
        for _ in 0..frames {
            data.extend_from_slice(image.as_slice());
        }
        Self {
            height: image.height(),
            width: image.width(),
            frames,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.frames)
    }

    #[inline]
    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, t: usize) -> usize {
        (t * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, t: usize) -> f64 {
        self.data[self.index(y, x, t)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, t: usize, value: f64) {
        let i = self.index(y, x, t);
        self.data[i] = value;
    }

    pub fn frame_slice(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_slice_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.frame_slice(t).to_vec(),
        }
    }

    pub fn frame_images(&self) -> Vec<Image> {
        (0..self.frames).map(|t| self.frame(t)).collect()
    }

    /// Values of pixel `(y, x)` across all frames.
    pub fn trace(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(y, x, t)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Volume) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn temporal_mean(&self) -> Image {
        let n = self.frame_len();
        let mut acc = vec![0.0; n];
        for t in 0..self.frames {
            for (a, &v) in acc.iter_mut().zip(self.frame_slice(t)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.frames as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Image {
            height: self.height,
            width: self.width,
            data: acc,
        }
    }

    /// Per-pixel temporal median (mean of the two middle values for even `t`).
    pub fn temporal_median(&self) -> Image {
        let mut buf = vec![0.0; self.frames];
        Image::from_fn(self.height, self.width, |y, x| {
            for (t, b) in buf.iter_mut().enumerate() {
                *b = self.get(y, x, t);
            }
            buf.sort_by(f64::total_cmp);
            let m = self.frames / 2;
            if self.frames % 2 == 1 {
                buf[m]
            } else {
                0.5 * (buf[m - 1] + buf[m])
            }
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum::<f64>())
    }

    /// Keep frames `start..end`.
    pub fn trim(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::InvalidParameter {
                name: "trim",
                reason: "range must satisfy start < end <= frames",
            });
        }
        let n = self.frame_len();
        Ok(Self {
            height: self.height,
            width: self.width,
            frames: end - start,
            data: self.data[start * n..end * n].to_vec(),
        })
    }
}

/// A validated intensity sequence: finite samples in `[0, 1]`, at least
/// 16x16 pixels and two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence(Volume);

impl FrameSequence {
    pub fn new(volume: Volume) -> Result<Self> {
        let (h, w, t) = volume.dims();
        if h < MIN_SIDE || w < MIN_SIDE || t < MIN_FRAMES {
            return Err(Error::TooSmall {
                height: h,
                width: w,
                frames: t,
            });
        }
        if let Some((index, &value)) = volume
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidSample { index, value });
        }
        Ok(Self(volume))
    }

    pub fn from_frames(frames: &[Image]) -> Result<Self> {
        Self::new(Volume::from_frames(frames)?)
    }

    /// Clamp into `[0, 1]` (non-finite samples become 0) and validate the shape.
    pub fn from_volume_clamped(mut volume: Volume) -> Result<Self> {
        for v in volume.as_mut_slice() {
            *v = if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Self::new(volume)
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }
}

impl Deref for FrameSequence {
    type Target = Volume;

    fn deref(&self) -> &Volume {
        &self.0
    }
}
