//! PNG frame sequences, the lossless `.fseq` float container and Middlebury
//! `.flo` flow files.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cdsp_core::optflow::FlowField;
use cdsp_core::{FrameSequence, Image, Volume};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// One [`FrameSequence`] per channel: one for grayscale, three for RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    channels: Vec<FrameSequence>,
}

impl Sequence {
    pub fn gray(seq: FrameSequence) -> Self {
        Self {
            channels: vec![seq],
        }
    }

    pub fn from_channels(channels: Vec<FrameSequence>) -> Result<Self> {
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::Input(format!(
                "expected 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        let dims = channels[0].dims();
        if let Some(c) = channels.iter().find(|c| c.dims() != dims) {
            return Err(cdsp_core::Error::DimensionMismatch {
                expected: dims,
                found: c.dims(),
            }
            .into());
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[FrameSequence] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<FrameSequence> {
        self.channels
    }

    pub fn is_color(&self) -> bool {
        self.channels.len() == 3
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.channels[0].dims()
    }

    /// `0.299 R + 0.587 G + 0.114 B`, or the single channel itself.
    pub fn luma(&self) -> FrameSequence {
        match self.channels.as_slice() {
            [g] => g.clone(),
            [r, g, b] => {
                let (h, w, t) = r.dims();
                let data = r
                    .as_slice()
                    .iter()
                    .zip(g.as_slice())
                    .zip(b.as_slice())
                    .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
                    .collect();
                FrameSequence::from_volume_clamped(Volume::new(h, w, t, data).expect("same shape"))
                    .expect("valid shape")
            }
            _ => unreachable!("1 or 3 channels"),
        }
    }

    /// Keep frames `start..end`.
    pub fn trim(&self, start: usize, end: usize) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| Ok(FrameSequence::new(c.trim(start, end)?)?))
            .collect::<Result<_>>()?;
        Self::from_channels(channels)
    }

    /// Per-channel temporal median.
    pub fn temporal_median(&self) -> Vec<Image> {
        self.channels.iter().map(|c| c.temporal_median()).collect()
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Trailing decimal digits of the file stem.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    stem[stem.len() - digits..].parse().ok()
}

/// Decode a PNG into one image per channel (1 or 3).
pub fn load_image(path: &Path) -> Result<Vec<Image>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = 1.0 / 65535.0;
    if img.color().has_color() {
        let rgb = img.to_rgb16();
        (0..3)
            .map(|c| {
                Ok(Image::new(
                    h,
                    w,
                    rgb.pixels().map(|p| p.0[c] as f64 * scale).collect(),
                )?)
            })
            .collect()
    } else {
        let gray = img.to_luma16();
        Ok(vec![Image::new(
            h,
            w,
            gray.pixels().map(|p| p.0[0] as f64 * scale).collect(),
        )?])
    }
}

/// Write one image per channel (1 or 3) as an 8-bit PNG.
pub fn save_image(channels: &[Image], path: &Path) -> Result<()> {
    let (h, w) = channels[0].dims();
    let result = match channels {
        [g] => GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([to_u8(g.get(y as usize, x as usize))])
        })
        .save(path),
        [r, g, b] => RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (y, x) = (y as usize, x as usize);
            Rgb([to_u8(r.get(y, x)), to_u8(g.get(y, x)), to_u8(b.get(y, x))])
        })
        .save(path),
        _ => return Err(Error::Input("images must have 1 or 3 channels".into())),
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Numbered PNG files of `dir`, in numeric order.
fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .filter_map(|p| frame_number(&p).map(|n| (n, p)))
        .collect();
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Load a directory of numbered 8- or 16-bit PNG frames, or a `.fseq` file.
pub fn load_sequence(path: &Path) -> Result<Sequence> {
    if !path.exists() {
        return Err(Error::Input(format!("{} does not exist", path.display())));
    }
    if path.is_file() {
        return read_fseq(path);
    }
    let paths = frame_paths(path)?;
    if paths.len() < 2 {
        return Err(Error::Input(format!(
            "{}: need at least 2 numbered PNG frames, found {}",
            path.display(),
            paths.len()
        )));
    }
    let frames = paths
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let first = frames[0][0].dims();
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f[0].dims() != first) {
        return Err(Error::Input(format!(
            "{}: frame is {}x{}, expected {}x{}",
            paths[i].display(),
            f[0].height(),
            f[0].width(),
            first.0,
            first.1
        )));
    }
    let color = frames.iter().any(|f| f.len() == 3);
    let nch = if color { 3 } else { 1 };
    let channels = (0..nch)
        .map(|c| {
            let images: Vec<Image> = frames
                .iter()
                .map(|f| f[c.min(f.len() - 1)].clone())
                .collect();
            Ok(FrameSequence::from_frames(&images)?)
        })
        .collect::<Result<_>>()?;
    Sequence::from_channels(channels)
}

/// Write `frame_00000.png`, `frame_00001.png`, ... (8-bit).
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let t = seq.dims().2;
    let frames: Vec<Vec<Image>> = (0..t)
        .map(|f| seq.channels().iter().map(|c| c.frame(f)).collect())
        .collect();
    save_frames(&frames, dir)
}

/// Write per-frame channel lists as numbered PNGs; at least two frames.
pub fn save_frames(frames: &[Vec<Image>], dir: &Path) -> Result<()> {
    if frames.len() < 2 {
        return Err(Error::Input(format!(
            "a sequence needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for (i, f) in frames.iter().enumerate() {
        save_image(f, &dir.join(format!("frame_{i:05}.png")))?;
    }
    Ok(())
}

const FSEQ_MAGIC: &[u8; 8] = b"CDSPFSEQ";

/// Lossless container: magic, channel count, height, width, frames (u32
/// little endian), then every channel's samples as f64 little endian.
pub fn write_fseq(seq: &Sequence, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut out = BufWriter::new(file);
    let (h, w, t) = seq.dims();
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(FSEQ_MAGIC);
    for v in [seq.channels().len(), h, w, t] {
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.write_all(&bytes).map_err(Error::io(path))?;
    for c in seq.channels() {
        for v in c.as_slice() {
            out.write_all(&v.to_le_bytes()).map_err(Error::io(path))?;
        }
    }
    out.flush().map_err(Error::io(path))
}

pub fn read_fseq(path: &Path) -> Result<Sequence> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut input = BufReader::new(file);
    let mut header = [0u8; 24];
    input.read_exact(&mut header).map_err(Error::io(path))?;
    if &header[..8] != FSEQ_MAGIC {
        return Err(Error::Input(format!(
            "{}: not a frame-sequence container",
            path.display()
        )));
    }
    let field = |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (nch, h, w, t) = (field(0), field(1), field(2), field(3));
    let mut raw = Vec::new();
    input.read_to_end(&mut raw).map_err(Error::io(path))?;
    let n = h * w * t;
    if raw.len() != nch * n * 8 {
        return Err(Error::Input(format!("{}: truncated container", path.display())));
    }
    let samples: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let channels = samples
        .chunks_exact(n.max(1))
        .take(nch)
        .map(|c| Ok(FrameSequence::new(Volume::new(h, w, t, c.to_vec())?)?))
        .collect::<Result<_>>()?;
    Sequence::from_channels(channels)
}

const FLO_MAGIC: f32 = 202021.25;

/// Middlebury `.flo`: magic, width, height, then interleaved `(u, v)` rows.
pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    let (h, w) = flow.dims();
    let mut bytes = Vec::with_capacity(12 + 8 * h * w);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            bytes.extend_from_slice(&(flow.u(y, x) as f32).to_le_bytes());
            bytes.extend_from_slice(&(flow.v(y, x) as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let bad = || Error::Input(format!("{}: malformed .flo file", path.display()));
    if bytes.len() < 12 || f32::from_le_bytes(bytes[..4].try_into().unwrap()) != FLO_MAGIC {
        return Err(bad());
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || bytes.len() != 12 + 8 * (w as usize) * (h as usize) {
        return Err(bad());
    }
    let vals: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let u = vals.iter().step_by(2).copied().collect();
    let v = vals.iter().skip(1).step_by(2).copied().collect();
    Ok(FlowField::new(h as usize, w as usize, u, v)?)
}

/// Write one `.flo` per frame.
pub fn save_flows(flows: &[FlowField], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for (i, f) in flows.iter().enumerate() {
        write_flo(f, &dir.join(format!("frame_{i:05}.flo")))?;
    }
    Ok(())
}

/// Grayscale 16-bit PNG, used by tests and tools that need the extra depth.
pub fn save_image16(image: &Image, path: &Path) -> Result<()> {
    let (h, w) = image.dims();
    ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        Luma([(image.get(y as usize, x as usize).clamp(0.0, 1.0) * 65535.0).round() as u16])
    })
    .save(path)
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
