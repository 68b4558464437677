use thiserror::Error;

/// Errors raised by the restoration core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("sequence too small: {height}x{width}x{frames} (need at least 16x16x2)")]
    TooSmall {
        height: usize,
        width: usize,
        frames: usize,
    },
    #[error("sample {index} is {value}, outside [0, 1] or not finite")]
    InvalidSample { index: usize, value: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("image {height}x{width} is smaller than the {size}x{size} window")]
    ImageSmallerThanWindow {
        height: usize,
        width: usize,
        size: usize,
    },
    #[error("only {found} trackable features found, need at least {required}")]
    InsufficientFeatures { found: usize, required: usize },
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { found: usize, required: usize },
    #[error("samples have zero spread")]
    DegenerateSpread,
    #[error("pixel ({y}, {x}) is not covered by any patch group")]
    UncoveredPixel { y: usize, x: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
