//! Turbulence mitigation for static scenes.
//!
//! The restoration runs coarse to fine:
//!
//! 1. [`refframe`] builds a frequency-aware reference frame from the
//!    distorted stack.
//! 2. [`optflow`] registers every frame onto that reference with
//!    coarse-to-fine Horn-Schunck flow.
//! 3. [`slrtr`] splits the registered stack into a low-rank background and a
//!    sparse registration error using non-local patch groups, temporal
//!    subspaces and a tensor nuclear norm.
//!
//! [`simulator`], [`motionstats`] and [`metrics`] provide synthetic ground
//! truth, displacement statistics and quality scores.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod motionstats;
pub mod optflow;
pub mod refframe;
pub mod scenes;
pub mod simulator;
pub mod slrtr;
pub mod volume;

pub use config::{FlowConfig, RunConfig};
pub use error::{Error, Result};
pub use volume::{FrameSequence, Image, Volume};
