//! File formats, configuration files and the restoration pipeline on top of
//! [`cdsp_core`].

pub mod config;
pub mod error;
pub mod pipeline;
pub mod videoio;

pub use error::{Error, Result};
