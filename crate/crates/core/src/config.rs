//! Run-time parameters for the whole pipeline.

use crate::error::{Error, Result};

/// Coarse-to-fine Horn-Schunck settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Pyramid levels, including full resolution.
    pub levels: usize,
    /// Relaxation sweeps per level, split evenly over its warps.
    pub iterations: usize,
    /// Re-linearizations (image warps) per level.
    pub warps: usize,
    /// Smoothness weight, expressed on the 8-bit intensity scale.
    pub smoothness: f64,
    /// Gaussian pre-smoothing applied at every level.
    pub presmooth_sigma: f64,
    /// Flow components are clamped to this many pixels.
    pub max_displacement: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            iterations: 100,
            warps: 2,
            smoothness: 15.0,
            presmooth_sigma: 0.8,
            max_displacement: 32.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Growth rate of the frequency weight `exp(sigma * count)`.
    pub sigma: f64,
    /// Weight of the non-local low-rank background prior.
    pub alpha: f64,
    /// Weight of the L1 penalty on the sparse registration error.
    pub beta: f64,
    pub patch_size: usize,
    pub patch_stride: usize,
    /// Sub-cubes per non-local group.
    pub group_size: usize,
    /// Rank of the temporal subspace.
    pub subspace_dim: usize,
    /// Side of the square block-matching search window.
    pub search_window: usize,
    /// Overrides the noise level estimated from the registered sequence.
    pub noise_level: Option<f64>,
    pub recluster_every: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub flow: FlowConfig,
    pub seed: u64,
    /// Reference-frame/registration passes.
    pub ref_passes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            alpha: 1.0,
            beta: 0.05,
            patch_size: 8,
            patch_stride: 4,
            group_size: 40,
            subspace_dim: 3,
            search_window: 31,
            noise_level: None,
            recluster_every: 10,
            max_iters: 30,
            tolerance: 1e-4,
            flow: FlowConfig::default(),
            seed: 42,
            ref_passes: 1,
        }
    }
}

fn check(ok: bool, name: &'static str, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason })
    }
}

impl RunConfig {
    /// Checks every constraint that does not depend on the input sequence.
    pub fn validate(&self) -> Result<()> {
        check(
            self.sigma.is_finite() && self.sigma >= 0.0,
            "sigma",
            "must be >= 0",
        )?;
        check(
            self.alpha.is_finite() && self.alpha > 0.0,
            "alpha",
            "must be > 0",
        )?;
        check(
            self.beta.is_finite() && self.beta > 0.0,
            "beta",
            "must be > 0",
        )?;
        check(self.patch_size >= 4, "patch_size", "must be >= 4")?;
        check(
            self.patch_stride >= 1 && self.patch_stride <= self.patch_size,
            "patch_stride",
            "must be in 1..=patch_size",
        )?;
        check(self.group_size >= 1, "group_size", "must be >= 1")?;
        check(self.subspace_dim >= 1, "subspace_dim", "must be >= 1")?;
        check(self.search_window % 2 == 1, "search_window", "must be odd")?;
        check(
            self.noise_level.is_none_or(|c| c.is_finite() && c > 0.0),
            "noise_level",
            "must be > 0",
        )?;
        check(self.recluster_every >= 1, "recluster_every", "must be >= 1")?;
        check(self.max_iters >= 1, "max_iters", "must be >= 1")?;
        check(
            self.tolerance.is_finite() && self.tolerance > 0.0,
            "tolerance",
            "must be > 0",
        )?;
        check(self.ref_passes >= 1, "ref_passes", "must be >= 1")?;
        let f = &self.flow;
        check(f.levels >= 1, "flow_levels", "must be >= 1")?;
        check(f.iterations >= 1, "flow_iterations", "must be >= 1")?;
        check(f.warps >= 1, "flow_warps", "must be >= 1")?;
        check(
            f.smoothness.is_finite() && f.smoothness > 0.0,
            "flow_smoothness",
            "must be > 0",
        )?;
        check(
            f.presmooth_sigma.is_finite() && f.presmooth_sigma >= 0.0,
            "flow_presmooth",
            "must be >= 0",
        )?;
        check(
            f.max_displacement.is_finite() && f.max_displacement > 0.0,
            "max_displacement",
            "must be > 0",
        )
    }

    /// Checks the constraints tied to a sequence of `frames` frames.
    pub fn validate_for_frames(&self, frames: usize) -> Result<()> {
        self.validate()?;
        check(
            self.subspace_dim < frames,
            "subspace_dim",
            "must be smaller than the number of frames",
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate_for_frames(50).unwrap();
        assert_eq!(cfg.sigma, 0.1);
        assert_eq!(cfg.patch_size, 8);
        assert_eq!(cfg.group_size, 40);
        assert_eq!(cfg.subspace_dim, 3);
        assert_eq!(cfg.max_iters, 30);
    }

    #[test]
    fn subspace_must_be_below_frame_count() {
        let cfg = RunConfig {
            subspace_dim: 100,
            ..RunConfig::default()
        };
        cfg.validate().unwrap();
        assert!(matches!(
            cfg.validate_for_frames(50),
            Err(Error::InvalidParameter {
                name: "subspace_dim",
                ..
            })
        ));
    }
}
