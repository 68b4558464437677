//! `key = value` run configuration files.
//!
//! Blank lines and `#` comments are ignored. Absent keys keep their
//! defaults; `noise_level = auto` restores the estimated noise level.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use cdsp_core::RunConfig;

use crate::error::{Error, Result};

pub const KEYS: &[&str] = &[
    "sigma",
    "alpha",
    "beta",
    "patch_size",
    "patch_stride",
    "group_size",
    "subspace_dim",
    "search_window",
    "noise_level",
    "recluster_every",
    "max_iters",
    "tolerance",
    "seed",
    "passes",
    "flow_levels",
    "flow_iterations",
    "flow_warps",
    "flow_smoothness",
    "flow_presmooth",
    "max_displacement",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

/// Set one key. Range checks are left to [`RunConfig::validate`].
pub fn set(cfg: &mut RunConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let f = &mut cfg.flow;
    match key {
        "sigma" => cfg.sigma = parse(key, value)?,
        "alpha" => cfg.alpha = parse(key, value)?,
        "beta" => cfg.beta = parse(key, value)?,
        "patch_size" => cfg.patch_size = parse(key, value)?,
        "patch_stride" => cfg.patch_stride = parse(key, value)?,
        "group_size" => cfg.group_size = parse(key, value)?,
        "subspace_dim" => cfg.subspace_dim = parse(key, value)?,
        "search_window" => cfg.search_window = parse(key, value)?,
        "noise_level" => {
            cfg.noise_level = if value == "auto" {
                None
            } else {
                Some(parse(key, value)?)
            }
        }
        "recluster_every" => cfg.recluster_every = parse(key, value)?,
        "max_iters" => cfg.max_iters = parse(key, value)?,
        "tolerance" => cfg.tolerance = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "passes" => cfg.ref_passes = parse(key, value)?,
        "flow_levels" => f.levels = parse(key, value)?,
        "flow_iterations" => f.iterations = parse(key, value)?,
        "flow_warps" => f.warps = parse(key, value)?,
        "flow_smoothness" => f.smoothness = parse(key, value)?,
        "flow_presmooth" => f.presmooth_sigma = parse(key, value)?,
        "max_displacement" => f.max_displacement = parse(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Parse `text` on top of `base` and validate the result.
pub fn parse_config_over(text: &str, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            reason: format!("expected key=value, found `{line}`"),
        })?;
        set(&mut cfg, key.trim(), value.trim()).map_err(|reason| Error::Config {
            line: i + 1,
            reason,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_over(text, RunConfig::default())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_config(&text)
}

/// Render every key, so `parse_config(&render(c))` gives `c` back.
pub fn render(cfg: &RunConfig) -> String {
    let f = &cfg.flow;
    let noise = cfg
        .noise_level
        .map_or_else(|| "auto".to_string(), |c| format!("{c:?}"));
    let values = [
        format!("{:?}", cfg.sigma),
        format!("{:?}", cfg.alpha),
        format!("{:?}", cfg.beta),
        cfg.patch_size.to_string(),
        cfg.patch_stride.to_string(),
        cfg.group_size.to_string(),
        cfg.subspace_dim.to_string(),
        cfg.search_window.to_string(),
        noise,
        cfg.recluster_every.to_string(),
        cfg.max_iters.to_string(),
        format!("{:?}", cfg.tolerance),
        cfg.seed.to_string(),
        cfg.ref_passes.to_string(),
        f.levels.to_string(),
        f.iterations.to_string(),
        f.warps.to_string(),
        format!("{:?}", f.smoothness),
        format!("{:?}", f.presmooth_sigma),
        format!("{:?}", f.max_displacement),
    ];
    KEYS.iter()
        .zip(values)
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}
