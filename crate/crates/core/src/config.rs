//! Run configuration: solver settings plus paths and switches.
//!
//! Config files are flat `key = value` lines whose keys are the long CLI flag
//! names without the leading dashes. Blank lines and lines starting with `#`
//! are ignored. Values from a file are applied over the defaults; CLI flags
//! are applied over the file.

use std::path::{Path, PathBuf};

use crate::error::{FlowError, Result};
use crate::regularizer::DiagonalConvention;
use crate::solver::SolverConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub frame0: Option<PathBuf>,
    pub frame1: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out_flo: Option<PathBuf>,
    pub out_png: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// High-pass both frames before estimation.
    pub preprocess: bool,
}

/// Keys accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "data",
    "lambda",
    "epsilon",
    "pyramid-scale",
    "max-iter",
    "conv-tol",
    "min-side",
    "warps",
    "ratio",
    "scheme",
    "sig-frac",
    "seed",
    "adaptive",
    "adaptive-alpha",
    "adaptive-beta",
    "gdim-penalty",
    "diagonal",
    "blend",
    "allow-any-lambda",
    "preprocess",
    "frame0",
    "frame1",
    "gt",
    "out-flo",
    "out-png",
    "report",
];

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| FlowError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(FlowError::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

/// Splits a config file into `(key, value)` pairs, in file order.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FlowError::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Sets one field by its flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "data" => s.data_kind = value.parse()?,
            "lambda" => s.lambda = parse(key, value)?,
            "epsilon" => s.epsilon = parse(key, value)?,
            "pyramid-scale" => s.pyramid_scale = parse(key, value)?,
            "max-iter" => s.max_iter = parse(key, value)?,
            "conv-tol" => s.conv_tol = parse(key, value)?,
            "min-side" => s.min_side = parse(key, value)?,
            "warps" => s.warps_per_level = parse(key, value)?,
            "ratio" => s.scheme.ratio = parse(key, value)?,
            "scheme" => s.scheme.kind = value.parse()?,
            "sig-frac" => s.scheme.significant_fraction = parse(key, value)?,
            "seed" => s.scheme.seed = parse(key, value)?,
            "adaptive" => s.adaptive = parse_bool(key, value)?,
            "adaptive-alpha" => s.adaptive_alpha = parse(key, value)?,
            "adaptive-beta" => s.adaptive_beta = parse(key, value)?,
            "gdim-penalty" => s.gdim_penalty = parse(key, value)?,
            "diagonal" => {
                s.diagonal = match value {
                    "mirrored" => DiagonalConvention::Mirrored,
                    "same-pixel" => DiagonalConvention::SamePixel,
                    _ => return Err(FlowError::Config(format!("invalid diagonal convention '{value}'"))),
                }
            }
            "blend" => s.blend = value.parse()?,
            "allow-any-lambda" => s.allow_any_lambda = parse_bool(key, value)?,
            "preprocess" => self.preprocess = parse_bool(key, value)?,
            "frame0" => self.frame0 = Some(value.into()),
            "frame1" => self.frame1 = Some(value.into()),
            "gt" => self.gt = Some(value.into()),
            "out-flo" => self.out_flo = Some(value.into()),
            "out-png" => self.out_png = Some(value.into()),
            "report" => self.report = Some(value.into()),
            other => return Err(FlowError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_config_text(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    /// Checks numeric ranges and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        for p in [&self.frame0, &self.frame1, &self.gt].into_iter().flatten() {
            if !p.is_file() {
                return Err(FlowError::Config(format!("input file not found: {}", p.display())));
            }
        }
        Ok(())
    }
}
