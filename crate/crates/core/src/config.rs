//! Plain-text training configuration: one `key = value` per line, `#` starts
//! a comment, every key optional.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::engine::{SweepOrder, TrainConfig};
use crate::error::{Result, VepError};
use crate::jj::LikelihoodMode;
use crate::site::TauExpectation;

impl FromStr for LikelihoodMode {
    type Err = VepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verified" => Ok(Self::Verified),
            "paper_literal" => Ok(Self::PaperLiteral),
            other => Err(VepError::Config(format!(
                "likelihood_mode must be verified or paper_literal, got \"{other}\""
            ))),
        }
    }
}

impl fmt::Display for LikelihoodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Verified => "verified",
            Self::PaperLiteral => "paper_literal",
        })
    }
}

impl FromStr for TauExpectation {
    type Err = VepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped_mean" => Ok(Self::ClampedMean),
            "truncated_mean" => Ok(Self::TruncatedMean),
            other => Err(VepError::Config(format!(
                "tau_expectation_mode must be clamped_mean or truncated_mean, got \"{other}\""
            ))),
        }
    }
}

impl fmt::Display for TauExpectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClampedMean => "clamped_mean",
            Self::TruncatedMean => "truncated_mean",
        })
    }
}

impl FromStr for SweepOrder {
    type Err = VepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior_first" => Ok(Self::PriorFirst),
            "likelihood_first" => Ok(Self::LikelihoodFirst),
            other => Err(VepError::Config(format!(
                "sweep_order must be prior_first or likelihood_first, got \"{other}\""
            ))),
        }
    }
}

impl fmt::Display for SweepOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PriorFirst => "prior_first",
            Self::LikelihoodFirst => "likelihood_first",
        })
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| VepError::Config(format!("line {line}: cannot parse {key} = \"{value}\"")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(VepError::Config(format!("line {line}: {key} must be true or false, got \"{value}\""))),
    }
}

/// Parses configuration text on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| VepError::Config(format!("line {line}: expected key = value")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "v0" => config.v0 = parse_value(line, key, value)?,
            "damping" => config.damping = parse_value(line, key, value)?,
            "max_sweeps" => config.max_sweeps = parse_value(line, key, value)?,
            "tol" => config.tol = parse_value(line, key, value)?,
            "seed" => config.seed = parse_value(line, key, value)?,
            "fan_in_scaling" => config.fan_in_scaling = parse_bool(line, key, value)?,
            "likelihood_mode" => config.likelihood_mode = value.parse()?,
            "tau_expectation_mode" => config.tau_expectation_mode = value.parse()?,
            "sweep_order" => config.sweep_order = value.parse()?,
            other => return Err(VepError::Config(format!("line {line}: unknown key \"{other}\""))),
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| VepError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Renders a configuration in the same format [`parse_config`] reads.
pub fn render_config(config: &TrainConfig) -> String {
    format!(
        "v0 = {}\ndamping = {}\nmax_sweeps = {}\ntol = {}\nlikelihood_mode = {}\ntau_expectation_mode = {}\nseed = {}\nfan_in_scaling = {}\nsweep_order = {}\n",
        config.v0,
        config.damping,
        config.max_sweeps,
        config.tol,
        config.likelihood_mode,
        config.tau_expectation_mode,
        config.seed,
        config.fan_in_scaling,
        config.sweep_order,
    )
}
