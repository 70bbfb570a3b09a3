//! Estimator configuration and the flat key=value config-file format.

use crate::error::{Error, Result};
use crate::mrf::GibbsParams;

/// Everything the estimation pipeline needs besides the frames themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Block edge length in pixels; nodes are block_size x block_size.
    pub block_size: u32,
    /// Correlation threshold for matching a label to a representative.
    pub t1: f64,
    /// Fixed difference threshold; None estimates it from the sequence.
    pub t2_override: Option<f64>,
    pub gibbs: GibbsParams,
    /// Use the multi-threaded clustering and labelling paths. Results are
    /// identical to the sequential path.
    pub parallel: bool,
}

impl Default for EstimatorConfig {
    fn default() -> EstimatorConfig {
        EstimatorConfig {
            block_size: 16,
            t1: 0.8,
            t2_override: None,
            gibbs: GibbsParams::default(),
            parallel: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::Config(format!(
                "block size must be at least 2, got {}",
                self.block_size
            )));
        }
        if !self.t1.is_finite() || self.t1 <= 0.0 || self.t1 >= 1.0 {
            return Err(Error::Config(format!(
                "correlation threshold must lie in (0, 1), got {}",
                self.t1
            )));
        }
        if let Some(t2) = self.t2_override {
            if !t2.is_finite() || t2 <= 0.0 {
                return Err(Error::Config(format!(
                    "difference threshold must be positive, got {t2}"
                )));
            }
        }
        if !self.gibbs.tau.is_finite() || self.gibbs.tau <= 0.0 {
            return Err(Error::Config(format!(
                "temperature scale tau must be positive, got {}",
                self.gibbs.tau
            )));
        }
        if !self.gibbs.w_max_seconds.is_finite() || self.gibbs.w_max_seconds <= 0.0 {
            return Err(Error::Config(format!(
                "weight cap must be positive seconds, got {}",
                self.gibbs.w_max_seconds
            )));
        }
        Ok(())
    }
}

/// Parses a flat key=value config file. Blank lines and lines starting with
/// '#' are ignored; values keep internal whitespace but are trimmed at the
/// ends. Key interpretation is left to the caller so the CLI and library
/// defaults stay in one place.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (line_number, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {} has no '=': {line:?}",
                line_number + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!(
                "config line {} has an empty key",
                line_number + 1
            )));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
