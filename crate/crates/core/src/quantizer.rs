//! Uniform mid-rise scalar quantizer with a geometrically shrinking cell
//! width, and the differential encode/decode pair that lets both ends of an
//! edge track a shared reconstruction.
//!
//! Cell indexing is floor-based, so a value exactly on a cell boundary joins
//! the cell above it (0 maps to the reproduction +delta/2). Inputs beyond the
//! granular range clamp to the extreme cells; the outer reproductions follow
//! the same affine formula as the interior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("code index {index} out of range for {bits}-bit quantizer")]
    CodeOutOfRange { index: u64, bits: u32 },
    #[error("invalid quantizer config: {0}")]
    InvalidConfig(String),
}

/// Fixed-rate quantizer parameters. `enabled = false` turns the codec into an
/// exact passthrough, which isolates quantization effects in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Bits per transmitted scalar, `l >= 1`.
    pub bits: u32,
    /// Initial cell width.
    pub delta0: f64,
    /// Cell-width decay rate per iteration, in (0, 1).
    pub gamma: f64,
    pub enabled: bool,
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<(), QuantizerError> {
        if self.bits < 1 || self.bits > 64 {
            return Err(QuantizerError::InvalidConfig(format!(
                "bits must be in 1..=64, got {}",
                self.bits
            )));
        }
        if !(self.delta0 > 0.0) || !self.delta0.is_finite() {
            return Err(QuantizerError::InvalidConfig(format!(
                "delta0 must be positive and finite, got {}",
                self.delta0
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(QuantizerError::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Cell width at iteration `t >= 1`: `gamma^(t-1) * delta0`.
    pub fn cell_width(&self, t: usize) -> f64 {
        assert!(t >= 1, "cell width is defined for iterations t >= 1");
        self.gamma.powi(t as i32 - 1) * self.delta0
    }
}

/// Index of a quantization cell, in `[0, 2^l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeWord(pub u64);

fn level_count(bits: u32) -> i128 {
    1i128 << bits
}

fn half_levels(bits: u32) -> i128 {
    1i128 << (bits - 1)
}

/// Maps `v` to its cell: `clamp(floor(v / delta) + 2^(l-1), 0, 2^l - 1)`.
pub fn quantize(v: f64, delta: f64, bits: u32) -> Result<CodeWord, QuantizerError> {
    if !v.is_finite() {
        return Err(QuantizerError::NonFinite(v));
    }
    debug_assert!(delta > 0.0);
    let ratio = (v / delta).floor();
    // anything this far out is clamped regardless; avoids i128 overflow
    let cell = if ratio >= 1e30 {
        i128::MAX / 2
    } else if ratio <= -1e30 {
        i128::MIN / 2
    } else {
        ratio as i128
    };
    let index = (cell + half_levels(bits)).clamp(0, level_count(bits) - 1);
    Ok(CodeWord(index as u64))
}

/// Reproduction value of a cell: `(index - 2^(l-1) + 0.5) * delta`.
pub fn reproduce(code: CodeWord, delta: f64, bits: u32) -> Result<f64, QuantizerError> {
    if (code.0 as i128) >= level_count(bits) {
        return Err(QuantizerError::CodeOutOfRange { index: code.0, bits });
    }
    let signed = code.0 as i128 - half_levels(bits);
    Ok((signed as f64 + 0.5) * delta)
}

/// What one differential-encoding step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutcome {
    /// The difference that was quantized.
    pub diff: f64,
    /// Transmitted cell index; `None` in passthrough mode.
    pub code: Option<CodeWord>,
    /// Reproduction the receiver will add to its basis.
    pub reproduced: f64,
    /// Quantization noise `reproduced - diff`.
    pub noise: f64,
    /// True when the difference fell outside the granular range and clamped.
    pub overloaded: bool,
}

/// Encodes the difference between the sender's fresh value and the shared
/// reconstruction basis (the initialization value at `t = 1`, the previous
/// reconstruction afterwards).
pub fn encode_difference(
    current: f64,
    basis: f64,
    t: usize,
    cfg: &QuantizerConfig,
) -> Result<EncodeOutcome, QuantizerError> {
    let diff = current - basis;
    if !cfg.enabled {
        if !diff.is_finite() {
            return Err(QuantizerError::NonFinite(diff));
        }
        return Ok(EncodeOutcome { diff, code: None, reproduced: diff, noise: 0.0, overloaded: false });
    }
    let delta = cfg.cell_width(t);
    let code = quantize(diff, delta, cfg.bits)?;
    let reproduced = reproduce(code, delta, cfg.bits)?;
    let granular = half_levels(cfg.bits) as f64 * delta;
    Ok(EncodeOutcome {
        diff,
        code: Some(code),
        reproduced,
        noise: reproduced - diff,
        overloaded: diff.abs() >= granular,
    })
}

/// Receiver-side reconstruction step: `basis + reproduce(code)`.
pub fn decode(
    basis: f64,
    code: CodeWord,
    t: usize,
    cfg: &QuantizerConfig,
) -> Result<f64, QuantizerError> {
    Ok(basis + reproduce(code, cfg.cell_width(t), cfg.bits)?)
}
