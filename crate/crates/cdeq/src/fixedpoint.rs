//! Two's-complement fixed-point quantization for filter taps and signals.
//!
//! Formats are written `Q<i>.<f>` where `i` counts integer bits (sign
//! included) and `f` counts fraction bits. Quantization rounds to nearest
//! (ties to even) at the format resolution and saturates at the
//! representable range; overflow never wraps.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt;
use std::str::FromStr;

/// A two's-complement fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedFormat {
    total_bits: u32,
    integer_bits: u32,
}

impl FixedFormat {
    /// 16 bits with 5 integer bits (Q5.11), the time-domain equalizer format.
    pub const Q5_11: FixedFormat = FixedFormat {
        total_bits: 16,
        integer_bits: 5,
    };

    /// 16 bits with 1 integer bit (Q1.15), the frequency-domain equalizer format.
    pub const Q1_15: FixedFormat = FixedFormat {
        total_bits: 16,
        integer_bits: 1,
    };

    pub fn new(total_bits: u32, integer_bits: u32) -> Result<Self> {
        if integer_bits < 1 || integer_bits > total_bits || total_bits > 64 {
            return Err(Error::invalid(format!(
                "fixed-point format requires 1 <= integer_bits <= total_bits <= 64, \
                 got total={total_bits} integer={integer_bits}"
            )));
        }
        Ok(FixedFormat {
            total_bits,
            integer_bits,
        })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn integer_bits(&self) -> u32 {
        self.integer_bits
    }

    pub fn fraction_bits(&self) -> u32 {
        self.total_bits - self.integer_bits
    }

    /// Smallest representable step, 2^-fraction_bits.
    pub fn resolution(&self) -> f64 {
        (2.0f64).powi(-(self.fraction_bits() as i32))
    }

    /// Largest representable value, 2^(integer_bits-1) - 2^-fraction_bits.
    pub fn max_value(&self) -> f64 {
        (2.0f64).powi(self.integer_bits as i32 - 1) - self.resolution()
    }

    /// Most negative representable value, -2^(integer_bits-1).
    pub fn min_value(&self) -> f64 {
        -((2.0f64).powi(self.integer_bits as i32 - 1))
    }

    /// Round-to-nearest-even at the format resolution, then saturate.
    ///
    /// Returns the exact real value the fixed-point code represents.
    pub fn quantize(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::invalid(format!(
                "cannot quantize non-finite value {value}"
            )));
        }
        let scale = (2.0f64).powi(self.fraction_bits() as i32);
        let code = (value * scale).round_ties_even();
        let max_code = self.max_value() * scale;
        let min_code = self.min_value() * scale;
        Ok(code.clamp(min_code, max_code) / scale)
    }

    /// Quantize real and imaginary parts independently.
    pub fn quantize_complex(&self, value: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(
            self.quantize(value.re)?,
            self.quantize(value.im)?,
        ))
    }
}

/// Elementwise [`FixedFormat::quantize_complex`] over a block of samples.
pub fn quantize_complex_block(values: &[Complex64], fmt: FixedFormat) -> Result<Vec<Complex64>> {
    values.iter().map(|&v| fmt.quantize_complex(v)).collect()
}

/// Power-of-two downscale exponent that fits a block into `fmt` with headroom.
///
/// Returns `e <= 0` such that every real/imaginary part of `values`, scaled
/// by `2^e`, stays at or below half the format's max value. Blocks that
/// already fit return 0 (no upscaling). Power-of-two scaling is exactly
/// invertible in binary floating point, so equalizers can rescale outputs
/// without extra rounding error.
pub fn block_scale_exponent(values: &[Complex64], fmt: FixedFormat) -> i32 {
    let peak = values
        .iter()
        .map(|v| v.re.abs().max(v.im.abs()))
        .fold(0.0f64, f64::max);
    let limit = fmt.max_value() * 0.5;
    if peak <= limit || peak == 0.0 {
        0
    } else {
        -((peak / limit).log2().ceil() as i32)
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.integer_bits, self.fraction_bits())
    }
}

impl FromStr for FixedFormat {
    type Err = Error;

    /// Parse `"Q<i>.<f>"`, e.g. `Q5.11` or `Q1.15`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| Error::invalid(format!("fixed format '{s}' must start with 'Q'")))?;
        let (int_s, frac_s) = body
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("fixed format '{s}' must look like Q5.11")))?;
        let integer: u32 = int_s
            .parse()
            .map_err(|_| Error::invalid(format!("bad integer bit count in '{s}'")))?;
        let fraction: u32 = frac_s
            .parse()
            .map_err(|_| Error::invalid(format!("bad fraction bit count in '{s}'")))?;
        FixedFormat::new(integer + fraction, integer)
    }
}
