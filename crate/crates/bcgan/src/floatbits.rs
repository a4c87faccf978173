//! IEEE-754 single-precision bit decomposition for label embedding.
//!
//! Bit order for the 32-entry network input vector: sign, then the 8 exponent
//! bits MSB first, then the 23 mantissa bits MSB first. A set bit encodes as
//! 1.0, a clear bit as 0.0. This ordering is part of the checkpoint
//! compatibility contract.

use crate::error::{Error, Result};

pub const SIGN_BITS: usize = 1;
pub const EXPONENT_BITS: usize = 8;
pub const MANTISSA_BITS: usize = 23;
pub const TOTAL_BITS: usize = SIGN_BITS + EXPONENT_BITS + MANTISSA_BITS;

/// Decomposed finite float32: 1 sign bit, 8 exponent bits, 23 mantissa bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloatBits {
    pub sign: bool,
    pub exponent: u8,
    pub mantissa: u32,
}

/// Exact IEEE-754 decomposition. NaN and infinity are rejected; subnormals
/// and signed zeros pass through.
pub fn float_to_bits(x: f32) -> Result<FloatBits> {
    if !x.is_finite() {
        return Err(Error::NonFiniteFloat(x));
    }
    let bits = x.to_bits();
    Ok(FloatBits {
        sign: bits >> 31 == 1,
        exponent: ((bits >> MANTISSA_BITS) & 0xff) as u8,
        mantissa: bits & ((1 << MANTISSA_BITS) - 1),
    })
}

/// Exact inverse of [`float_to_bits`]. Patterns with an all-ones exponent
/// (NaN/infinity) are rejected.
pub fn bits_to_float(b: FloatBits) -> Result<f32> {
    let bits =
        ((b.sign as u32) << 31) | ((b.exponent as u32) << MANTISSA_BITS) | b.mantissa;
    if b.exponent == 0xff {
        return Err(Error::NonFiniteBits(bits));
    }
    if b.mantissa >= 1 << MANTISSA_BITS {
        return Err(Error::NonFiniteBits(bits));
    }
    Ok(f32::from_bits(bits))
}

/// 32-entry {0.0, 1.0} vector, partitioned (1, 8, 23).
pub fn bits_to_vector(b: FloatBits) -> [f32; TOTAL_BITS] {
    let mut v = [0.0f32; TOTAL_BITS];
    v[0] = b.sign as u32 as f32;
    for i in 0..EXPONENT_BITS {
        v[SIGN_BITS + i] = ((b.exponent >> (EXPONENT_BITS - 1 - i)) & 1) as f32;
    }
    for i in 0..MANTISSA_BITS {
        v[SIGN_BITS + EXPONENT_BITS + i] =
            ((b.mantissa >> (MANTISSA_BITS - 1 - i)) & 1) as f32;
    }
    v
}
