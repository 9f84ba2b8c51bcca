use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    #[default]
    RoundToNearestEven,
    /// Drop fractional LSBs (floor, as a two's-complement shift does).
    Truncate,
}

/// Signed two's-complement fixed-point format with `integer_bits` bits left of
/// the binary point (sign included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QFormat {
    pub total_bits: u32,
    pub integer_bits: u32,
    #[serde(default)]
    pub mode: RoundingMode,
    #[serde(default = "yes")]
    pub saturating: bool,
}

fn yes() -> bool {
    true
}

pub const SUPPORTED_BITWIDTHS: [u32; 4] = [4, 6, 8, 16];

impl QFormat {
    pub fn new(total_bits: u32, integer_bits: u32) -> Result<Self> {
        let q = QFormat {
            total_bits,
            integer_bits,
            mode: RoundingMode::RoundToNearestEven,
            saturating: true,
        };
        q.check()?;
        Ok(q)
    }

    /// Half the bits integer, half fractional (16 → Q8.8).
    pub fn for_bitwidth(total_bits: u32) -> Result<Self> {
        Self::new(total_bits, (total_bits / 2).max(1))
    }

    pub fn check(&self) -> Result<()> {
        if !SUPPORTED_BITWIDTHS.contains(&self.total_bits) {
            return Err(Error::precondition(format!(
                "bitwidth {} not in {:?}",
                self.total_bits, SUPPORTED_BITWIDTHS
            )));
        }
        if self.integer_bits < 1 || self.integer_bits > self.total_bits {
            return Err(Error::precondition(format!(
                "integer_bits {} outside [1, {}]",
                self.integer_bits, self.total_bits
            )));
        }
        Ok(())
    }

    pub fn frac_bits(&self) -> u32 {
        self.total_bits - self.integer_bits
    }

    pub fn step(&self) -> f64 {
        (-(self.frac_bits() as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        -((self.total_bits - 1) as f64).exp2() * self.step()
    }

    pub fn max_value(&self) -> f64 {
        (((self.total_bits - 1) as f64).exp2() - 1.0) * self.step()
    }

    pub fn quantize_value(&self, x: f32) -> f32 {
        let scaled = x as f64 * (self.frac_bits() as f64).exp2();
        let code = match self.mode {
            RoundingMode::RoundToNearestEven => scaled.round_ties_even(),
            RoundingMode::Truncate => scaled.floor(),
        };
        let half = ((self.total_bits - 1) as f64).exp2();
        let code = if self.saturating {
            code.clamp(-half, half - 1.0)
        } else {
            let span = 2.0 * half;
            (code + half).rem_euclid(span) - half
        };
        (code * self.step()) as f32
    }
}

/// Maps every element to its fixed-point representative.
pub fn quantize(t: &Tensor, q: &QFormat) -> Tensor {
    t.map(|v| q.quantize_value(v))
}
