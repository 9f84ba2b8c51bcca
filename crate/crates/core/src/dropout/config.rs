use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit at which an MCD layer shares its keep/drop decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Element,
    /// One decision per channel of a `[C, H, W]` activation; on a flat
    /// activation every feature is its own channel.
    #[default]
    Channel,
}

/// Which Bayesian layer a `dropout_point` resolves to, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DropoutConfig {
    Mcd {
        /// Keep probability, `1 - p` for drop rate `p`.
        keep_rate: f64,
        #[serde(default)]
        granularity: Granularity,
        /// Divide survivors by `keep_rate` instead of multiplying by it.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        inverted: bool,
    },
    Masksembles {
        num_masks: usize,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutKind {
    Mcd,
    Masksembles,
}

impl DropoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DropoutKind::Mcd => "mcd",
            DropoutKind::Masksembles => "masksembles",
        }
    }
}

impl DropoutConfig {
    pub fn mcd(keep_rate: f64) -> Self {
        DropoutConfig::Mcd {
            keep_rate,
            granularity: Granularity::default(),
            inverted: false,
        }
    }

    /// MCD parameterized by drop rate `p` (keep rate `1 - p`).
    pub fn mcd_drop_rate(p: f64) -> Self {
        Self::mcd(1.0 - p)
    }

    pub fn masksembles(num_masks: usize, scale: f64) -> Self {
        DropoutConfig::Masksembles { num_masks, scale }
    }

    pub fn kind(&self) -> DropoutKind {
        match self {
            DropoutConfig::Mcd { .. } => DropoutKind::Mcd,
            DropoutConfig::Masksembles { .. } => DropoutKind::Masksembles,
        }
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            DropoutConfig::Mcd { keep_rate, .. } => {
                if !(keep_rate > 0.0 && keep_rate <= 1.0) {
                    return Err(Error::precondition(format!(
                        "keep_rate {} outside (0, 1]",
                        keep_rate
                    )));
                }
            }
            DropoutConfig::Masksembles { num_masks, scale } => {
                if num_masks == 0 {
                    return Err(Error::precondition("num_masks must be at least 1"));
                }
                if !(scale >= 1.0 && scale.is_finite()) {
                    return Err(Error::precondition(format!("mask scale {} below 1", scale)));
                }
            }
        }
        Ok(())
    }
}
