//! Bayesian layer semantics: Monte-Carlo dropout driven by a counter-based
//! RNG, and Masksembles with pre-defined masks.

mod config;
mod masks;
mod mcd;
mod rng;

pub use config::{DropoutConfig, DropoutKind, Granularity};
pub use masks::{
    generate_masks, load_mask_tables, mask_tables_to_json, masksembles_forward, parse_mask_tables, MaskSet,
};
pub use mcd::{mcd_forward, mcd_keep_mask, mcd_scale};
pub(crate) use mcd::mcd_units;
pub use rng::{philox4x32_10, RngStream};
