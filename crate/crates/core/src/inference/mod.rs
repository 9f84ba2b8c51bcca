//! Multi-exit Monte-Carlo execution with trunk caching.
//!
//! The deterministic part of the trunk runs once per input and its
//! activations are cached at each exit's boundary. Every MC sample then only
//! re-executes the exit's Bayesian segment: its exit-local trunk dropout sites
//! (if any) and its head.

mod executor;
mod predictions;

pub use executor::{
    confidence_exit, input_seed, predict, run_exit_samples, run_trunk, site_masks, CachedFeatures,
    Executor,
};
pub use predictions::{ensemble, ExitDecision, ExitMode, PredictionSet};
pub(crate) use predictions::mean_of;
