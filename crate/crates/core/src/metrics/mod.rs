//! Scoring: FLOP accounting and the cost model, calibration, predictive
//! entropy, and whole-dataset evaluation.

mod calibration;
mod evaluate;
mod flops;

pub use calibration::{argmax, expected_calibration_error, predictive_entropy, DEFAULT_ECE_BINS};
pub use evaluate::{average_predictive_entropy, evaluate, EvalOptions, MetricsReport};
pub use flops::{count_flops, cost_multi_exit, cost_single_exit, reduction_rate, FlopReport};
