//! Grid search over algorithmic and hardware knobs: enumerate design points,
//! evaluate each one, filter by user constraints and rank by priority.

mod config;
mod evaluate;
mod ledger;
mod rank;
mod space;

pub use config::{DataSource, ExploreConfig, TrainSettings};
pub use evaluate::{build_spec, evaluate_design_point, explore, ChannelMode, EvalContext, Evaluation, PointResult};
pub use ledger::{ledger_csv, ledger_json};
pub use rank::{
    filter_and_rank, optimal_selections, Constraints, Direction, Metric, Priority, PriorityEntry,
    Ranking, Selections,
};
pub use space::{enumerate_design_points, DesignPoint, Grids};
