//! Assignment of MC samples to MC engines (spatial, temporal or hybrid) and
//! the latency/resource model used to compare mappings.

mod hardware;
mod plan;

pub use hardware::{DropoutUnitCost, HardwareModel, Resources};
pub use plan::{
    build_mapping, estimate_latency, estimate_resources, execute_plan, pareto_mappings, Latency,
    MappingPlan, ParetoPoint, ResourceEstimate, Strategy,
};
