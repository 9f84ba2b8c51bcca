//! Accelerator plan documents: a machine-readable description of one design
//! (layers, engine bindings, dropout units, estimates) plus a text report.

mod plan;
mod report;

pub use plan::{
    emit_plan, parse_plan, AcceleratorPlan, DropoutUnit, DropoutUnitParams, EngineBinding, Estimates,
    LayerRecord, MaskTable, RngSpec, Section, SCHEMA_VERSION,
};
pub use report::{render_pseudocode, render_report};
