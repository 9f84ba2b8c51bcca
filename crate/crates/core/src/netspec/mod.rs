//! Network descriptions and the structural half of the multi-exit transform.
//!
//! A [`NetworkSpec`] is a plain linear chain ending in a softmax classifier.
//! [`place_exits`] splits it into a trunk plus one exit per pooling block,
//! and [`insert_dropout`] turns the exits Bayesian by placing dropout sites
//! near each exit.

mod document;
mod layer;
mod multi_exit;
mod network;
mod transform;
mod validate;
pub mod zoo;

#[cfg(test)]
mod tests;

pub use layer::{
    Conv2dParams, DenseParams, LayerKind, LayerOp, LayerSpec, PoolParams, ResidualParams, Shape,
};
pub use multi_exit::{
    load_multi_exit, load_multi_exit_file, DropoutSite, ExitSpec, MultiExitSpec, ResolvedExit,
    SiteLocation, TrunkDropout,
};
pub(crate) use network::chain_shapes;
pub use network::{load_network, load_network_file, NetworkSpec, INPUT_ID};
pub use transform::{
    default_head_template, insert_dropout, instantiate_head, partial_holds, place_exits,
    scale_channels, select_exits, strip_dropout,
};
pub use validate::{validate, Diagnostic};
