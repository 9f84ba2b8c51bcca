use serde::{Deserialize, Serialize};

use super::layer::{LayerSpec, Shape};
use super::multi_exit::ExitSpec;
use crate::dropout::DropoutConfig;

/// On-disk form shared by plain networks and multi-exit specs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SpecDocument {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exits: Option<Vec<ExitSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<DropoutConfig>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub partial_dropout: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
}

impl SpecDocument {
    pub fn is_multi_exit(&self) -> bool {
        self.exits.is_some()
            || self.dropout.is_some()
            || self.partial_dropout
            || self.mask_file.is_some()
    }
}
