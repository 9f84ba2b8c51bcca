use std::path::Path;

use serde::{Deserialize, Serialize};

use super::document::SpecDocument;
use super::layer::{LayerOp, LayerSpec, Shape};
use super::network::{chain_shapes, NetworkSpec, INPUT_ID};
use super::validate::validate;
use crate::dropout::DropoutConfig;
use crate::error::{Error, Result};

/// A dropout site that lives in the shared trunk but only applies on one
/// exit's path. The exit re-executes the trunk from this site on every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkDropout {
    pub id: String,
    /// Trunk layer whose input is masked.
    pub before: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitSpec {
    pub exit_index: usize,
    /// Trunk layer id, or `@input`.
    pub attach_after: String,
    pub head_layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trunk_dropout: Vec<TrunkDropout>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteLocation {
    /// Index of the `dropout_point` inside the exit head.
    Head { position: usize },
    /// Index of the trunk layer whose input is masked.
    Trunk { depth: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutSite {
    pub exit_index: usize,
    pub id: String,
    pub location: SiteLocation,
    /// Activation shape the site masks.
    pub shape: Shape,
}

/// Per-exit execution layout derived from a [`MultiExitSpec`].
#[derive(Debug, Clone)]
pub struct ResolvedExit<'a> {
    pub exit_index: usize,
    /// Number of trunk layers on this exit's path.
    pub attach_depth: usize,
    /// First trunk depth re-executed per sample; equals `attach_depth` when
    /// all of the exit's dropout sits in its head.
    pub boundary: usize,
    /// `(trunk depth, site id)` sorted by depth.
    pub trunk_sites: Vec<(usize, &'a str)>,
    pub head: &'a [LayerSpec],
}

/// Trunk plus early-exit heads plus dropout placement.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiExitSpec {
    pub trunk: NetworkSpec,
    pub exits: Vec<ExitSpec>,
    pub dropout: Option<DropoutConfig>,
    /// Asserts every dropout site sits at or after the shallowest exit.
    pub partial_dropout: bool,
    /// Path of the mask table written alongside a Masksembles spec.
    pub mask_file: Option<String>,
}

impl MultiExitSpec {
    pub fn n_exit(&self) -> usize {
        self.exits.len()
    }

    pub fn trunk_index(&self, id: &str) -> Option<usize> {
        self.trunk.layers.iter().position(|l| l.id == id)
    }

    /// Number of trunk layers preceding the exit's attach point.
    pub fn attach_depth(&self, exit: &ExitSpec) -> Result<usize> {
        if exit.attach_after == INPUT_ID {
            return Ok(0);
        }
        self.trunk_index(&exit.attach_after)
            .map(|i| i + 1)
            .ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "exit {} attaches after unknown layer `{}`",
                    exit.exit_index, exit.attach_after
                ))
            })
    }

    pub fn exit(&self, exit_index: usize) -> Result<&ExitSpec> {
        self.exits
            .iter()
            .find(|e| e.exit_index == exit_index)
            .ok_or_else(|| Error::precondition(format!("no exit with index {}", exit_index)))
    }

    pub fn resolve(&self) -> Result<Vec<ResolvedExit<'_>>> {
        self.exits.iter().map(|e| self.resolve_exit(e)).collect()
    }

    pub fn resolve_exit<'a>(&'a self, exit: &'a ExitSpec) -> Result<ResolvedExit<'a>> {
        let attach_depth = self.attach_depth(exit)?;
        let mut trunk_sites = Vec::with_capacity(exit.trunk_dropout.len());
        for site in &exit.trunk_dropout {
            let depth = self.trunk_index(&site.before).ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "dropout `{}` refers to unknown trunk layer `{}`",
                    site.id, site.before
                ))
            })?;
            if depth >= attach_depth {
                return Err(Error::InvalidSpec(format!(
                    "dropout `{}` precedes `{}`, which is not on exit {}'s trunk path",
                    site.id, site.before, exit.exit_index
                )));
            }
            trunk_sites.push((depth, site.id.as_str()));
        }
        trunk_sites.sort_by_key(|&(d, _)| d);
        let boundary = trunk_sites.first().map_or(attach_depth, |&(d, _)| d);
        Ok(ResolvedExit {
            exit_index: exit.exit_index,
            attach_depth,
            boundary,
            trunk_sites,
            head: &exit.head_layers,
        })
    }

    /// Trunk depth evaluated once per input before any per-sample work.
    pub fn deterministic_depth(&self) -> Result<usize> {
        Ok(self
            .resolve()?
            .iter()
            .map(|r| r.boundary)
            .max()
            .unwrap_or(0))
    }

    pub fn shallowest_attach_depth(&self) -> Result<usize> {
        let mut min = usize::MAX;
        for e in &self.exits {
            min = min.min(self.attach_depth(e)?);
        }
        Ok(if min == usize::MAX { 0 } else { min })
    }

    /// All dropout sites, in exit order then path order.
    pub fn dropout_sites(&self) -> Result<Vec<DropoutSite>> {
        let trunk_shapes = self.trunk.shapes()?;
        let mut sites = Vec::new();
        for exit in &self.exits {
            let r = self.resolve_exit(exit)?;
            for &(depth, id) in &r.trunk_sites {
                sites.push(DropoutSite {
                    exit_index: exit.exit_index,
                    id: id.to_string(),
                    location: SiteLocation::Trunk { depth },
                    shape: trunk_shapes[depth].clone(),
                });
            }
            let head_shapes = chain_shapes(
                &trunk_shapes[r.attach_depth],
                &exit.attach_after,
                &exit.head_layers,
            )?;
            for (position, layer) in exit.head_layers.iter().enumerate() {
                if matches!(layer.op, LayerOp::DropoutPoint) {
                    sites.push(DropoutSite {
                        exit_index: exit.exit_index,
                        id: layer.id.clone(),
                        location: SiteLocation::Head { position },
                        shape: head_shapes[position].clone(),
                    });
                }
            }
        }
        Ok(sites)
    }

    pub fn dropout_layer_count(&self) -> usize {
        self.exits
            .iter()
            .map(|e| {
                e.trunk_dropout.len()
                    + e.head_layers
                        .iter()
                        .filter(|l| matches!(l.op, LayerOp::DropoutPoint))
                        .count()
            })
            .sum()
    }

    pub fn class_count(&self) -> Result<usize> {
        let exit = self
            .exits
            .last()
            .ok_or_else(|| Error::InvalidSpec("spec has no exits".into()))?;
        let shapes = self.trunk.shapes()?;
        let depth = self.attach_depth(exit)?;
        let out = chain_shapes(&shapes[depth], &exit.attach_after, &exit.head_layers)?;
        match out.last().map(Vec::as_slice) {
            Some([c]) => Ok(*c),
            other => Err(Error::InvalidSpec(format!(
                "exit {} output must be flat, got {:?}",
                exit.exit_index, other
            ))),
        }
    }

    /// Every layer in trunk-then-exit order, with exit-local trunk dropout
    /// sites included as synthetic `dropout_point` layers.
    pub fn all_layers(&self) -> Vec<(Option<usize>, LayerSpec)> {
        let mut out: Vec<(Option<usize>, LayerSpec)> =
            self.trunk.layers.iter().map(|l| (None, l.clone())).collect();
        for e in &self.exits {
            for t in &e.trunk_dropout {
                out.push((Some(e.exit_index), LayerSpec::dropout_point(t.id.clone())));
            }
            for l in &e.head_layers {
                out.push((Some(e.exit_index), l.clone()));
            }
        }
        out
    }

    pub(crate) fn to_document(&self) -> SpecDocument {
        SpecDocument {
            input_shape: self.trunk.input_shape.clone(),
            layers: self.trunk.layers.clone(),
            exits: Some(self.exits.clone()),
            dropout: self.dropout,
            partial_dropout: self.partial_dropout,
            mask_file: self.mask_file.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("spec serializes")
    }

    /// Fails with the collected diagnostics if any invariant is violated.
    pub fn ensure_valid(&self) -> Result<()> {
        let diags = validate(self);
        if diags.is_empty() {
            Ok(())
        } else {
            let msg = diags
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidSpec(msg))
        }
    }
}

/// Parses and validates a multi-exit spec document.
pub fn load_multi_exit(doc: &str) -> Result<MultiExitSpec> {
    let parsed: SpecDocument =
        serde_json::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
    let exits = parsed
        .exits
        .ok_or_else(|| Error::Parse("multi-exit spec requires an `exits` list".into()))?;
    let me = MultiExitSpec {
        trunk: NetworkSpec::new(parsed.input_shape, parsed.layers),
        exits,
        dropout: parsed.dropout,
        partial_dropout: parsed.partial_dropout,
        mask_file: parsed.mask_file,
    };
    me.ensure_valid()?;
    Ok(me)
}

pub fn load_multi_exit_file(path: &Path) -> Result<MultiExitSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_multi_exit(&text)
}
