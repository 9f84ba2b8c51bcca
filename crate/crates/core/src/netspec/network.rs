use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::document::SpecDocument;
use super::layer::{LayerOp, LayerSpec, Shape};
use crate::error::{Error, Result};

/// Identifier used for the network input when an attach point or cache key
/// refers to "before the first layer".
pub const INPUT_ID: &str = "@input";

/// A linear chain of layers applied to a single sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Shape, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            input_shape,
            layers,
        }
    }

    /// Input shape of every layer followed by the network output shape
    /// (`layers.len() + 1` entries).
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        chain_shapes(&self.input_shape, INPUT_ID, &self.layers)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.pop().expect("shapes is never empty"))
    }

    /// Structural checks shared by plain networks and trunks: unique ids,
    /// positive parameters and shape compatibility.
    pub fn check(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "input_shape {:?} must be non-empty and positive",
                self.input_shape
            )));
        }
        if !matches!(self.input_shape.len(), 1 | 3) {
            return Err(Error::InvalidSpec(format!(
                "input_shape {:?} must be (features) or (channels, height, width)",
                self.input_shape
            )));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            check_id(&layer.id)?;
            if !seen.insert(layer.id.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate layer id `{}`", layer.id)));
            }
            layer.check_params()?;
        }
        self.shapes()?;
        Ok(())
    }

    /// Index of the terminal classifier head: the last learnable layer, which
    /// must be followed (eventually) by a closing softmax.
    pub fn terminal_head_start(&self) -> Result<usize> {
        match self.layers.last() {
            Some(l) if matches!(l.op, LayerOp::Softmax) => {}
            _ => {
                return Err(Error::InvalidSpec(
                    "network must end in a softmax classifier head".into(),
                ))
            }
        }
        self.layers
            .iter()
            .rposition(LayerSpec::is_learnable)
            .ok_or_else(|| Error::InvalidSpec("network has no learnable layer".into()))
    }

    pub fn class_count(&self) -> Result<usize> {
        match self.output_shape()?.as_slice() {
            [c] => Ok(*c),
            other => Err(Error::InvalidSpec(format!(
                "classifier output must be flat, got {:?}",
                other
            ))),
        }
    }

    /// Single-pass FLOPs of the whole chain.
    pub fn flops(&self) -> Result<u64> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| l.flops(s))
            .sum())
    }

    /// Appends `other` after `self`; `other.input_shape` must equal our output.
    pub fn concat(&self, other: &NetworkSpec) -> Result<NetworkSpec> {
        let out = self.output_shape()?;
        if out != other.input_shape {
            return Err(Error::ShapeMismatch {
                from: self.layers.last().map_or(INPUT_ID.to_string(), |l| l.id.clone()),
                to: other.layers.first().map_or(INPUT_ID.to_string(), |l| l.id.clone()),
                detail: format!("{:?} vs {:?}", out, other.input_shape),
            });
        }
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        let net = NetworkSpec::new(self.input_shape.clone(), layers);
        net.check()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }
}

pub(crate) fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.starts_with('@') {
        return Err(Error::InvalidSpec(format!(
            "layer id `{}` must be non-empty and not start with '@'",
            id
        )));
    }
    Ok(())
}

/// Walks `layers` from `input`, returning the input shape of each layer plus the final output.
pub(crate) fn chain_shapes(input: &[usize], input_id: &str, layers: &[LayerSpec]) -> Result<Vec<Shape>> {
    let mut shapes = Vec::with_capacity(layers.len() + 1);
    shapes.push(input.to_vec());
    let mut prev_id = input_id;
    for layer in layers {
        let cur = shapes.last().expect("non-empty");
        let next = layer.output_shape(cur).map_err(|detail| Error::ShapeMismatch {
            from: prev_id.to_string(),
            to: layer.id.clone(),
            detail,
        })?;
        if next.contains(&0) {
            return Err(Error::ShapeMismatch {
                from: prev_id.to_string(),
                to: layer.id.clone(),
                detail: format!("output shape {:?} has a zero dimension", next),
            });
        }
        shapes.push(next);
        prev_id = &layer.id;
    }
    Ok(shapes)
}

/// Parses and validates a plain network document.
pub fn load_network(doc: &str) -> Result<NetworkSpec> {
    let parsed: SpecDocument =
        serde_json::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
    if parsed.is_multi_exit() {
        return Err(Error::Parse(
            "document carries exits/dropout; load it as a multi-exit spec".into(),
        ));
    }
    let net = NetworkSpec::new(parsed.input_shape, parsed.layers);
    net.check()?;
    net.terminal_head_start()?;
    Ok(net)
}

pub fn load_network_file(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_network(&text)
}
