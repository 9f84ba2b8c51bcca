use std::collections::HashSet;
use std::fmt;

use super::layer::{LayerOp, Shape};
use super::multi_exit::MultiExitSpec;
use super::network::{chain_shapes, check_id, INPUT_ID};
use crate::dropout::DropoutConfig;
use crate::error::Error;

/// One violated invariant, naming the layer (or exit) it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn diag(subject: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        subject: subject.into(),
        message: message.into(),
    }
}

fn shape_diag(e: Error) -> Diagnostic {
    match e {
        Error::ShapeMismatch { from, to, detail } => {
            diag(to, format!("shape-incompatible with `{}`: {}", from, detail))
        }
        other => diag("spec", other.to_string()),
    }
}

/// Checks every structural invariant of a multi-exit spec. An empty result
/// means the spec is well formed.
pub fn validate(me: &MultiExitSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if me.exits.is_empty() {
        out.push(diag("exits", "at least one exit is required"));
    }
    let input = &me.trunk.input_shape;
    if input.is_empty() || input.contains(&0) || !matches!(input.len(), 1 | 3) {
        out.push(diag(
            "input_shape",
            format!("{:?} must be (features) or (channels, height, width)", input),
        ));
        return out;
    }

    // ids and parameters
    let mut seen = HashSet::new();
    let mut check = |id: &str, out: &mut Vec<Diagnostic>| {
        if let Err(e) = check_id(id) {
            out.push(diag(id, e.to_string()));
        }
        if !seen.insert(id.to_string()) {
            out.push(diag(id, "duplicate layer id"));
        }
    };
    for l in &me.trunk.layers {
        check(&l.id, &mut out);
    }
    for e in &me.exits {
        for t in &e.trunk_dropout {
            check(&t.id, &mut out);
        }
        for l in &e.head_layers {
            check(&l.id, &mut out);
        }
    }
    let all_layers = me
        .trunk
        .layers
        .iter()
        .chain(me.exits.iter().flat_map(|e| e.head_layers.iter()));
    for l in all_layers {
        if let Err(e) = l.check_params() {
            out.push(diag(&l.id, e.to_string()));
        }
    }
    for l in &me.trunk.layers {
        if matches!(l.op, LayerOp::DropoutPoint) {
            out.push(diag(
                &l.id,
                "dropout_point in the shared trunk; use an exit-local trunk_dropout site",
            ));
        }
    }

    let trunk_shapes = match me.trunk.shapes() {
        Ok(s) => Some(s),
        Err(e) => {
            out.push(shape_diag(e));
            None
        }
    };

    // exits
    let mut prev_depth: Option<usize> = None;
    let mut class_count: Option<usize> = None;
    let mut has_dropout_points = false;
    for (pos, exit) in me.exits.iter().enumerate() {
        let subject = format!("exit {}", exit.exit_index);
        if exit.exit_index != pos + 1 {
            out.push(diag(
                &subject,
                format!("exit_index must be {} (exits numbered 1..N in depth order)", pos + 1),
            ));
        }
        let depth = match me.attach_depth(exit) {
            Ok(d) => d,
            Err(_) => {
                out.push(diag(
                    &exit.attach_after,
                    format!("{} attaches after a layer missing from the trunk", subject),
                ));
                continue;
            }
        };
        if let Some(p) = prev_depth {
            if depth <= p {
                out.push(diag(
                    &exit.attach_after,
                    format!("{} is not deeper than the previous exit", subject),
                ));
            }
        }
        prev_depth = Some(depth);

        match exit.head_layers.last() {
            Some(l) if matches!(l.op, LayerOp::Softmax) => {}
            _ => out.push(diag(&subject, "head must end in softmax")),
        }
        if exit.head_layers.iter().any(|l| matches!(l.op, LayerOp::DropoutPoint))
            || !exit.trunk_dropout.is_empty()
        {
            has_dropout_points = true;
        }

        for t in &exit.trunk_dropout {
            match me.trunk_index(&t.before) {
                Some(d) if d < depth => {}
                Some(_) => out.push(diag(
                    &t.id,
                    format!("`{}` is not on {}'s trunk path", t.before, subject),
                )),
                None => out.push(diag(&t.id, format!("unknown trunk layer `{}`", t.before))),
            }
        }

        if let Some(shapes) = &trunk_shapes {
            let start: &Shape = &shapes[depth];
            let from = if depth == 0 {
                INPUT_ID
            } else {
                exit.attach_after.as_str()
            };
            match chain_shapes(start, from, &exit.head_layers) {
                Ok(hs) => match hs.last().map(Vec::as_slice) {
                    Some([c]) => match class_count {
                        None => class_count = Some(*c),
                        Some(k) if k != *c => out.push(diag(
                            &subject,
                            format!("head outputs {} classes, expected {}", c, k),
                        )),
                        _ => {}
                    },
                    other => out.push(diag(
                        &subject,
                        format!("head output must be flat, got {:?}", other),
                    )),
                },
                Err(e) => out.push(shape_diag(e)),
            }
        }
    }

    // dropout configuration
    match &me.dropout {
        None if has_dropout_points => out.push(diag(
            "dropout",
            "spec has dropout sites but no dropout configuration",
        )),
        Some(cfg) => {
            if let Err(e) = cfg.check() {
                out.push(diag("dropout", e.to_string()));
            }
        }
        None => {}
    }

    if out.is_empty() {
        if let Ok(sites) = me.dropout_sites() {
            if me.partial_dropout {
                if let Ok(shallowest) = me.shallowest_attach_depth() {
                    for s in &sites {
                        if let super::multi_exit::SiteLocation::Trunk { depth } = s.location {
                            if depth < shallowest {
                                out.push(diag(
                                    &s.id,
                                    "dropout site precedes the shallowest exit while partial dropout is set",
                                ));
                            }
                        }
                    }
                }
            }
            if let Some(DropoutConfig::Masksembles { num_masks, .. }) = me.dropout {
                for s in &sites {
                    let features = s.shape.first().copied().unwrap_or(0);
                    if features < num_masks {
                        out.push(diag(
                            &s.id,
                            format!(
                                "{} maskable features cannot host {} masks",
                                features, num_masks
                            ),
                        ));
                    }
                }
            }
        }
    }

    out
}
