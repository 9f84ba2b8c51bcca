//! Structural transforms: exit placement, exit selection, dropout insertion
//! and channel scaling.

use super::layer::{LayerOp, LayerSpec, Shape};
use super::multi_exit::{ExitSpec, MultiExitSpec, SiteLocation, TrunkDropout};
use super::network::{NetworkSpec, INPUT_ID};
use crate::dropout::DropoutConfig;
use crate::error::{Error, Result};

/// `global_avg_pool → dense(→classes) → softmax`. The pool is skipped when the
/// block output is already flat, and dense sizes are inferred on instantiation.
pub fn default_head_template() -> Vec<LayerSpec> {
    vec![
        LayerSpec::global_avg_pool("gap"),
        LayerSpec::dense("fc", 1, 1),
        LayerSpec::softmax("softmax"),
    ]
}

/// Instantiates `template` on an activation of shape `input`. Every dense
/// layer gets its input width inferred and the last dense layer emits
/// `classes` outputs; conv/residual channels are inferred likewise.
pub fn instantiate_head(
    template: &[LayerSpec],
    input: &[usize],
    classes: usize,
    prefix: &str,
) -> Result<Vec<LayerSpec>> {
    let last_dense = template
        .iter()
        .rposition(|l| matches!(l.op, LayerOp::Dense(_)))
        .ok_or_else(|| Error::precondition("head template needs a dense classifier layer"))?;
    let mut shape: Shape = input.to_vec();
    let mut head = Vec::with_capacity(template.len());
    for (i, t) in template.iter().enumerate() {
        let id = format!("{}{}", prefix, t.id);
        let op = match t.op {
            LayerOp::GlobalAvgPool if shape.len() == 1 => continue,
            LayerOp::Dense(mut p) => {
                p.in_features = match shape.as_slice() {
                    [f] => *f,
                    other => {
                        return Err(Error::precondition(format!(
                            "head template layer `{}` cannot be adapted to block output {:?}",
                            t.id, other
                        )))
                    }
                };
                if i == last_dense {
                    p.out_features = classes;
                }
                LayerOp::Dense(p)
            }
            LayerOp::Conv2d(mut p) => {
                p.in_channels = shape.first().copied().unwrap_or(0);
                LayerOp::Conv2d(p)
            }
            LayerOp::Residual(mut p) => {
                p.channels = shape.first().copied().unwrap_or(0);
                LayerOp::Residual(p)
            }
            other => other,
        };
        let layer = LayerSpec::new(id, op);
        shape = layer.output_shape(&shape).map_err(|detail| {
            Error::precondition(format!(
                "head template layer `{}` cannot be adapted to block output: {}",
                t.id, detail
            ))
        })?;
        head.push(layer);
    }
    if shape != [classes] || !matches!(head.last().map(|l| l.op), Some(LayerOp::Softmax)) {
        return Err(Error::precondition(format!(
            "head template yields {:?}; expected a softmax over {} classes",
            shape, classes
        )));
    }
    Ok(head)
}

/// Places one exit after every pooling layer of the trunk plus the original
/// terminal head. A pooling layer that directly feeds the terminal head does
/// not get a second exit.
pub fn place_exits(net: &NetworkSpec, head_template: &[LayerSpec]) -> Result<MultiExitSpec> {
    net.check()?;
    if let Some(l) = net
        .layers
        .iter()
        .find(|l| matches!(l.op, LayerOp::DropoutPoint))
    {
        return Err(Error::InvalidSpec(format!(
            "network already contains dropout_point `{}`; exits are placed on plain networks",
            l.id
        )));
    }
    let head_start = net.terminal_head_start()?;
    let classes = net.class_count()?;
    let shapes = net.shapes()?;
    let trunk_layers = net.layers[..head_start].to_vec();

    let mut exits = Vec::new();
    for (i, layer) in trunk_layers.iter().enumerate() {
        if layer.is_pool() && i + 1 < head_start {
            let index = exits.len() + 1;
            let head = instantiate_head(
                head_template,
                &shapes[i + 1],
                classes,
                &format!("exit{}_", index),
            )?;
            exits.push(ExitSpec {
                exit_index: index,
                attach_after: layer.id.clone(),
                head_layers: head,
                trunk_dropout: Vec::new(),
            });
        }
    }
    exits.push(ExitSpec {
        exit_index: exits.len() + 1,
        attach_after: trunk_layers
            .last()
            .map_or_else(|| INPUT_ID.to_string(), |l| l.id.clone()),
        head_layers: net.layers[head_start..].to_vec(),
        trunk_dropout: Vec::new(),
    });

    let me = MultiExitSpec {
        trunk: NetworkSpec::new(net.input_shape.clone(), trunk_layers),
        exits,
        dropout: None,
        partial_dropout: false,
        mask_file: None,
    };
    me.ensure_valid()?;
    Ok(me)
}

/// Keeps the final exit and the `n - 1` deepest early exits, renumbered in
/// depth order.
pub fn select_exits(me: &MultiExitSpec, n: usize) -> Result<MultiExitSpec> {
    if n == 0 || n > me.n_exit() {
        return Err(Error::precondition(format!(
            "cannot keep {} of {} exits",
            n,
            me.n_exit()
        )));
    }
    let mut out = me.clone();
    out.exits = me.exits[me.n_exit() - n..].to_vec();
    for (i, e) in out.exits.iter_mut().enumerate() {
        let new_index = i + 1;
        if e.exit_index != new_index {
            let old_prefix = format!("exit{}_", e.exit_index);
            let new_prefix = format!("exit{}_", new_index);
            for l in &mut e.head_layers {
                if let Some(rest) = l.id.strip_prefix(&old_prefix) {
                    l.id = format!("{}{}", new_prefix, rest);
                }
            }
            e.exit_index = new_index;
        }
    }
    out.partial_dropout = partial_holds(&out)?;
    out.ensure_valid()?;
    Ok(out)
}

/// Removes every dropout site (head `dropout_point`s and trunk sites).
pub fn strip_dropout(me: &MultiExitSpec) -> MultiExitSpec {
    let mut out = me.clone();
    for e in &mut out.exits {
        e.head_layers.retain(|l| !matches!(l.op, LayerOp::DropoutPoint));
        e.trunk_dropout.clear();
    }
    out.dropout = None;
    out.partial_dropout = false;
    out.mask_file = None;
    out
}

fn dropout_id(exit_index: usize, layer_id: &str) -> String {
    let base = layer_id
        .strip_prefix(&format!("exit{}_", exit_index))
        .unwrap_or(layer_id);
    format!("exit{}_drop_{}", exit_index, base)
}

/// Inserts a dropout site in front of each of the `depth` learnable layers
/// closest to every exit, walking from the exit toward the input. Sites that
/// run out of head spill into the trunk segment feeding that exit only.
/// Existing sites are replaced, so the transform is idempotent.
pub fn insert_dropout(me: &MultiExitSpec, cfg: DropoutConfig, depth: usize) -> Result<MultiExitSpec> {
    if depth == 0 {
        return Err(Error::precondition(
            "dropout depth must be at least 1 for a Bayesian network",
        ));
    }
    cfg.check()?;
    let mut out = strip_dropout(me);
    let trunk = out.trunk.clone();
    let mut new_exits = Vec::with_capacity(out.exits.len());
    for exit in &out.exits {
        let attach = out.attach_depth(exit)?;
        let head_learnable: Vec<usize> = exit
            .head_layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_learnable())
            .map(|(i, _)| i)
            .rev()
            .collect();
        let trunk_learnable: Vec<usize> = trunk.layers[..attach]
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_learnable())
            .map(|(i, _)| i)
            .rev()
            .collect();
        let available = head_learnable.len() + trunk_learnable.len();
        if depth > available {
            return Err(Error::precondition(format!(
                "dropout depth {} exceeds the {} insertion sites on exit {}'s path",
                depth, available, exit.exit_index
            )));
        }
        let in_head = depth.min(head_learnable.len());
        let mut head_positions: Vec<usize> = head_learnable[..in_head].to_vec();
        head_positions.sort_unstable();
        let mut head = Vec::with_capacity(exit.head_layers.len() + in_head);
        for (i, layer) in exit.head_layers.iter().enumerate() {
            if head_positions.binary_search(&i).is_ok() {
                head.push(LayerSpec::dropout_point(dropout_id(
                    exit.exit_index,
                    &layer.id,
                )));
            }
            head.push(layer.clone());
        }
        let mut trunk_sites: Vec<TrunkDropout> = trunk_learnable[..depth - in_head]
            .iter()
            .map(|&d| TrunkDropout {
                id: dropout_id(exit.exit_index, &trunk.layers[d].id),
                before: trunk.layers[d].id.clone(),
            })
            .collect();
        trunk_sites.reverse();
        new_exits.push(ExitSpec {
            exit_index: exit.exit_index,
            attach_after: exit.attach_after.clone(),
            head_layers: head,
            trunk_dropout: trunk_sites,
        });
    }
    out.exits = new_exits;
    out.dropout = Some(cfg);
    out.partial_dropout = partial_holds(&out)?;
    out.ensure_valid()?;
    Ok(out)
}

/// True iff no dropout site sits before the shallowest exit's attach point.
pub fn partial_holds(me: &MultiExitSpec) -> Result<bool> {
    let shallowest = me.shallowest_attach_depth()?;
    let sites = me.dropout_sites()?;
    if sites.is_empty() {
        return Ok(false);
    }
    Ok(sites.iter().all(|s| match s.location {
        SiteLocation::Head { .. } => true,
        SiteLocation::Trunk { depth } => depth >= shallowest,
    }))
}

/// Scales the width of every hidden learnable layer by `fraction`
/// (`floor(C * fraction)`), leaving the classifier's output untouched and
/// re-inferring downstream input widths.
pub fn scale_channels(net: &NetworkSpec, fraction: f64) -> Result<NetworkSpec> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::precondition(format!(
            "channel fraction {} outside (0, 1]",
            fraction
        )));
    }
    net.check()?;
    let classifier = net.terminal_head_start()?;
    let scale = |c: usize, id: &str| -> Result<usize> {
        let scaled = (c as f64 * fraction + 1e-9).floor() as usize;
        if scaled == 0 {
            Err(Error::InvalidLayer {
                layer: id.to_string(),
                detail: format!("width {} scaled by {} is zero", c, fraction),
            })
        } else {
            Ok(scaled)
        }
    };
    let mut shape = net.input_shape.clone();
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let op = match layer.op {
            LayerOp::Dense(mut p) => {
                p.in_features = shape.iter().product();
                if i != classifier {
                    p.out_features = scale(p.out_features, &layer.id)?;
                }
                LayerOp::Dense(p)
            }
            LayerOp::Conv2d(mut p) => {
                p.in_channels = shape[0];
                if i != classifier {
                    p.out_channels = scale(p.out_channels, &layer.id)?;
                }
                LayerOp::Conv2d(p)
            }
            LayerOp::Residual(mut p) => {
                p.channels = shape[0];
                LayerOp::Residual(p)
            }
            other => other,
        };
        let scaled = LayerSpec::new(layer.id.clone(), op);
        shape = scaled
            .output_shape(&shape)
            .map_err(|detail| Error::InvalidLayer {
                layer: layer.id.clone(),
                detail,
            })?;
        layers.push(scaled);
    }
    let out = NetworkSpec::new(net.input_shape.clone(), layers);
    out.check()?;
    Ok(out)
}
