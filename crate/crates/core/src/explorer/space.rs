use serde::{Deserialize, Serialize};

use crate::dropout::{DropoutConfig, DropoutKind};
use crate::error::{Error, Result};

/// One joint choice of every knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignPoint {
    pub dropout_kind: DropoutKind,
    /// Keep rate for MCD, mask scale for Masksembles.
    pub dropout_param: f64,
    pub n_exit: usize,
    pub n_pass: usize,
    /// `None` runs in `f32`.
    pub bitwidth: Option<u32>,
    pub channel_fraction: f64,
    pub mapping_engines: usize,
    pub threshold: Option<f64>,
}

impl DesignPoint {
    pub fn n_sample(&self) -> usize {
        self.n_pass * self.n_exit
    }

    /// The point an existing spec realizes at full width.
    pub fn for_spec(
        me: &crate::netspec::MultiExitSpec,
        n_pass: usize,
        bitwidth: Option<u32>,
        mapping_engines: usize,
        threshold: Option<f64>,
    ) -> Result<Self> {
        let (dropout_kind, dropout_param) = match me.dropout {
            Some(DropoutConfig::Mcd { keep_rate, .. }) => (DropoutKind::Mcd, keep_rate),
            Some(DropoutConfig::Masksembles { scale, .. }) => (DropoutKind::Masksembles, scale),
            None => return Err(Error::precondition("spec has no dropout configuration")),
        };
        Ok(DesignPoint {
            dropout_kind,
            dropout_param,
            n_exit: me.n_exit(),
            n_pass,
            bitwidth,
            channel_fraction: 1.0,
            mapping_engines,
            threshold,
        })
    }

    pub fn dropout_config(&self, num_masks: usize) -> DropoutConfig {
        match self.dropout_kind {
            DropoutKind::Mcd => DropoutConfig::mcd(self.dropout_param),
            DropoutKind::Masksembles => DropoutConfig::masksembles(num_masks, self.dropout_param),
        }
    }

    pub fn label(&self) -> String {
        let param = match self.dropout_kind {
            DropoutKind::Mcd => format!("p={}", 1.0 - self.dropout_param),
            DropoutKind::Masksembles => format!("s={}", self.dropout_param),
        };
        format!(
            "{}({}) exits={} passes={} bits={} ch={} engines={} thr={}",
            self.dropout_kind.as_str(),
            param,
            self.n_exit,
            self.n_pass,
            self.bitwidth.map_or("fp32".into(), |b| b.to_string()),
            self.channel_fraction,
            self.mapping_engines,
            self.threshold.map_or("-".into(), |t| t.to_string()),
        )
    }
}

/// Value lists per knob. MCD points take `mcd_drop_rates` (keep rate
/// `1 - p`), Masksembles points take `mask_scales`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub dropout_kinds: Vec<DropoutKind>,
    #[serde(default)]
    pub mcd_drop_rates: Vec<f64>,
    #[serde(default)]
    pub mask_scales: Vec<f64>,
    pub n_exit: Vec<usize>,
    pub n_pass: Vec<usize>,
    #[serde(default = "fp32")]
    pub bitwidth: Vec<Option<u32>>,
    #[serde(default = "full_width")]
    pub channel_fraction: Vec<f64>,
    #[serde(default = "one_engine")]
    pub mapping_engines: Vec<usize>,
    #[serde(default = "no_threshold")]
    pub threshold: Vec<Option<f64>>,
}

fn fp32() -> Vec<Option<u32>> {
    vec![None]
}
fn full_width() -> Vec<f64> {
    vec![1.0]
}
fn one_engine() -> Vec<usize> {
    vec![1]
}
fn no_threshold() -> Vec<Option<f64>> {
    vec![None]
}

impl Grids {
    /// Drop rates 0.125–0.5 for MCD and scales 3–6 for Masksembles.
    pub fn dropout_defaults() -> Self {
        Grids {
            dropout_kinds: vec![DropoutKind::Mcd, DropoutKind::Masksembles],
            mcd_drop_rates: vec![0.125, 0.25, 0.375, 0.5],
            mask_scales: vec![3.0, 4.0, 5.0, 6.0],
            n_exit: vec![3],
            n_pass: vec![2],
            bitwidth: fp32(),
            channel_fraction: full_width(),
            mapping_engines: one_engine(),
            threshold: no_threshold(),
        }
    }

    /// Confidence thresholds tested for confidence-based exiting.
    pub const THRESHOLDS: [f64; 11] = [0.1, 0.15, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999];
}

/// Cartesian product in knob order: dropout (kind, then parameter), exits,
/// passes, bitwidth, channel fraction, engines, threshold.
pub fn enumerate_design_points(g: &Grids) -> Result<Vec<DesignPoint>> {
    let empty = |name: &str| Err(Error::precondition(format!("grid `{}` is empty", name)));
    if g.dropout_kinds.is_empty() {
        return empty("dropout_kinds");
    }
    let mut dropout = Vec::new();
    for &kind in &g.dropout_kinds {
        let params: Vec<f64> = match kind {
            DropoutKind::Mcd if g.mcd_drop_rates.is_empty() => return empty("mcd_drop_rates"),
            DropoutKind::Mcd => g.mcd_drop_rates.iter().map(|p| 1.0 - p).collect(),
            DropoutKind::Masksembles if g.mask_scales.is_empty() => return empty("mask_scales"),
            DropoutKind::Masksembles => g.mask_scales.clone(),
        };
        dropout.extend(params.into_iter().map(|p| (kind, p)));
    }
    for (name, len) in [
        ("n_exit", g.n_exit.len()),
        ("n_pass", g.n_pass.len()),
        ("bitwidth", g.bitwidth.len()),
        ("channel_fraction", g.channel_fraction.len()),
        ("mapping_engines", g.mapping_engines.len()),
        ("threshold", g.threshold.len()),
    ] {
        if len == 0 {
            return empty(name);
        }
    }
    let mut out = Vec::new();
    for &(kind, param) in &dropout {
        for &n_exit in &g.n_exit {
            for &n_pass in &g.n_pass {
                for &bitwidth in &g.bitwidth {
                    for &channel_fraction in &g.channel_fraction {
                        for &mapping_engines in &g.mapping_engines {
                            for &threshold in &g.threshold {
                                out.push(DesignPoint {
                                    dropout_kind: kind,
                                    dropout_param: param,
                                    n_exit,
                                    n_pass,
                                    bitwidth,
                                    channel_fraction,
                                    mapping_engines,
                                    threshold,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
