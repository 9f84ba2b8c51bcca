use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dropout::{generate_masks, DropoutConfig, DropoutKind, Granularity, MaskSet, RngStream};
use crate::error::{Error, Result};
use crate::explorer::DesignPoint;
use crate::mapping::{HardwareModel, Latency, MappingPlan, ResourceEstimate, Resources};
use crate::metrics::{FlopReport, MetricsReport};
use crate::netspec::{chain_shapes, LayerKind, MultiExitSpec, Shape};
use crate::tensor::QFormat;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Trunk,
    /// Exit-local dropout site inside the shared trunk.
    ExitTrunk,
    Head,
}

/// Where a layer executes. `main` layers run once per input on the shared
/// trunk; `exits` lists the exits that re-execute the layer per MC sample,
/// `engines` the engines those samples are scheduled on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineBinding {
    pub main: bool,
    pub exits: Vec<usize>,
    pub engines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub id: String,
    pub kind: LayerKind,
    pub section: Section,
    pub exit_index: Option<usize>,
    pub output_shape: Shape,
    pub flops: u64,
    pub binding: EngineBinding,
    pub pipeline: bool,
    pub quantization: Option<QFormat>,
}

/// Philox4x32-10 stream layout for one MCD unit. Draw `n` of pass `p` is
/// word `n` of `philox(counter = [n/2 lo, n/2 hi, p lo, p hi], key)`; the
/// uniform is its 53 high bits scaled to `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngSpec {
    pub generator: String,
    pub seed: u64,
    pub key: [u32; 2],
    pub key_derivation: String,
    pub counter_layout: String,
    pub draws_per_sample: usize,
}

/// Mask table with one `0`/`1` string per mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskTable {
    pub feature_count: usize,
    pub num_masks: usize,
    pub scale: f64,
    pub rows: Vec<String>,
}

impl MaskTable {
    pub fn from_mask_set(m: &MaskSet) -> Self {
        MaskTable {
            feature_count: m.feature_count,
            num_masks: m.num_masks,
            scale: m.scale,
            rows: m
                .masks
                .iter()
                .map(|row| row.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect())
                .collect(),
        }
    }

    pub fn to_mask_set(&self) -> Result<MaskSet> {
        let masks = self
            .rows
            .iter()
            .map(|r| {
                r.chars()
                    .map(|c| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        other => Err(Error::Parse(format!("mask table holds `{}`", other))),
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let m = MaskSet {
            feature_count: self.feature_count,
            num_masks: self.num_masks,
            scale: self.scale,
            masks,
        };
        m.check()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DropoutUnitParams {
    Mcd {
        keep_rate: f64,
        granularity: Granularity,
        inverted: bool,
        rng: RngSpec,
    },
    Masksembles {
        masks: MaskTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutUnit {
    pub layer_id: String,
    pub exit_index: usize,
    /// Elements masked per sample.
    pub size: usize,
    pub params: DropoutUnitParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimates {
    pub flops: FlopReport,
    pub latency: Latency,
    pub resources: ResourceEstimate,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorPlan {
    pub schema_version: u32,
    pub design_point: DesignPoint,
    pub mapping_plan: MappingPlan,
    /// Implementation strategy label from the hardware model.
    pub strategy: String,
    pub clock_mhz: f64,
    pub budget: Resources,
    pub layers: Vec<LayerRecord>,
    pub dropout_units: Vec<DropoutUnit>,
    pub estimates: Estimates,
}

impl AcceleratorPlan {
    /// Pretty JSON with a trailing newline; field order is fixed, so equal
    /// plans serialize to equal bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }
}

pub fn parse_plan(text: &str) -> Result<AcceleratorPlan> {
    let plan: AcceleratorPlan = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if plan.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "plan schema version {} (expected {})",
            plan.schema_version, SCHEMA_VERSION
        )));
    }
    Ok(plan)
}

fn check_consistency(dp: &DesignPoint, plan: &MappingPlan, me: &MultiExitSpec) -> Result<()> {
    let mut problems = Vec::new();
    if dp.n_exit != me.n_exit() {
        problems.push(format!("design point has {} exits, spec has {}", dp.n_exit, me.n_exit()));
    }
    if plan.n_sample != dp.n_sample() {
        problems.push(format!(
            "mapping covers {} samples, design point needs {}",
            plan.n_sample,
            dp.n_sample()
        ));
    }
    if plan.n_engines != dp.mapping_engines {
        problems.push(format!(
            "mapping uses {} engines, design point asks for {}",
            plan.n_engines, dp.mapping_engines
        ));
    }
    match me.dropout {
        Some(cfg) => {
            let (kind, param) = match cfg {
                DropoutConfig::Mcd { keep_rate, .. } => (DropoutKind::Mcd, keep_rate),
                DropoutConfig::Masksembles { scale, .. } => (DropoutKind::Masksembles, scale),
            };
            if kind != dp.dropout_kind || param != dp.dropout_param {
                problems.push(format!(
                    "spec dropout {}({}) differs from design point {}({})",
                    kind.as_str(),
                    param,
                    dp.dropout_kind.as_str(),
                    dp.dropout_param
                ));
            }
            if let DropoutConfig::Masksembles { num_masks, .. } = cfg {
                if dp.n_pass > num_masks {
                    problems.push(format!("{} passes exceed {} masks", dp.n_pass, num_masks));
                }
            }
        }
        None => problems.push("spec has no dropout configuration".into()),
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::precondition(format!("inconsistent plan inputs: {}", problems.join("; "))))
    }
}

/// Engines running any sample of exit `k` (samples `(k-1)·n_pass ..`).
fn exit_engines(plan: &MappingPlan, exit_index: usize, n_pass: usize) -> Vec<usize> {
    let lo = (exit_index - 1) * n_pass;
    let hi = lo + n_pass;
    plan.sample_assignment
        .iter()
        .enumerate()
        .filter(|(_, samples)| samples.iter().any(|&s| s >= lo && s < hi))
        .map(|(e, _)| e)
        .collect()
}

/// Builds the plan document. Mask tables come from `masks` when given (keyed
/// by site id) and are otherwise generated from the spec's configuration.
pub fn emit_plan(
    dp: &DesignPoint,
    plan: &MappingPlan,
    me: &MultiExitSpec,
    masks: Option<&BTreeMap<String, MaskSet>>,
    estimates: &Estimates,
    hw: &HardwareModel,
    seed: u64,
) -> Result<AcceleratorPlan> {
    me.ensure_valid()?;
    check_consistency(dp, plan, me)?;
    let cfg = me.dropout.expect("checked above");
    let quantization = dp.bitwidth.map(QFormat::for_bitwidth).transpose()?;
    let trunk_shapes = me.trunk.shapes()?;
    let main_depth = me.deterministic_depth()?;
    let resolved = me.resolve()?;

    let mut layers = Vec::new();
    for (d, l) in me.trunk.layers.iter().enumerate() {
        let exits: Vec<usize> = resolved
            .iter()
            .filter(|r| r.boundary <= d && d < r.attach_depth)
            .map(|r| r.exit_index)
            .collect();
        layers.push((d, l, exits));
    }
    let mut records: Vec<LayerRecord> = Vec::new();
    let binding = |main: bool, exits: Vec<usize>| {
        let mut engines: Vec<usize> = exits.iter().flat_map(|&k| exit_engines(plan, k, dp.n_pass)).collect();
        engines.sort_unstable();
        engines.dedup();
        EngineBinding { main, exits, engines }
    };
    for (d, l, exits) in layers {
        records.push(LayerRecord {
            id: l.id.clone(),
            kind: l.kind(),
            section: Section::Trunk,
            exit_index: None,
            output_shape: trunk_shapes[d + 1].clone(),
            flops: l.flops(&trunk_shapes[d]),
            binding: binding(d < main_depth, exits),
            pipeline: true,
            quantization,
        });
    }
    for (exit, r) in me.exits.iter().zip(&resolved) {
        for &(depth, id) in &r.trunk_sites {
            records.push(LayerRecord {
                id: id.to_string(),
                kind: LayerKind::DropoutPoint,
                section: Section::ExitTrunk,
                exit_index: Some(exit.exit_index),
                output_shape: trunk_shapes[depth].clone(),
                flops: 0,
                binding: binding(false, vec![exit.exit_index]),
                pipeline: true,
                quantization,
            });
        }
        let head_shapes = chain_shapes(&trunk_shapes[r.attach_depth], &exit.attach_after, &exit.head_layers)?;
        for (i, l) in exit.head_layers.iter().enumerate() {
            records.push(LayerRecord {
                id: l.id.clone(),
                kind: l.kind(),
                section: Section::Head,
                exit_index: Some(exit.exit_index),
                output_shape: head_shapes[i + 1].clone(),
                flops: l.flops(&head_shapes[i]),
                binding: binding(false, vec![exit.exit_index]),
                pipeline: true,
                quantization,
            });
        }
    }

    let mut units = Vec::new();
    for site in me.dropout_sites()? {
        let size: usize = site.shape.iter().product();
        let params = match cfg {
            DropoutConfig::Mcd {
                keep_rate,
                granularity,
                inverted,
            } => {
                let draws = match granularity {
                    Granularity::Element => size,
                    Granularity::Channel => site.shape[0],
                };
                DropoutUnitParams::Mcd {
                    keep_rate,
                    granularity,
                    inverted,
                    rng: RngSpec {
                        generator: "philox4x32-10".into(),
                        seed,
                        key: RngStream::new(seed, 0, site.id.as_str()).key(),
                        key_derivation: "k = splitmix64(seed ^ splitmix64(fnv1a64(layer_id))); key = [k lo, k hi]".into(),
                        counter_layout: "[draw/2 lo, draw/2 hi, pass lo, pass hi]".into(),
                        draws_per_sample: draws,
                    },
                }
            }
            DropoutConfig::Masksembles { num_masks, scale } => {
                let generated;
                let table = match masks.and_then(|m| m.get(&site.id)) {
                    Some(m) => m,
                    None => {
                        generated = generate_masks(site.shape[0], num_masks, scale)?;
                        &generated
                    }
                };
                if table.feature_count != site.shape[0] || table.num_masks != num_masks {
                    return Err(Error::precondition(format!(
                        "mask table for `{}` is {}x{}, site needs {}x{}",
                        site.id, table.num_masks, table.feature_count, num_masks, site.shape[0]
                    )));
                }
                DropoutUnitParams::Masksembles {
                    masks: MaskTable::from_mask_set(table),
                }
            }
        };
        units.push(DropoutUnit {
            layer_id: site.id,
            exit_index: site.exit_index,
            size,
            params,
        });
    }

    Ok(AcceleratorPlan {
        schema_version: SCHEMA_VERSION,
        design_point: dp.clone(),
        mapping_plan: plan.clone(),
        strategy: hw.strategy.clone(),
        clock_mhz: hw.clock_mhz,
        budget: hw.budget,
        layers: records,
        dropout_units: units,
        estimates: estimates.clone(),
    })
}
