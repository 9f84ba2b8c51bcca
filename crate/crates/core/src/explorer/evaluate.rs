use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::DesignPoint;
use crate::data::{Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::inference::{Executor, ExitMode};
use crate::mapping::{build_mapping, estimate_latency, estimate_resources, HardwareModel, Latency, MappingPlan, ResourceEstimate};
use crate::metrics::{count_flops, evaluate, EvalOptions, FlopReport, MetricsReport};
use crate::netspec::{insert_dropout, place_exits, scale_channels, select_exits, LayerSpec, MultiExitSpec, NetworkSpec};
use crate::tensor::{learnable_layers, train_toy, QFormat, TrainParams, WeightStore};

/// How channel-scaled variants obtain weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Train the scaled network from scratch.
    #[default]
    Retrain,
    /// Train at full width once and keep the leading channels.
    Slice,
}

/// Everything a point evaluation needs besides the point itself.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub base_net: NetworkSpec,
    pub head_template: Vec<LayerSpec>,
    pub train: Dataset,
    pub test: Dataset,
    pub noise: NoiseSpec,
    pub hw: HardwareModel,
    pub train_params: TrainParams,
    /// Dropout layers per exit.
    pub dropout_depth: usize,
    pub num_masks: usize,
    pub channel_mode: ChannelMode,
    pub exit_mode: ExitMode,
    pub ece_bins: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub flops: FlopReport,
    pub mapping: MappingPlan,
    pub latency: Latency,
    pub resources: ResourceEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub point: DesignPoint,
    pub outcome: std::result::Result<Evaluation, String>,
}

impl PointResult {
    pub fn evaluation(&self) -> Option<&Evaluation> {
        self.outcome.as_ref().ok()
    }
}

type WeightCache = Mutex<HashMap<String, Arc<Result<WeightStore, String>>>>;

/// The multi-exit spec a point describes.
pub fn build_spec(dp: &DesignPoint, ctx: &EvalContext, channel_fraction: f64) -> Result<MultiExitSpec> {
    let net = if channel_fraction < 1.0 {
        scale_channels(&ctx.base_net, channel_fraction)?
    } else {
        ctx.base_net.clone()
    };
    let me = place_exits(&net, &ctx.head_template)?;
    let me = select_exits(&me, dp.n_exit)?;
    insert_dropout(&me, dp.dropout_config(ctx.num_masks), ctx.dropout_depth)
}

fn trained(dp: &DesignPoint, ctx: &EvalContext, me: &MultiExitSpec, cache: Option<&WeightCache>) -> Result<WeightStore> {
    let train_width = match ctx.channel_mode {
        ChannelMode::Retrain => dp.channel_fraction,
        ChannelMode::Slice => 1.0,
    };
    let key = format!("{:?}|{}|{}|{}", dp.dropout_kind, dp.dropout_param, dp.n_exit, train_width);
    let compute = || -> Result<WeightStore> {
        let train_me = if train_width == dp.channel_fraction {
            me.clone()
        } else {
            build_spec(dp, ctx, train_width)?
        };
        train_toy(&train_me, &ctx.train, &ctx.train_params)
    };
    let full = match cache {
        None => compute()?,
        Some(cache) => {
            let cached = cache.lock().expect("cache lock").get(&key).cloned();
            let entry = match cached {
                Some(e) => e,
                None => {
                    let e = Arc::new(compute().map_err(|e| e.to_string()));
                    cache.lock().expect("cache lock").entry(key).or_insert(e).clone()
                }
            };
            entry.as_ref().clone().map_err(Error::Precondition)?
        }
    };
    if train_width == dp.channel_fraction {
        Ok(full)
    } else {
        full.slice_for(learnable_layers(me))
    }
}

fn evaluate_inner(dp: &DesignPoint, ctx: &EvalContext, cache: Option<&WeightCache>) -> Result<Evaluation> {
    let me = build_spec(dp, ctx, dp.channel_fraction)?;
    let weights = trained(dp, ctx, &me, cache)?;
    let q = dp.bitwidth.map(QFormat::for_bitwidth).transpose()?;
    let exec = Executor::new(&me, &weights, q)?;
    // single-exit reference: one deterministic pass of the unscaled network
    let base_flops = ctx.base_net.flops()?;
    let metrics = evaluate(
        &exec,
        &ctx.test,
        &EvalOptions {
            n_pass: dp.n_pass,
            seed: ctx.seed,
            ece_bins: ctx.ece_bins,
            threshold: dp.threshold,
            exit_mode: ctx.exit_mode,
            noise: Some(ctx.noise.clone()),
            base_flops: Some(base_flops),
        },
    )?;
    let flops = count_flops(&me)?;
    let mapping = build_mapping(dp.n_sample(), dp.mapping_engines)?;
    Ok(Evaluation {
        latency: estimate_latency(&mapping, &flops, &ctx.hw),
        resources: estimate_resources(&mapping, &me, &ctx.hw),
        metrics,
        flops,
        mapping,
    })
}

/// Builds, trains, quantizes and scores one point. Failures are captured in
/// the result rather than returned.
pub fn evaluate_design_point(index: usize, dp: &DesignPoint, ctx: &EvalContext) -> PointResult {
    PointResult {
        index,
        point: dp.clone(),
        outcome: evaluate_inner(dp, ctx, None).map_err(|e| e.to_string()),
    }
}

/// Evaluates every point on `jobs` threads; results come back in point
/// order and do not depend on `jobs`. Trained weights are shared between
/// points that differ only in inference-time knobs.
pub fn explore(points: &[DesignPoint], ctx: &EvalContext, jobs: usize) -> Result<Vec<PointResult>> {
    let cache: WeightCache = Mutex::new(HashMap::new());
    let run = || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, dp)| PointResult {
                index: i,
                point: dp.clone(),
                outcome: evaluate_inner(dp, ctx, Some(&cache)).map_err(|e| e.to_string()),
            })
            .collect::<Vec<_>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::precondition(format!("thread pool: {}", e)))?;
    Ok(pool.install(run))
}
