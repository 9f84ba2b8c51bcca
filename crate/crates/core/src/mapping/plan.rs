use serde::{Deserialize, Serialize};

use super::hardware::{HardwareModel, Resources};
use crate::dropout::DropoutKind;
use crate::error::{Error, Result};
use crate::inference::{Executor, PredictionSet};
use crate::metrics::FlopReport;
use crate::netspec::MultiExitSpec;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Spatial,
    Temporal,
    Hybrid,
}

/// Engine `e` runs `sample_assignment[e]` in order, one sample per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub strategy: Strategy,
    pub n_sample: usize,
    pub n_engines: usize,
    pub rounds: usize,
    pub sample_assignment: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub cycles: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub resources: Resources,
    pub fits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub plan: MappingPlan,
    pub latency: Latency,
    pub resources: Resources,
}

/// Round-robin assignment of `n_sample` samples to `n_engines` engines.
pub fn build_mapping(n_sample: usize, n_engines: usize) -> Result<MappingPlan> {
    if n_engines == 0 || n_engines > n_sample {
        return Err(Error::precondition(format!(
            "need 1 <= n_engines ({}) <= n_sample ({})",
            n_engines, n_sample
        )));
    }
    let mut sample_assignment = vec![Vec::new(); n_engines];
    for s in 0..n_sample {
        sample_assignment[s % n_engines].push(s);
    }
    let strategy = if n_engines == n_sample {
        Strategy::Spatial
    } else if n_engines == 1 {
        Strategy::Temporal
    } else {
        Strategy::Hybrid
    };
    Ok(MappingPlan {
        strategy,
        n_sample,
        n_engines,
        rounds: n_sample.div_ceil(n_engines),
        sample_assignment,
    })
}

/// `cycles = FLOP_main/ops + rounds · (FLOP_exit per sample / ops)`;
/// memory transfers are not modeled.
pub fn estimate_latency(plan: &MappingPlan, report: &FlopReport, hw: &HardwareModel) -> Latency {
    let ops = hw.ops_per_cycle_per_engine;
    let cycles = report.flop_main as f64 / ops + plan.rounds as f64 * (report.exit_per_sample() / ops);
    Latency {
        cycles,
        ms: cycles / (hw.clock_mhz * 1e3),
    }
}

fn dropout_resources(kind: Option<DropoutKind>, layers: usize, hw: &HardwareModel) -> Resources {
    let n = layers as f64;
    match kind {
        Some(DropoutKind::Mcd) => Resources {
            lut: hw.dropout_unit_cost.rng_lut * n,
            ..Resources::default()
        },
        Some(DropoutKind::Masksembles) => Resources {
            bram: hw.dropout_unit_cost.mask_rom_bram * n,
            ..Resources::default()
        },
        None => Resources::default(),
    }
}

/// `n_engines · engine_cost` plus one RNG (MCD) or mask ROM (Masksembles)
/// per dropout layer.
pub fn estimate_resources(plan: &MappingPlan, me: &MultiExitSpec, hw: &HardwareModel) -> ResourceEstimate {
    let engines = hw.engine_cost.scaled(plan.n_engines as f64);
    let units = dropout_resources(me.dropout.map(|d| d.kind()), me.dropout_layer_count(), hw);
    let resources = engines.plus(&units);
    ResourceEstimate {
        resources,
        fits: resources.fits_in(&hw.budget),
    }
}

/// Every engine count `1..=n_sample`, minus points dominated in both latency
/// and engine area, sorted by latency. Dropout units cost the same for every
/// engine count and so do not affect dominance.
pub fn pareto_mappings(n_sample: usize, report: &FlopReport, hw: &HardwareModel) -> Result<Vec<ParetoPoint>> {
    if n_sample == 0 {
        return Err(Error::precondition("n_sample must be at least 1"));
    }
    let all: Vec<ParetoPoint> = (1..=n_sample)
        .map(|e| {
            let plan = build_mapping(n_sample, e)?;
            Ok(ParetoPoint {
                latency: estimate_latency(&plan, report, hw),
                resources: hw.engine_cost.scaled(e as f64),
                plan,
            })
        })
        .collect::<Result<_>>()?;
    let dominates = |a: &ParetoPoint, b: &ParetoPoint| {
        a.latency.cycles <= b.latency.cycles
            && a.resources.le(&b.resources)
            && (a.latency.cycles < b.latency.cycles || a.resources != b.resources)
    };
    let mut front: Vec<ParetoPoint> = all
        .iter()
        .filter(|p| !all.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    front.sort_by(|a, b| {
        a.latency
            .cycles
            .total_cmp(&b.latency.cycles)
            .then(a.plan.n_engines.cmp(&b.plan.n_engines))
    });
    Ok(front)
}

/// Runs every MC sample in the order the plan schedules them (round by round,
/// engine by engine). Sample `s` is pass `s % n_pass` of exit `s / n_pass + 1`.
pub fn execute_plan(
    exec: &Executor<'_>,
    plan: &MappingPlan,
    input: &Tensor,
    n_pass: usize,
    seed: u64,
) -> Result<PredictionSet> {
    let n_exit = exec.spec().n_exit();
    if plan.n_sample != n_pass * n_exit {
        return Err(Error::precondition(format!(
            "plan covers {} samples, spec needs {} x {}",
            plan.n_sample, n_exit, n_pass
        )));
    }
    let cached = exec.run_trunk(input)?;
    let mut samples: Vec<Vec<Option<Vec<f32>>>> = vec![vec![None; n_pass]; n_exit];
    for round in 0..plan.rounds {
        for engine in &plan.sample_assignment {
            if let Some(&s) = engine.get(round) {
                let (k, p) = (s / n_pass, s % n_pass);
                samples[k][p] = Some(exec.run_sample(&cached, k + 1, p, seed)?);
            }
        }
    }
    let samples = samples
        .into_iter()
        .map(|row| row.into_iter().map(|s| s.expect("plan partitions samples")).collect())
        .collect();
    exec.prediction_set(samples, n_pass, seed)
}
