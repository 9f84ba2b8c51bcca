use serde::{Deserialize, Serialize};

use super::calibration::{argmax, expected_calibration_error, predictive_entropy, DEFAULT_ECE_BINS};
use super::flops::{cost_multi_exit, count_flops};
use crate::data::{Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::inference::{ensemble, input_seed, mean_of, Executor, ExitMode};
use crate::netspec::MultiExitSpec;
use crate::tensor::{QFormat, Tensor, WeightStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub ece: f64,
    /// Nats.
    pub ape: f64,
    /// Cost-model FLOPs relative to one pass of the single-exit network.
    pub flops_fraction: f64,
    pub n_sample: usize,
    pub n_exit: usize,
    pub n_pass: usize,
    /// Confidence threshold used for the headline accuracy/ECE, if any.
    pub threshold: Option<f64>,
    /// Mean FLOPs actually spent under confidence exiting, relative to the
    /// same baseline.
    pub exit_flops_fraction: Option<f64>,
    pub per_exit_accuracy: Vec<f64>,
    pub per_exit_ece: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub n_pass: usize,
    pub seed: u64,
    pub ece_bins: usize,
    pub threshold: Option<f64>,
    pub exit_mode: ExitMode,
    /// Defaults to the dataset's own moments, one noise input per sample.
    pub noise: Option<NoiseSpec>,
    /// FLOPs of the single-exit reference; defaults to one deterministic pass
    /// through the final exit of the evaluated spec.
    pub base_flops: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_pass: 1,
            seed: 0,
            ece_bins: DEFAULT_ECE_BINS,
            threshold: None,
            exit_mode: ExitMode::PerExit,
            noise: None,
            base_flops: None,
        }
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "accuracy",
            "ece",
            "ape",
            "flops_fraction",
            "exit_flops_fraction",
            "threshold",
            "n_sample",
            "n_exit",
            "n_pass",
        ]
    }

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        vec![
            self.accuracy.to_string(),
            self.ece.to_string(),
            self.ape.to_string(),
            self.flops_fraction.to_string(),
            opt(self.exit_flops_fraction),
            opt(self.threshold),
            self.n_sample.to_string(),
            self.n_exit.to_string(),
            self.n_pass.to_string(),
        ]
    }
}

/// Single-pass FLOPs of the path through the final exit.
pub(crate) fn final_path_flops(me: &MultiExitSpec) -> Result<u64> {
    let exit = me.exits.last().ok_or_else(|| Error::InvalidSpec("spec has no exits".into()))?;
    let depth = me.attach_depth(exit)?;
    let mut layers = me.trunk.layers[..depth].to_vec();
    layers.extend(exit.head_layers.iter().cloned());
    crate::netspec::NetworkSpec::new(me.trunk.input_shape.clone(), layers).flops()
}

fn ape_with(exec: &Executor<'_>, noise: &NoiseSpec, n_pass: usize, seed: u64) -> Result<f64> {
    if noise.count == 0 {
        return Err(Error::precondition("noise count must be at least 1"));
    }
    let shape = exec.spec().trunk.input_shape.clone();
    let mut total = 0.0;
    for (i, x) in noise.samples().into_iter().enumerate() {
        let x = Tensor::new(shape.clone(), x)?;
        let ps = exec.predict(&x, n_pass, input_seed(seed, i as u64))?;
        total += predictive_entropy(&ensemble(&ps, None)?)?;
    }
    Ok(total / noise.count as f64)
}

/// Mean predictive entropy of the full ensemble over Gaussian-noise inputs.
pub fn average_predictive_entropy(
    me: &MultiExitSpec,
    weights: &WeightStore,
    noise: &NoiseSpec,
    n_pass: usize,
    seed: u64,
    qformat: Option<QFormat>,
) -> Result<f64> {
    ape_with(&Executor::new(me, weights, qformat)?, noise, n_pass, seed)
}

/// Accuracy and ECE of the full ensemble (or of confidence-exit decisions
/// when a threshold is set), per-exit accuracy/ECE, aPE and FLOP fractions.
pub fn evaluate(exec: &Executor<'_>, data: &Dataset, opts: &EvalOptions) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::precondition("evaluation set is empty"));
    }
    let me = exec.spec();
    let n_exit = me.n_exit();
    let report = count_flops(me)?;
    let base = match opts.base_flops {
        Some(b) => b,
        None => final_path_flops(me)?,
    } as f64;
    let mut headline = Vec::with_capacity(data.len());
    let mut per_exit: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(data.len()); n_exit];
    let mut spent = 0.0;
    for (i, x) in data.inputs.iter().enumerate() {
        let x = Tensor::new(data.input_shape.clone(), x.clone())?;
        let ps = exec.predict(&x, opts.n_pass, input_seed(opts.seed, i as u64))?;
        let exit_means: Vec<Vec<f64>> = (1..=n_exit)
            .map(|k| mean_of(ps.exit(k).iter()))
            .collect::<Result<_>>()?;
        match opts.threshold {
            None => headline.push(ensemble(&ps, None)?),
            Some(t) => {
                // Same samples a confidence-exit walk would draw.
                let mut taken = n_exit;
                let mut probs = None;
                for k in 1..=n_exit {
                    let p = match opts.exit_mode {
                        ExitMode::PerExit => exit_means[k - 1].clone(),
                        ExitMode::EnsembleSoFar => ensemble(&ps, Some(k))?,
                    };
                    if p[argmax(&p)] >= t || k == n_exit {
                        taken = k;
                        probs = Some(p);
                        break;
                    }
                }
                spent += report.flop_main as f64
                    + (opts.n_pass as u64 * report.per_exit[..taken].iter().sum::<u64>()) as f64;
                headline.push(probs.expect("final exit always decides"));
            }
        }
        for (acc, m) in per_exit.iter_mut().zip(exit_means) {
            acc.push(m);
        }
    }
    let accuracy_of = |probs: &[Vec<f64>]| {
        probs
            .iter()
            .zip(&data.labels)
            .filter(|(p, &y)| argmax(p) == y)
            .count() as f64
            / data.len() as f64
    };
    let noise = opts
        .noise
        .clone()
        .unwrap_or_else(|| data.noise_spec(data.len(), opts.seed));
    let n_sample = opts.n_pass * n_exit;
    Ok(MetricsReport {
        accuracy: accuracy_of(&headline),
        ece: expected_calibration_error(&headline, &data.labels, opts.ece_bins)?,
        ape: ape_with(exec, &noise, opts.n_pass, opts.seed)?,
        flops_fraction: cost_multi_exit(&report, n_sample as u64, n_exit as u64, true)? / base,
        n_sample,
        n_exit,
        n_pass: opts.n_pass,
        threshold: opts.threshold,
        exit_flops_fraction: opts.threshold.map(|_| spent / data.len() as f64 / base),
        per_exit_accuracy: per_exit.iter().map(|p| accuracy_of(p)).collect(),
        per_exit_ece: per_exit
            .iter()
            .map(|p| expected_calibration_error(p, &data.labels, opts.ece_bins))
            .collect::<Result<_>>()?,
    })
}
