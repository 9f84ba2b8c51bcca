use std::collections::BTreeMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::predictions::{mean_of, ExitDecision, ExitMode, PredictionSet};
use crate::dropout::{generate_masks, masksembles_forward, mcd_forward, DropoutConfig, MaskSet, RngStream};
use crate::error::{Error, Result};
use crate::netspec::{LayerOp, MultiExitSpec, ResolvedExit, INPUT_ID};
use crate::tensor::{forward_chain, quantize, QFormat, Tensor, WeightStore};

/// Trunk activations keyed by the id of the layer after which each exit's
/// per-sample segment starts (`@input` for the network input).
#[derive(Debug, Clone, PartialEq)]
pub struct CachedFeatures {
    pub entries: BTreeMap<String, Tensor>,
    /// FLOPs spent producing the cache.
    pub flops: u64,
}

/// A multi-exit spec bound to (optionally quantized) weights and mask tables.
#[derive(Debug, Clone)]
pub struct Executor<'a> {
    me: &'a MultiExitSpec,
    weights: WeightStore,
    act_q: Option<QFormat>,
    masks: BTreeMap<String, MaskSet>,
    deterministic_depth: usize,
    parallel: bool,
}

/// Per-input RNG seed used by dataset-level evaluation so inputs see
/// independent dropout realizations.
pub fn input_seed(seed: u64, input_index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(input_index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest is 32 bytes"))
}

fn config_hash(cfg: &Option<DropoutConfig>) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    let d = Sha256::digest(text.as_bytes());
    d[..8].iter().map(|b| format!("{:02x}", b)).collect()
}

fn boundary_key(me: &MultiExitSpec, depth: usize) -> String {
    if depth == 0 {
        INPUT_ID.to_string()
    } else {
        me.trunk.layers[depth - 1].id.clone()
    }
}

/// Generated mask table for every Masksembles site, keyed by site id; empty
/// for MCD specs.
pub fn site_masks(me: &MultiExitSpec) -> Result<BTreeMap<String, MaskSet>> {
    let mut masks = BTreeMap::new();
    if let Some(DropoutConfig::Masksembles { num_masks, scale }) = me.dropout {
        for site in me.dropout_sites()? {
            masks.insert(site.id.clone(), generate_masks(site.shape[0], num_masks, scale)?);
        }
    }
    Ok(masks)
}

impl<'a> Executor<'a> {
    /// Validates the spec and weights; quantizes weights once when a format
    /// is given. Masksembles tables are generated from the dropout config
    /// unless supplied with [`Executor::with_masks`].
    pub fn new(me: &'a MultiExitSpec, weights: &WeightStore, qformat: Option<QFormat>) -> Result<Self> {
        me.ensure_valid()?;
        weights.check_for(me)?;
        if let Some(q) = &qformat {
            q.check()?;
        }
        let masks = site_masks(me)?;
        Ok(Executor {
            me,
            weights: match &qformat {
                Some(q) => weights.quantized(q),
                None => weights.clone(),
            },
            act_q: qformat,
            masks,
            deterministic_depth: me.deterministic_depth()?,
            parallel: false,
        })
    }

    /// Replaces generated mask tables with externally supplied ones.
    pub fn with_masks(mut self, masks: BTreeMap<String, MaskSet>) -> Result<Self> {
        for (site, old) in &self.masks {
            let new = masks
                .get(site)
                .ok_or_else(|| Error::precondition(format!("no mask table for `{}`", site)))?;
            new.check()?;
            if new.feature_count != old.feature_count || new.num_masks != old.num_masks {
                return Err(Error::precondition(format!(
                    "mask table for `{}` is {}x{}, site needs {}x{}",
                    site, new.num_masks, new.feature_count, old.num_masks, old.feature_count
                )));
            }
        }
        self.masks = masks;
        Ok(self)
    }

    /// Evaluate MC passes on the rayon pool. Results are unchanged.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn spec(&self) -> &MultiExitSpec {
        self.me
    }

    pub fn masks(&self) -> &BTreeMap<String, MaskSet> {
        &self.masks
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.me.trunk.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                from: INPUT_ID.into(),
                to: self
                    .me
                    .trunk
                    .layers
                    .first()
                    .map_or_else(|| "exit 1".to_string(), |l| l.id.clone()),
                detail: format!(
                    "input shape {:?}, expected {:?}",
                    input.shape(),
                    self.me.trunk.input_shape
                ),
            });
        }
        Ok(())
    }

    /// One deterministic trunk pass up to the deepest per-sample boundary.
    pub fn run_trunk(&self, input: &Tensor) -> Result<CachedFeatures> {
        self.check_input(input)?;
        let resolved = self.me.resolve()?;
        let mut entries = BTreeMap::new();
        let mut cur = input.clone();
        let mut flops = 0;
        for depth in 0..=self.deterministic_depth {
            if resolved.iter().any(|r| r.boundary == depth) {
                entries.insert(boundary_key(self.me, depth), cur.clone());
            }
            if depth < self.deterministic_depth {
                let (next, f) = forward_chain(
                    std::slice::from_ref(&self.me.trunk.layers[depth]),
                    &cur,
                    &self.weights,
                    self.act_q.as_ref(),
                )?;
                flops += f;
                cur = next;
            }
        }
        Ok(CachedFeatures { entries, flops })
    }

    fn dropout(&self, site: &str, x: &Tensor, pass: usize, seed: u64) -> Result<Tensor> {
        let cfg = self
            .me
            .dropout
            .ok_or_else(|| Error::InvalidSpec(format!("dropout site `{}` without configuration", site)))?;
        let y = match cfg {
            DropoutConfig::Mcd {
                keep_rate,
                granularity,
                inverted,
            } => {
                let mut rng = RngStream::new(seed, pass as u64, site);
                mcd_forward(x, keep_rate, granularity, &mut rng, inverted)?
            }
            DropoutConfig::Masksembles { .. } => {
                let masks = self
                    .masks
                    .get(site)
                    .ok_or_else(|| Error::precondition(format!("no mask table for `{}`", site)))?;
                masksembles_forward(x, pass, masks)?
            }
        };
        Ok(match &self.act_q {
            Some(q) => quantize(&y, q),
            None => y,
        })
    }

    /// Bayesian segment of one exit for one pass, starting from `start`, the
    /// activation at trunk depth `from`.
    fn run_segment(&self, r: &ResolvedExit<'_>, from: usize, start: &Tensor, pass: usize, seed: u64) -> Result<(Vec<f32>, u64)> {
        let q = self.act_q.as_ref();
        let mut cur = start.clone();
        let mut flops = 0;
        for depth in from..r.attach_depth {
            for &(_, site) in r.trunk_sites.iter().filter(|(d, _)| *d == depth) {
                cur = self.dropout(site, &cur, pass, seed)?;
            }
            let (next, f) = forward_chain(std::slice::from_ref(&self.me.trunk.layers[depth]), &cur, &self.weights, q)?;
            flops += f;
            cur = next;
        }
        for layer in r.head {
            if matches!(layer.op, LayerOp::DropoutPoint) {
                cur = self.dropout(&layer.id, &cur, pass, seed)?;
            } else {
                let (next, f) = forward_chain(std::slice::from_ref(layer), &cur, &self.weights, q)?;
                flops += f;
                cur = next;
            }
        }
        Ok((cur.into_data(), flops))
    }

    fn check_passes(&self, n_pass: usize) -> Result<()> {
        if n_pass == 0 {
            return Err(Error::precondition("n_pass must be at least 1"));
        }
        if let Some(DropoutConfig::Masksembles { num_masks, .. }) = self.me.dropout {
            if n_pass > num_masks {
                return Err(Error::precondition(format!(
                    "{} passes requested but only {} Masksembles masks exist",
                    n_pass, num_masks
                )));
            }
        }
        Ok(())
    }

    /// `n_pass` samples of one exit from cached trunk features; pass `p` uses
    /// MCD stream `(seed, p, site)` or mask index `p`.
    pub fn run_exit_samples(
        &self,
        cached: &CachedFeatures,
        exit_index: usize,
        n_pass: usize,
        seed: u64,
    ) -> Result<(Vec<Vec<f32>>, u64)> {
        self.check_passes(n_pass)?;
        let exit = self.me.exit(exit_index)?;
        let r = self.me.resolve_exit(exit)?;
        let key = boundary_key(self.me, r.boundary);
        let start = cached
            .entries
            .get(&key)
            .ok_or_else(|| Error::precondition(format!("no cached features at `{}`", key)))?;
        let run = |p: usize| self.run_segment(&r, r.boundary, start, p, seed);
        let results: Vec<Result<(Vec<f32>, u64)>> = if self.parallel {
            (0..n_pass).into_par_iter().map(run).collect()
        } else {
            (0..n_pass).map(run).collect()
        };
        let mut samples = Vec::with_capacity(n_pass);
        let mut flops = 0;
        for res in results {
            let (s, f) = res?;
            samples.push(s);
            flops += f;
        }
        Ok((samples, flops))
    }

    /// One MC sample: exit `exit_index`, pass `pass`.
    pub fn run_sample(&self, cached: &CachedFeatures, exit_index: usize, pass: usize, seed: u64) -> Result<Vec<f32>> {
        self.check_passes(pass + 1)?;
        let exit = self.me.exit(exit_index)?;
        let r = self.me.resolve_exit(exit)?;
        let key = boundary_key(self.me, r.boundary);
        let start = cached
            .entries
            .get(&key)
            .ok_or_else(|| Error::precondition(format!("no cached features at `{}`", key)))?;
        Ok(self.run_segment(&r, r.boundary, start, pass, seed)?.0)
    }

    pub(crate) fn prediction_set(&self, samples: Vec<Vec<Vec<f32>>>, n_pass: usize, seed: u64) -> Result<PredictionSet> {
        Ok(PredictionSet {
            n_exit: self.me.n_exit(),
            n_pass,
            class_count: self.me.class_count()?,
            samples,
            seed,
            config_hash: config_hash(&self.me.dropout),
        })
    }

    /// Trunk once, then `n_pass` samples per exit; also returns executed FLOPs.
    pub fn predict_counted(&self, input: &Tensor, n_pass: usize, seed: u64) -> Result<(PredictionSet, u64)> {
        self.check_passes(n_pass)?;
        let cached = self.run_trunk(input)?;
        let mut flops = cached.flops;
        let mut samples = Vec::with_capacity(self.me.n_exit());
        for e in &self.me.exits {
            let (s, f) = self.run_exit_samples(&cached, e.exit_index, n_pass, seed)?;
            flops += f;
            samples.push(s);
        }
        Ok((self.prediction_set(samples, n_pass, seed)?, flops))
    }

    pub fn predict(&self, input: &Tensor, n_pass: usize, seed: u64) -> Result<PredictionSet> {
        Ok(self.predict_counted(input, n_pass, seed)?.0)
    }

    /// Walks exits in depth order and stops at the first whose confidence
    /// (max of the averaged probabilities) reaches `threshold`. Also returns
    /// the FLOPs spent up to that exit.
    pub fn confidence_exit_counted(
        &self,
        input: &Tensor,
        threshold: f64,
        mode: ExitMode,
        n_pass: usize,
        seed: u64,
    ) -> Result<(ExitDecision, u64)> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::precondition(format!("threshold {} outside (0, 1)", threshold)));
        }
        self.check_passes(n_pass)?;
        let cached = self.run_trunk(input)?;
        let mut flops = cached.flops;
        let mut seen: Vec<Vec<f32>> = Vec::new();
        let n_exit = self.me.n_exit();
        for e in &self.me.exits {
            let (s, f) = self.run_exit_samples(&cached, e.exit_index, n_pass, seed)?;
            flops += f;
            let probs = match mode {
                ExitMode::PerExit => mean_of(s.iter())?,
                ExitMode::EnsembleSoFar => {
                    seen.extend(s);
                    mean_of(seen.iter())?
                }
            };
            let confidence = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if confidence >= threshold || e.exit_index == n_exit {
                return Ok((
                    ExitDecision {
                        probs,
                        exit_taken: e.exit_index,
                        confidence,
                        mode,
                    },
                    flops,
                ));
            }
        }
        Err(Error::InvalidSpec("spec has no exits".into()))
    }

    pub fn confidence_exit(
        &self,
        input: &Tensor,
        threshold: f64,
        mode: ExitMode,
        n_pass: usize,
        seed: u64,
    ) -> Result<ExitDecision> {
        Ok(self.confidence_exit_counted(input, threshold, mode, n_pass, seed)?.0)
    }
}

pub fn run_trunk(
    me: &MultiExitSpec,
    input: &Tensor,
    weights: &WeightStore,
    qformat: Option<QFormat>,
) -> Result<CachedFeatures> {
    Executor::new(me, weights, qformat)?.run_trunk(input)
}

pub fn run_exit_samples(
    cached: &CachedFeatures,
    me: &MultiExitSpec,
    exit_index: usize,
    n_pass: usize,
    weights: &WeightStore,
    seed: u64,
) -> Result<Vec<Vec<f32>>> {
    Ok(Executor::new(me, weights, None)?
        .run_exit_samples(cached, exit_index, n_pass, seed)?
        .0)
}

pub fn predict(
    me: &MultiExitSpec,
    input: &Tensor,
    n_pass: usize,
    weights: &WeightStore,
    seed: u64,
    qformat: Option<QFormat>,
) -> Result<PredictionSet> {
    Executor::new(me, weights, qformat)?.predict(input, n_pass, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn confidence_exit(
    me: &MultiExitSpec,
    input: &Tensor,
    threshold: f64,
    mode: ExitMode,
    weights: &WeightStore,
    n_pass: usize,
    seed: u64,
) -> Result<ExitDecision> {
    Executor::new(me, weights, None)?.confidence_exit(input, threshold, mode, n_pass, seed)
}
