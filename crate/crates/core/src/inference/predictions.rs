use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability vectors indexed by `[exit][pass]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub n_exit: usize,
    pub n_pass: usize,
    pub class_count: usize,
    pub samples: Vec<Vec<Vec<f32>>>,
    pub seed: u64,
    /// Digest of the dropout configuration that produced the samples.
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Export {
    n_exit: usize,
    n_pass: usize,
    class_count: usize,
    seed: u64,
    config_hash: String,
    /// `n_exit · n_pass` rows, exit-major.
    probs: Vec<Vec<f32>>,
}

impl PredictionSet {
    pub fn n_sample(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    /// Samples of exit `exit_index` (1-based).
    pub fn exit(&self, exit_index: usize) -> &[Vec<f32>] {
        &self.samples[exit_index - 1]
    }

    pub fn to_json(&self) -> String {
        let export = Export {
            n_exit: self.n_exit,
            n_pass: self.n_pass,
            class_count: self.class_count,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            probs: self.samples.iter().flatten().cloned().collect(),
        };
        serde_json::to_string(&export).expect("prediction set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Export = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if e.probs.len() != e.n_exit * e.n_pass || e.probs.iter().any(|p| p.len() != e.class_count) {
            return Err(Error::Parse("prediction matrix does not match its dimensions".into()));
        }
        let samples = if e.n_pass == 0 {
            vec![Vec::new(); e.n_exit]
        } else {
            e.probs.chunks(e.n_pass).map(<[_]>::to_vec).collect()
        };
        Ok(PredictionSet {
            n_exit: e.n_exit,
            n_pass: e.n_pass,
            class_count: e.class_count,
            samples,
            seed: e.seed,
            config_hash: e.config_hash,
        })
    }
}

/// Equally weighted mean of every sample from exits `1..=upto` (all exits by
/// default), renormalized in `f64`.
pub fn ensemble(preds: &PredictionSet, upto_exit: Option<usize>) -> Result<Vec<f64>> {
    let upto = upto_exit.unwrap_or(preds.n_exit);
    if upto == 0 || upto > preds.n_exit {
        return Err(Error::precondition(format!(
            "cannot ensemble exits 1..={} of {}",
            upto, preds.n_exit
        )));
    }
    mean_of(preds.samples[..upto].iter().flatten())
}

pub(crate) fn mean_of<'a>(samples: impl Iterator<Item = &'a Vec<f32>>) -> Result<Vec<f64>> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for s in samples {
        if acc.is_empty() {
            acc = vec![0.0; s.len()];
        }
        for (a, &v) in acc.iter_mut().zip(s) {
            *a += v as f64;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::precondition("ensemble over an empty selection"));
    }
    let total: f64 = acc.iter().sum();
    for a in &mut acc {
        *a /= total;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMode {
    /// MC mean of the current exit only.
    #[default]
    PerExit,
    /// Ensemble of all samples from exits `1..=k`.
    EnsembleSoFar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitDecision {
    pub probs: Vec<f64>,
    pub exit_taken: usize,
    pub confidence: f64,
    pub mode: ExitMode,
}
