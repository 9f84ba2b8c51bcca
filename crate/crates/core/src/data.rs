//! Labeled datasets: CSV I/O and synthetic Gaussian tasks.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat-featured samples with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_shape: Vec<usize>,
    pub inputs: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

/// Per-feature Gaussian noise used for out-of-distribution entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    pub count: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(input_shape: Vec<usize>, inputs: Vec<Vec<f32>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n: usize = input_shape.iter().product();
        if inputs.len() != labels.len() {
            return Err(Error::precondition(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(i) = inputs.iter().position(|x| x.len() != n) {
            return Err(Error::precondition(format!(
                "sample {} has {} features, expected {}",
                i,
                inputs[i].len(),
                n
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::precondition(format!(
                "label {} outside {} classes",
                l, class_count
            )));
        }
        Ok(Dataset {
            input_shape,
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            input_shape: self.input_shape.clone(),
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Per-feature mean and standard deviation, as a noise spec of `count`
    /// samples.
    pub fn noise_spec(&self, count: usize, seed: u64) -> NoiseSpec {
        let f = self.inputs.first().map_or(0, Vec::len);
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0f64; f];
        for x in &self.inputs {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v as f64 / n;
            }
        }
        let mut var = vec![0.0f64; f];
        for x in &self.inputs {
            for ((s, &v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        NoiseSpec {
            mean: mean.iter().map(|&m| m as f32).collect(),
            std: var.iter().map(|&v| v.sqrt() as f32).collect(),
            count,
            seed,
        }
    }

    /// CSV with a header; the first column is the label, the rest features.
    pub fn load_csv(path: &Path, input_shape: Option<Vec<usize>>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{}: {:?}", path.display(), other)),
        })?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| {
                Error::Parse(format!("{} row {}: invalid {}", path.display(), row + 1, what))
            };
            let mut it = rec.iter();
            let label: usize = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("label"))?;
            let x = it
                .map(|s| s.trim().parse::<f32>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| bad("feature"))?;
            labels.push(label);
            inputs.push(x);
        }
        let f = inputs.first().map_or(0, Vec::len);
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Dataset::new(input_shape.unwrap_or_else(|| vec![f]), inputs, labels, classes)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{:?}", other)),
        })?;
        let f = self.inputs.first().map_or(0, Vec::len);
        let mut header = vec!["label".to_string()];
        header.extend((0..f).map(|i| format!("x{}", i)));
        w.write_record(&header)?;
        for (x, l) in self.inputs.iter().zip(&self.labels) {
            let mut rec = vec![l.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

impl NoiseSpec {
    pub fn samples(&self) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dists: Vec<Normal<f64>> = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| Normal::new(m as f64, s.max(0.0) as f64).expect("finite std"))
            .collect();
        (0..self.count)
            .map(|_| dists.iter().map(|d| d.sample(&mut rng) as f32).collect())
            .collect()
    }
}

/// `per_class` points around each center with isotropic standard deviation
/// `std`, shuffled deterministically.
pub fn gaussian_blobs(centers: &[Vec<f32>], per_class: usize, std: f32, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f64, std as f64).expect("finite std");
    let mut pairs = Vec::with_capacity(centers.len() * per_class);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let x = c
                .iter()
                .map(|&m| (m as f64 + noise.sample(&mut rng)) as f32)
                .collect::<Vec<f32>>();
            pairs.push((x, label));
        }
    }
    pairs.shuffle(&mut rng);
    let f = centers.first().map_or(0, Vec::len);
    let (inputs, labels) = pairs.into_iter().unzip();
    Dataset {
        input_shape: vec![f],
        inputs,
        labels,
        class_count: centers.len(),
    }
}

/// Three overlapping 2-D classes on a triangle; the overlap leaves room for
/// calibration differences between exits.
pub fn three_class_2d(per_class: usize, seed: u64) -> Dataset {
    let centers = vec![vec![0.0, 1.2], vec![-1.0, -0.6], vec![1.0, -0.6]];
    gaussian_blobs(&centers, per_class, 0.6, seed)
}
