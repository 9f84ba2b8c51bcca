use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;

/// Index of the first maximum.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Equal-width binning of max-probability confidence over `[0, 1]`; a sample
/// with confidence `c` goes to bin `min(floor(c·n), n-1)`.
pub fn expected_calibration_error<P: AsRef<[f64]>>(probs: &[P], labels: &[usize], n_bins: usize) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::precondition(format!(
            "{} predictions but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::precondition("n_bins must be at least 1"));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut conf = vec![0.0f64; n_bins];
    for (p, &y) in probs.iter().zip(labels) {
        let p = p.as_ref();
        let k = argmax(p);
        let c = p[k];
        let b = ((c * n_bins as f64).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        conf[b] += c;
        correct[b] += usize::from(k == y);
    }
    let n = probs.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (correct[b] as f64 / m - conf[b] / m).abs()
        })
        .sum())
}

/// `-Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn predictive_entropy(probs: &[f64]) -> Result<f64> {
    if let Some(v) = probs.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::precondition(format!("invalid probability {}", v)));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::precondition(format!("probabilities sum to {}", s)));
    }
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}
