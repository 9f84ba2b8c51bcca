use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::MultiExitSpec;

/// FLOPs split at the caching boundary: `flop_main` runs once per input,
/// each `per_exit` entry runs once per MC sample of that exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub flop_main: u64,
    pub flop_exit_total: u64,
    pub per_exit: Vec<u64>,
    /// `flop_exit_total / flop_main`; infinite when the trunk is empty but
    /// exits are not, zero when both are empty.
    pub alpha: f64,
}

impl FlopReport {
    pub fn new(flop_main: u64, per_exit: Vec<u64>) -> Self {
        let total: u64 = per_exit.iter().sum();
        let alpha = if total == 0 {
            0.0
        } else {
            total as f64 / flop_main as f64
        };
        FlopReport {
            flop_main,
            flop_exit_total: total,
            per_exit,
            alpha,
        }
    }

    /// Mean per-sample exit work (`flop_exit_total / n_exit`).
    pub fn exit_per_sample(&self) -> f64 {
        if self.per_exit.is_empty() {
            0.0
        } else {
            self.flop_exit_total as f64 / self.per_exit.len() as f64
        }
    }
}

/// MAC = 2 FLOPs; elementwise layers are free. The deterministic trunk (up to
/// the deepest per-sample boundary) is `flop_main`; each exit's trunk segment
/// after its own boundary plus its head is that exit's per-sample cost.
pub fn count_flops(me: &MultiExitSpec) -> Result<FlopReport> {
    let shapes = me.trunk.shapes()?;
    let trunk = |from: usize, to: usize| -> u64 {
        (from..to).map(|d| me.trunk.layers[d].flops(&shapes[d])).sum()
    };
    let main_depth = me.deterministic_depth()?;
    let mut per_exit = Vec::with_capacity(me.n_exit());
    for exit in &me.exits {
        let r = me.resolve_exit(exit)?;
        let head = crate::netspec::NetworkSpec::new(shapes[r.attach_depth].clone(), exit.head_layers.clone());
        per_exit.push(trunk(r.boundary, r.attach_depth) + head.flops()?);
    }
    Ok(FlopReport::new(trunk(0, main_depth), per_exit))
}

/// `N_sample · (FLOP_main + FLOP_exit)`: every sample runs end to end.
pub fn cost_single_exit(report: &FlopReport, n_sample: u64) -> u64 {
    n_sample * (report.flop_main + report.flop_exit_total)
}

/// `FLOP_main + (N_sample / N_exit) · FLOP_exit`. In strict mode `n_exit`
/// must divide `n_sample`.
pub fn cost_multi_exit(report: &FlopReport, n_sample: u64, n_exit: u64, strict: bool) -> Result<f64> {
    if n_sample == 0 || n_exit == 0 {
        return Err(Error::precondition("n_sample and n_exit must be positive"));
    }
    if strict && !n_sample.is_multiple_of(n_exit) {
        return Err(Error::precondition(format!(
            "n_exit {} does not divide n_sample {}",
            n_exit, n_sample
        )));
    }
    Ok(report.flop_main as f64 + n_sample as f64 / n_exit as f64 * report.flop_exit_total as f64)
}

/// `(1 + α) / (1/N_sample + α/N_exit)`, evaluated as
/// `N_sample · (1 + α) / (1 + α · N_sample/N_exit)` so that
/// `N_exit = N_sample` returns `N_sample` exactly.
pub fn reduction_rate(alpha: f64, n_sample: u64, n_exit: u64) -> f64 {
    let (ns, ne) = (n_sample as f64, n_exit as f64);
    ns * ((1.0 + alpha) / (1.0 + alpha * (ns / ne)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        let r = FlopReport::new(100, vec![10]);
        assert_eq!(cost_single_exit(&r, 1), 110);
        assert_eq!(cost_single_exit(&r, 5), 550);
        let r2 = FlopReport::new(100, vec![5, 5]);
        assert_eq!(cost_multi_exit(&r2, 4, 2, true).unwrap(), 120.0);
        assert_eq!(cost_multi_exit(&r2, 2, 2, true).unwrap(), 110.0);
        assert!(cost_multi_exit(&r2, 3, 2, true).is_err());
        assert_eq!(cost_multi_exit(&r2, 3, 2, false).unwrap(), 115.0);
    }

    #[test]
    fn reduction_examples() {
        assert!((reduction_rate(1.0, 4, 2) - 8.0 / 3.0).abs() < 1e-12);
        for alpha in [0.0, 0.3, 7.0] {
            assert_eq!(reduction_rate(alpha, 6, 6), 6.0);
        }
        assert!((reduction_rate(1e-12, 9, 3) - 9.0).abs() < 1e-9);
    }
}
