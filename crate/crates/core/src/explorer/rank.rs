use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::evaluate::{Evaluation, PointResult};
use crate::error::{Error, Result};
use crate::mapping::Resources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Ece,
    Ape,
    Flops,
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Metric {
    pub fn default_direction(self) -> Direction {
        match self {
            Metric::Accuracy | Metric::Ape => Direction::Maximize,
            Metric::Ece | Metric::Flops | Metric::Latency => Direction::Minimize,
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Metric::Accuracy => 0.002,
            Metric::Ece => 0.001,
            Metric::Ape => 0.01,
            Metric::Flops | Metric::Latency => 0.0,
        }
    }

    /// FLOPs are the confidence-exit fraction when a threshold is set, the
    /// cost-model fraction otherwise.
    pub fn value(self, e: &Evaluation) -> f64 {
        let m = &e.metrics;
        match self {
            Metric::Accuracy => m.accuracy,
            Metric::Ece => m.ece,
            Metric::Ape => m.ape,
            Metric::Flops => m.exit_flops_fraction.unwrap_or(m.flops_fraction),
            Metric::Latency => e.latency.ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityEntry {
    pub metric: Metric,
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl PriorityEntry {
    pub fn new(metric: Metric) -> Self {
        PriorityEntry {
            metric,
            direction: None,
            tolerance: None,
        }
    }

    fn direction(&self) -> Direction {
        self.direction.unwrap_or(self.metric.default_direction())
    }

    fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(self.metric.default_tolerance())
    }

    /// Values are compared on a grid of width `tolerance`, so values in the
    /// same cell tie and the comparison stays transitive.
    fn key(&self, e: &Evaluation) -> f64 {
        let v = self.metric.value(e);
        let t = self.tolerance();
        let q = if t > 0.0 { (v / t).round() } else { v };
        match self.direction() {
            Direction::Maximize => -q,
            Direction::Minimize => q,
        }
    }
}

/// Lexicographic metric order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Priority(pub Vec<PriorityEntry>);

impl Priority {
    pub fn single(metric: Metric) -> Self {
        Priority(vec![PriorityEntry::new(metric)])
    }

    pub fn check(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::precondition("priority list is empty"));
        }
        for (i, e) in self.0.iter().enumerate() {
            if self.0[..i].iter().any(|o| o.metric == e.metric) {
                return Err(Error::precondition(format!("metric {:?} repeated in priority", e.metric)));
            }
            if e.tolerance().is_nan() || e.tolerance() < 0.0 {
                return Err(Error::precondition("tolerances must be non-negative"));
            }
        }
        Ok(())
    }

    /// Total order: metric keys in priority order, then point index.
    pub fn compare(&self, a: &PointResult, b: &PointResult) -> Ordering {
        if let (Some(ea), Some(eb)) = (a.evaluation(), b.evaluation()) {
            for entry in &self.0 {
                let o = entry.key(ea).total_cmp(&entry.key(eb));
                if o != Ordering::Equal {
                    return o;
                }
            }
        }
        a.index.cmp(&b.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub min_accuracy: Option<f64>,
    pub max_ece: Option<f64>,
    pub min_ape: Option<f64>,
    pub max_flops_fraction: Option<f64>,
    pub max_latency_ms: Option<f64>,
    pub resource_budget: Option<Resources>,
}

impl Constraints {
    pub fn is_active(&self) -> bool {
        self.min_accuracy.is_some()
            || self.max_ece.is_some()
            || self.min_ape.is_some()
            || self.max_flops_fraction.is_some()
            || self.max_latency_ms.is_some()
            || self.resource_budget.is_some()
    }

    pub fn admits(&self, e: &Evaluation) -> bool {
        let m = &e.metrics;
        self.min_accuracy.is_none_or(|v| m.accuracy >= v)
            && self.max_ece.is_none_or(|v| m.ece <= v)
            && self.min_ape.is_none_or(|v| m.ape >= v)
            && self.max_flops_fraction.is_none_or(|v| Metric::Flops.value(e) <= v)
            && self.max_latency_ms.is_none_or(|v| e.latency.ms <= v)
            && self
                .resource_budget
                .as_ref()
                .is_none_or(|b| e.resources.resources.fits_in(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Indices of feasible points, best first.
    pub order: Vec<usize>,
    pub best: Option<usize>,
    pub failed: usize,
    pub infeasible: usize,
}

impl Ranking {
    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Drops failed points and points violating any active constraint, then
/// sorts survivors by `priority`.
pub fn filter_and_rank(results: &[PointResult], constraints: &Constraints, priority: &Priority) -> Result<Ranking> {
    if results.is_empty() {
        return Err(Error::precondition("no results to rank"));
    }
    priority.check()?;
    let failed = results.iter().filter(|r| r.evaluation().is_none()).count();
    let mut feasible: Vec<&PointResult> = results
        .iter()
        .filter(|r| r.evaluation().is_some_and(|e| constraints.admits(e)))
        .collect();
    let infeasible = results.len() - failed - feasible.len();
    feasible.sort_by(|a, b| priority.compare(a, b));
    let order: Vec<usize> = feasible.iter().map(|r| r.index).collect();
    Ok(Ranking {
        best: order.first().copied(),
        order,
        failed,
        infeasible,
    })
}

/// Best point by accuracy, by ECE and by aPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selections {
    pub acc_opt: Option<usize>,
    pub ece_opt: Option<usize>,
    pub ape_opt: Option<usize>,
}

pub fn optimal_selections(results: &[PointResult], constraints: &Constraints) -> Result<Selections> {
    let best = |m: Metric| -> Result<Option<usize>> {
        let exact = Priority(vec![PriorityEntry {
            metric: m,
            direction: None,
            tolerance: Some(0.0),
        }]);
        Ok(filter_and_rank(results, constraints, &exact)?.best)
    };
    Ok(Selections {
        acc_opt: best(Metric::Accuracy)?,
        ece_opt: best(Metric::Ece)?,
        ape_opt: best(Metric::Ape)?,
    })
}
