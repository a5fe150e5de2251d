//! Per-run score tracking and cross-seed aggregation.

use crate::error::{Error, Result};
use crate::latent::LatentStructureReport;
use crate::stats;

/// Score statistics for one optimization iteration: the batch alone, and the
/// union of every batch generated so far (the initial training set is *not*
/// part of the union — its statistics are reported separately as the base).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub max: f64,
    pub p75: f64,
    pub p95: f64,
    pub cumulative_max: f64,
    pub cumulative_p75: f64,
    pub cumulative_p95: f64,
    /// Effective sample size of this iteration's refit weights.
    pub n_eff: f64,
}

/// Everything measured over one seeded optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Property statistics of the starting dataset, for "did we beat the
    /// data" comparisons.
    pub base_max: f64,
    pub base_p75: f64,
    pub base_p95: f64,
    pub iterations: Vec<IterationMetrics>,
    /// Latent geometry of the final model over the starting dataset.
    pub latent: LatentStructureReport,
}

/// Cross-seed means for one iteration, with a confidence interval on the
/// headline cumulative-max metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateIteration {
    pub mean_max: f64,
    pub mean_p75: f64,
    pub mean_p95: f64,
    pub mean_cumulative_max: f64,
    /// 95% Student-t half-width over seeds.
    pub cumulative_max_ci: f64,
    pub mean_cumulative_p75: f64,
    pub mean_cumulative_p95: f64,
    pub mean_n_eff: f64,
}

#[derive(Debug, Clone)]
pub struct AggregateMetrics {
    pub runs: usize,
    pub iterations: Vec<AggregateIteration>,
    pub base_max_mean: f64,
    pub base_p75_mean: f64,
    pub base_p95_mean: f64,
}

/// Average per-iteration metrics across seeds. Needs at least two runs (a
/// confidence interval over one seed is undefined) with equal iteration
/// counts.
pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<AggregateMetrics> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let t = runs[0].iterations.len();
    if runs.iter().any(|r| r.iterations.len() != t) {
        return Err(Error::shape(
            "aggregation iteration counts",
            t,
            runs.iter()
                .map(|r| r.iterations.len())
                .find(|&l| l != t)
                .unwrap(),
        ));
    }

    let collect = |f: &dyn Fn(&IterationMetrics) -> f64, i: usize| -> Vec<f64> {
        runs.iter().map(|r| f(&r.iterations[i])).collect()
    };
    let mut iterations = Vec::with_capacity(t);
    for i in 0..t {
        let cum_max = collect(&|m| m.cumulative_max, i);
        let (mean_cumulative_max, ci) = stats::mean_and_ci95(&cum_max);
        iterations.push(AggregateIteration {
            mean_max: stats::mean(&collect(&|m| m.max, i)),
            mean_p75: stats::mean(&collect(&|m| m.p75, i)),
            mean_p95: stats::mean(&collect(&|m| m.p95, i)),
            mean_cumulative_max,
            cumulative_max_ci: ci.expect("two or more runs"),
            mean_cumulative_p75: stats::mean(&collect(&|m| m.cumulative_p75, i)),
            mean_cumulative_p95: stats::mean(&collect(&|m| m.cumulative_p95, i)),
            mean_n_eff: stats::mean(&collect(&|m| m.n_eff, i)),
        });
    }
    let base: Vec<f64> = runs.iter().map(|r| r.base_max).collect();
    let base75: Vec<f64> = runs.iter().map(|r| r.base_p75).collect();
    let base95: Vec<f64> = runs.iter().map(|r| r.base_p95).collect();
    Ok(AggregateMetrics {
        runs: runs.len(),
        iterations,
        base_max_mean: stats::mean(&base),
        base_p75_mean: stats::mean(&base75),
        base_p95_mean: stats::mean(&base95),
    })
}
