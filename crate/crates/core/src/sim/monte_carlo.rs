//! Independent seeded replications of one experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::run::{run_summary, RunSummary};
use crate::sim::spec::ExperimentSpec;

/// Order statistics of one per-run quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Stats {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q05: quantile(&v, 0.05),
            q95: quantile(&v, 0.95),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_seeds: usize,
    pub regret: Stats,
    pub peer_regret: Stats,
    pub algorithm_loss: Stats,
    /// Runs whose bound did not hold; `None` if the bound does not apply.
    pub theorem1_violations: Option<usize>,
    pub theorem3_violations: Option<usize>,
    pub theorem6_violations: Option<usize>,
    /// Runs whose terminal weight argmax is the true best expert.
    pub argmax_is_best: usize,
    /// Runs whose peer-score leader is the true best expert.
    pub peer_best_is_best: usize,
    pub delta_g_events: usize,
    pub runs: Vec<RunSummary>,
}

/// Seed of replication `k` (0-based); replication 0 is the spec's own run.
pub fn replication_seed(root: u64, k: usize) -> u64 {
    root.wrapping_add(k as u64)
}

/// Run `n_seeds` replications on `threads` workers (all cores when `None`).
/// Results are ordered by replication index whatever the scheduling.
pub fn monte_carlo(
    spec: &ExperimentSpec,
    n_seeds: usize,
    threads: Option<usize>,
) -> Result<MonteCarloSummary> {
    if n_seeds == 0 {
        return Err(Error::config("n_seeds must be at least 1"));
    }
    spec.validate()?;
    let job = || -> Result<Vec<RunSummary>> {
        (0..n_seeds)
            .into_par_iter()
            .map(|k| {
                let mut s = spec.clone();
                s.seed = replication_seed(spec.seed, k);
                run_summary(&s)
            })
            .collect()
    };
    let runs = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    Ok(summarize(runs))
}

pub fn summarize(runs: Vec<RunSummary>) -> MonteCarloSummary {
    let pick = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let violations = |f: &dyn Fn(&RunSummary) -> Option<bool>| {
        let held: Vec<bool> = runs.iter().filter_map(f).collect();
        (!held.is_empty()).then(|| held.iter().filter(|h| !**h).count())
    };
    MonteCarloSummary {
        n_seeds: runs.len(),
        regret: Stats::of(&pick(&|r| r.ledger.regret)).expect("at least one run"),
        peer_regret: Stats::of(&pick(&|r| r.ledger.peer_regret)).expect("at least one run"),
        algorithm_loss: Stats::of(&pick(&|r| r.ledger.algorithm_loss)).expect("at least one run"),
        theorem1_violations: violations(&|r| r.bounds.theorem1_holds),
        theorem3_violations: violations(&|r| r.bounds.theorem3_holds),
        theorem6_violations: violations(&|r| r.bounds.theorem6_holds),
        argmax_is_best: runs
            .iter()
            .filter(|r| r.terminal_argmax == r.ledger.best_true)
            .count(),
        peer_best_is_best: runs
            .iter()
            .filter(|r| r.ledger.best_peer == r.ledger.best_true)
            .count(),
        delta_g_events: runs.iter().filter(|r| r.ledger.delta_g_event).count(),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert!(Stats::of(&[]).is_none());
    }
}
