//! Parallel replications with an ordered reduction.
//!
//! Each replication draws from its own streams, so the worker count changes
//! only the wall time. Results are collected in replication order before
//! anything is aggregated.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use arcs_core::balance::RunMetrics;
use arcs_core::engine::TrialConfig;
use arcs_core::simulate::{run_replication, summarize, ReplicationSummary, Scenario};
use arcs_core::Error;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

/// Per-replication results in replication order, plus the aggregate.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: TrialConfig,
    pub example: String,
    pub records: Vec<arcs_core::Result<RunMetrics>>,
}

impl Study {
    pub fn summary(&self) -> Result<ReplicationSummary> {
        Ok(summarize(&self.config, &self.example, &self.records)?)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.is_err()).count()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} worker threads: {e}")))
}

/// Runs `trial(rep)` for `rep` in `0..reps` on `workers` threads. A panic
/// inside one replication becomes that replication's error.
pub fn replicate_with<F>(reps: usize, workers: usize, trial: F) -> Result<Vec<arcs_core::Result<RunMetrics>>>
where
    F: Fn(u64) -> arcs_core::Result<RunMetrics> + Sync,
{
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| trial(rep))).unwrap_or_else(|_| {
                    Err(Error::Replications(format!("replication {rep} panicked")))
                });
                match outcome {
                    Ok(mut m) => {
                        m.wall_seconds = start.elapsed().as_secs_f64();
                        Ok(m)
                    }
                    Err(e) => {
                        log::warn!("replication {rep} failed: {e}");
                        Err(e)
                    }
                }
            })
            .collect()
    }))
}

/// `reps` replications of `config` on `scenario`.
pub fn run_study(
    config: &TrialConfig,
    scenario: &Scenario,
    example: &str,
    reps: usize,
    workers: usize,
) -> Result<Study> {
    config.validate()?;
    log::info!(
        "{} on example {example}: n = {}, p = {}, {reps} replications on {workers} workers",
        config.method,
        config.n,
        config.p
    );
    let records = replicate_with(reps, workers, |rep| {
        run_replication(config, scenario, rep).map(|(_, m)| m)
    })?;
    Ok(Study {
        config: config.clone(),
        example: example.into(),
        records,
    })
}
