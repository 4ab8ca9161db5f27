//! Monte Carlo suites: independent seeded runs executed in parallel.

use rayon::prelude::*;

use crate::domain::FlowTriple;
use crate::engine::{run, Model, RunConfig, RunOutput};
use crate::error::{LfnError, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "LFN_THREADS";

/// Worker count from `LFN_THREADS`, or `None` for the rayon default.
pub fn thread_limit() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `template` once per seed. Results come back in the order of `seeds`
/// whatever the scheduling, so suites are deterministic.
pub fn run_suite(model: &Model, template: &RunConfig, seeds: &[u64]) -> Result<Vec<RunOutput>> {
    run_suite_with_threads(model, template, seeds, thread_limit())
}

pub fn run_suite_with_threads(
    model: &Model,
    template: &RunConfig,
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<RunOutput>> {
    if seeds.is_empty() {
        return Err(LfnError::InsufficientSamples { needed: 1, have: 0 });
    }
    let job = || {
        seeds
            .par_iter()
            .map(|&seed| {
                let config = RunConfig {
                    seed,
                    ..template.clone()
                };
                run(model, &config)
            })
            .collect::<Result<Vec<_>>>()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| LfnError::Domain(format!("thread pool: {e}")))?;
    pool.install(job)
}

/// Collection-window flows of every run in a suite.
pub fn suite_flows(outputs: &[RunOutput]) -> Vec<FlowTriple> {
    outputs.iter().map(|o| o.flows.clone()).collect()
}
