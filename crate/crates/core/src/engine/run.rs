use std::collections::VecDeque;

use crate::domain::{FlowDensityMatrix, FlowTriple, MoverStatus};
use crate::error::{LfnError, Result};
use crate::flows::{error_xi, steady_state_reached, FlowCounts, SteadyStateParams};

use super::state::{Model, SimulationState};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub steady_state: SteadyStateParams,
    /// Steps simulated after the steady state is detected; only their
    /// transitions enter the returned flows.
    pub collection_steps: usize,
    /// Reference flows for the per-step error. Without them the error is
    /// measured against all-zero matrices.
    pub observed: Option<FlowTriple>,
    /// Fixed number of warm-up steps replacing steady-state detection.
    pub burn_in: Option<usize>,
    /// Keep every transition in the final state's log.
    pub record_log: bool,
    /// Count hires of unemployed agents as flows from their last position.
    pub include_unemployed: bool,
}

impl RunConfig {
    pub fn new(seed: u64, steady_state: SteadyStateParams, collection_steps: usize) -> Self {
        RunConfig {
            seed,
            steady_state,
            collection_steps,
            observed: None,
            burn_in: None,
            record_log: false,
            include_unemployed: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub state: SimulationState,
    /// Step at which the collection window started.
    pub steady_state_step: u64,
    /// Error value after each warm-up step.
    pub xi_history: Vec<f64>,
    /// Densities over the collection window.
    pub flows: FlowTriple,
    pub flow_counts: FlowCounts,
    pub destroyed_per_step: Vec<usize>,
}

/// Runs one simulation: warm-up until the steady state (or the fixed
/// burn-in), then `collection_steps` more steps whose transitions form the
/// returned flows.
pub fn run(model: &Model, config: &RunConfig) -> Result<RunOutput> {
    config.steady_state.validate()?;
    let dims = model.bundle.dims();
    let zeros;
    let reference = match &config.observed {
        Some(obs) => obs,
        None => {
            zeros = FlowTriple {
                region: FlowDensityMatrix::zeros(dims.0),
                industry: FlowDensityMatrix::zeros(dims.1),
                occupation: FlowDensityMatrix::zeros(dims.2),
            };
            &zeros
        }
    };

    let mut state = SimulationState::initialise(model, config.seed);
    state.record_log = config.record_log;
    let counts_of = |state: &mut SimulationState, report_counts: &mut FlowCounts, destroyed: &mut Vec<usize>| -> Result<()> {
        let report = state.step(model)?;
        destroyed.push(report.destroyed);
        for t in &report.transitions {
            if config.include_unemployed || t.status == MoverStatus::Employed {
                report_counts.record(t.from, t.to);
            }
        }
        Ok(())
    };

    let ss = &config.steady_state;
    let mut destroyed = Vec::new();
    let mut xi_history = Vec::new();
    let mut cumulative = FlowCounts::new(dims);
    let mut window: VecDeque<FlowCounts> = VecDeque::new();
    let mut windowed = FlowCounts::new(dims);

    let warm_up_done = |history: &[f64], step: usize| -> Result<bool> {
        match config.burn_in {
            Some(n) => Ok(step >= n),
            None => Ok(history.len() >= ss.window + ss.lag && steady_state_reached(history, ss)?),
        }
    };

    loop {
        if warm_up_done(&xi_history, state.step as usize)? {
            break;
        }
        if config.burn_in.is_none() && state.step as usize >= ss.max_steps {
            return Err(LfnError::NonConvergence {
                max_steps: ss.max_steps,
            });
        }
        let mut step_counts = FlowCounts::new(dims);
        counts_of(&mut state, &mut step_counts, &mut destroyed)?;
        if config.burn_in.is_some() {
            continue;
        }
        let current = if ss.windowed_flows {
            windowed.add(&step_counts);
            window.push_back(step_counts);
            if window.len() > ss.window {
                let old = window.pop_front().expect("window is non-empty");
                windowed.sub(&old);
            }
            windowed.densities()
        } else {
            cumulative.add(&step_counts);
            cumulative.densities()
        };
        xi_history.push(error_xi(&current, reference)?);
    }

    let steady_state_step = state.step;
    let mut collected = FlowCounts::new(dims);
    for _ in 0..config.collection_steps {
        counts_of(&mut state, &mut collected, &mut destroyed)?;
    }

    Ok(RunOutput {
        seed: config.seed,
        flows: collected.densities(),
        flow_counts: collected,
        state,
        steady_state_step,
        xi_history,
        destroyed_per_step: destroyed,
    })
}
