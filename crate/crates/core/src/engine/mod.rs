//! The simulation loop.
//!
//! Each step runs, in order: position destruction, creation of replacement
//! vacancies, aging with activation and applications, hiring by vacancies in
//! random order, and survival trials with replacement of dead agents.

mod matching;
mod run;
mod state;

pub use matching::{match_and_apply, rank_applicants, Application, VacancyIndex};
pub use run::{run, RunConfig, RunOutput};
pub use state::{Model, SimulationState, StepReport};
