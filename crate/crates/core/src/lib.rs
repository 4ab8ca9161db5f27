//! Labour flow network simulator.
//!
//! Agents hold (or last held) positions characterised by region, industry,
//! occupation and wage. Each step positions are destroyed and recreated,
//! active agents are matched to vacancies with probability proportional to a
//! composite similarity score, apply when the move raises their optimal
//! utility, and vacancies hire their best-ranked applicant. The resulting
//! job-to-job transitions form three flow-density networks (region, industry,
//! occupation).
//!
//! On top of the engine sit a calibrator that fits the similarity exponents
//! to observed flow densities, and a shock harness that measures how flow
//! topology responds to job-distribution and wage restructuring.

pub mod calibration;
pub mod domain;
pub mod engine;
pub mod error;
pub mod flows;
pub mod io;
pub mod metrics;
pub mod shocks;
pub mod similarity;
pub mod stats;
pub mod suite;

pub use domain::{
    optimal_utility, prefers_switch, Agent, AgentStatus, AlphaDistribution, Cell, Dimension,
    EconomyParams, FlowDensityMatrix, FlowTriple, JobDistribution, MoverStatus, PopulationParams,
    Position, PositionState, SurvivalTable, TransitionRecord,
};
pub use error::{LfnError, Result};
pub use similarity::SimilarityBundle;
