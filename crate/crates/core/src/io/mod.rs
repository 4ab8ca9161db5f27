//! Scenario files, CSV schemas, synthetic fixtures and result output.

pub mod config;
pub mod results;
pub mod synthetic;
pub mod tables;

pub use config::{load_scenario, save_scenario, NodeMetadata, Scenario, ScenarioConfig};
pub use results::{write_results, Manifest, ResultWriter, RunResults};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
