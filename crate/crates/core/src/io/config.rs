//! Scenario configuration and loading of the files it references.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tables::{read_jobs, read_matrix, read_survival, read_table};
use crate::calibration::CalibrationConfig;
use crate::domain::{Dimension, EconomyParams, JobDistribution, PopulationParams, SurvivalTable};
use crate::engine::{Model, RunConfig};
use crate::error::{LfnError, Result};
use crate::flows::SteadyStateParams;
use crate::shocks::ShockSpec;
use crate::similarity::{normalize_bundle, NuMatrices, RawSimilarity, SimilarityBundle, SkillVector};

pub const DEFAULT_VACANCY_FRACTION: f64 = Model::DEFAULT_VACANCY_FRACTION;

fn default_lambda() -> f64 {
    EconomyParams::DEFAULT_LAMBDA
}
fn default_gamma() -> f64 {
    EconomyParams::DEFAULT_GAMMA
}
fn default_entry_age() -> u32 {
    EconomyParams::DEFAULT_ENTRY_AGE
}
fn default_one() -> u32 {
    1
}
fn default_vacancy_fraction() -> f64 {
    DEFAULT_VACANCY_FRACTION
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_collection_steps() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomyConfig {
    pub n_agents: usize,
    /// Must equal the job counts' total when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_positions: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub theta_e: f64,
    pub theta_ue: f64,
    #[serde(default = "default_entry_age")]
    pub entry_age: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuFiles {
    pub region: PathBuf,
    pub industry: PathBuf,
    pub occupation: PathBuf,
}

/// Input paths, relative to the scenario file unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFiles {
    pub jobs: PathBuf,
    pub distances: PathBuf,
    pub io_table: PathBuf,
    pub skills: PathBuf,
    pub survival: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<NuFiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub economy: EconomyConfig,
    #[serde(default)]
    pub population: PopulationParams,
    pub files: InputFiles,
    #[serde(default)]
    pub steady_state: SteadyStateParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shock: Option<ShockSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Years of aging per step.
    #[serde(default = "default_one")]
    pub age_increment: u32,
    #[serde(default = "default_vacancy_fraction")]
    pub vacancy_fraction: f64,
    #[serde(default = "default_collection_steps")]
    pub collection_steps: usize,
    #[serde(default = "default_true")]
    pub include_unemployed: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LfnError::validation("seeds", "at least one seed is required"));
        }
        if !(0.0..1.0).contains(&self.vacancy_fraction) {
            return Err(LfnError::validation("vacancy_fraction", "must lie in [0, 1)"));
        }
        if self.age_increment == 0 {
            return Err(LfnError::validation("age_increment", "must be at least 1"));
        }
        self.steady_state.validate()?;
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        Ok(())
    }
}

pub fn save_scenario(config: &ScenarioConfig, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(config).expect("config serialises");
    fs::write(path, json + "\n").map_err(|e| LfnError::io(path, e))
}

/// Category labels per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetadata {
    pub region: Vec<String>,
    pub industry: Vec<String>,
    pub occupation: Vec<String>,
}

impl NodeMetadata {
    pub fn get(&self, dim: Dimension) -> &[String] {
        match dim {
            Dimension::Region => &self.region,
            Dimension::Industry => &self.industry,
            Dimension::Occupation => &self.occupation,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.region.len(), self.industry.len(), self.occupation.len())
    }

    pub fn validate(&self) -> Result<()> {
        for dim in Dimension::ALL {
            let labels = self.get(dim);
            if labels.is_empty() {
                return Err(LfnError::validation(format!("labels.{dim}"), "no labels"));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = labels.iter().find(|l| !seen.insert(*l)) {
                return Err(LfnError::validation(format!("labels.{dim}"), format!("duplicate label `{dup}`")));
            }
        }
        Ok(())
    }
}

pub fn read_labels(path: &Path) -> Result<NodeMetadata> {
    let text = fs::read_to_string(path).map_err(|e| LfnError::io(path, e))?;
    let labels: NodeMetadata = serde_json::from_str(&text).map_err(|e| LfnError::parse(path, e))?;
    labels.validate()?;
    Ok(labels)
}

/// A validated scenario with every referenced input loaded.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
    pub labels: NodeMetadata,
    pub jobs: JobDistribution,
    pub survival: SurvivalTable,
    pub raw: RawSimilarity,
    /// Normalised similarities carrying the configured exponents.
    pub bundle: SimilarityBundle,
}

fn mismatch(first: &Path, second: &Path, detail: String) -> LfnError {
    LfnError::DimensionMismatch {
        first: first.display().to_string(),
        second: second.display().to_string(),
        detail,
    }
}

impl Scenario {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn economy(&self) -> EconomyParams {
        let e = &self.config.economy;
        EconomyParams {
            n_agents: e.n_agents,
            n_positions: self.jobs.total() as usize,
            lambda: e.lambda,
            gamma: e.gamma,
            theta_e: e.theta_e,
            theta_ue: e.theta_ue,
            survival: self.survival.clone(),
            entry_age: e.entry_age,
            age_increment: self.config.age_increment,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            self.economy(),
            self.config.population.clone(),
            self.jobs.clone(),
            Arc::new(self.bundle.clone()),
            self.config.vacancy_fraction,
        )
    }

    /// Run settings for one seed, without reference flows.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            include_unemployed: self.config.include_unemployed,
            ..RunConfig::new(seed, self.config.steady_state.clone(), self.config.collection_steps)
        }
    }
}

/// Reads and validates a scenario file and all inputs it references,
/// checking that category counts agree across files.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| LfnError::io(path, e))?;
    let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| LfnError::parse(path, e))?;
    config.validate()?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let at = |p: &Path| base_dir.join(p);
    let files = &config.files;

    let labels_path = at(&files.labels);
    let labels = read_labels(&labels_path)?;
    let dims = labels.dims();

    let distances_path = at(&files.distances);
    let (distances, _) = read_matrix(&distances_path)?;
    if distances.nrows() != dims.0 {
        return Err(mismatch(
            &distances_path,
            &labels_path,
            format!("{} regions vs {} region labels", distances.nrows(), dims.0),
        ));
    }
    let io_path = at(&files.io_table);
    let (io_table, _) = read_matrix(&io_path)?;
    if io_table.nrows() != dims.1 {
        return Err(mismatch(
            &io_path,
            &labels_path,
            format!("{} industries vs {} industry labels", io_table.nrows(), dims.1),
        ));
    }
    let skills_path = at(&files.skills);
    let skills_table = read_table(&skills_path)?;
    if skills_table.rows.len() != dims.2 {
        return Err(mismatch(
            &skills_path,
            &labels_path,
            format!("{} occupations vs {} occupation labels", skills_table.rows.len(), dims.2),
        ));
    }
    let skills = skills_table
        .values
        .rows()
        .into_iter()
        .map(|r| SkillVector::new(r.to_vec()))
        .collect::<Result<Vec<_>>>()?;

    let jobs = read_jobs(&at(&files.jobs), dims)?;
    if let Some(p) = config.economy.n_positions {
        if p as u64 != jobs.total() {
            return Err(LfnError::validation(
                "economy.n_positions",
                format!("{p} but {} sums to {}", files.jobs.display(), jobs.total()),
            ));
        }
    }
    let survival = read_survival(&at(&files.survival))?;

    let raw = RawSimilarity::from_inputs(&distances, &io_table, &skills)?;
    let mut bundle = normalize_bundle(&raw)?;
    if let Some(nu_files) = &files.nu {
        let mut nu = NuMatrices::ones(dims.0, dims.1, dims.2);
        for (dim, p) in [
            (Dimension::Region, &nu_files.region),
            (Dimension::Industry, &nu_files.industry),
            (Dimension::Occupation, &nu_files.occupation),
        ] {
            let nu_path = at(p);
            let (m, _): (Array2<f64>, _) = read_matrix(&nu_path)?;
            if m.dim() != nu.get(dim).dim() {
                return Err(mismatch(
                    &nu_path,
                    &labels_path,
                    format!("{}x{} exponents for {} {dim} labels", m.nrows(), m.ncols(), labels.get(dim).len()),
                ));
            }
            *nu.get_mut(dim) = m;
        }
        bundle = bundle.with_nu(nu)?;
    }

    let scenario = Scenario {
        config,
        base_dir,
        labels,
        jobs,
        survival,
        raw,
        bundle,
    };
    scenario.model()?;
    if let Some(shock) = &scenario.config.shock {
        shock.validate(dims.1)?;
    }
    Ok(scenario)
}
