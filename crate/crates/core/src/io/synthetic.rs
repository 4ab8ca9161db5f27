//! Deterministic synthetic input sets standing in for restricted survey data.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::config::{save_scenario, EconomyConfig, InputFiles, NodeMetadata, ScenarioConfig};
use super::tables::{write_jobs, write_matrix, write_survival, write_table};
use crate::domain::{EconomyParams, JobDistribution, PopulationParams, SurvivalTable};
use crate::engine::Model;
use crate::error::{LfnError, Result};
use crate::flows::SteadyStateParams;
use crate::similarity::{normalize_bundle, RawSimilarity, SimilarityBundle, SkillVector};

pub const DEFAULT_THETA_E: f64 = 0.10;
pub const DEFAULT_THETA_UE: f64 = 0.50;
pub const SKILL_FEATURES: usize = 12;
/// Wage standard deviation as a share of the cell mean.
pub const WAGE_STD_SHARE: f64 = 0.25;
pub const MAX_AGE: u32 = 110;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dims: (usize, usize, usize),
    pub n_agents: usize,
    pub n_positions: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 21 regions, 21 industries and 9 occupations with 3500 agents and 3600
    /// positions.
    pub fn full_scale(seed: u64) -> Self {
        SyntheticSpec {
            dims: (21, 21, 9),
            n_agents: 3500,
            n_positions: 3600,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, i, o) = self.dims;
        if r < 2 || i < 2 || o < 2 {
            return Err(LfnError::validation("dims", "every dimension needs at least 2 categories"));
        }
        if self.n_agents == 0 || self.n_positions == 0 {
            return Err(LfnError::validation("n_agents", "agents and positions must be positive"));
        }
        Ok(())
    }
}

/// Every input of a scenario, in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub labels: NodeMetadata,
    pub distances: Array2<f64>,
    pub io_table: Array2<f64>,
    /// One row per occupation.
    pub skills: Array2<f64>,
    pub jobs: JobDistribution,
    pub survival: SurvivalTable,
    pub population: PopulationParams,
    pub theta_e: f64,
    pub theta_ue: f64,
}

/// Logistic mortality reaching certainty at [`MAX_AGE`].
pub fn logistic_survival(first_age: u32) -> SurvivalTable {
    let probabilities = (first_age..=MAX_AGE)
        .map(|age| {
            if age == MAX_AGE {
                0.0
            } else {
                let death = 1.0 / (1.0 + (-(age as f64 - 88.0) / 5.0).exp());
                1.0 - death
            }
        })
        .collect();
    SurvivalTable::new(first_age, probabilities).expect("logistic table is valid")
}

pub fn generate_synthetic(spec: SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n_r, n_i, n_o) = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let points: Vec<(f64, f64)> = (0..n_r)
        .map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
        .collect();
    let distances = Array2::from_shape_fn((n_r, n_r), |(a, b)| {
        let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        if a == b {
            0.0
        } else {
            (dx * dx + dy * dy).sqrt()
        }
    });

    // Own-industry purchases dominate, as in real input-output tables.
    let flows = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let io_table = Array2::from_shape_fn((n_i, n_i), |(a, b)| {
        let v: f64 = flows.sample(&mut rng);
        if a == b {
            v + 5.0
        } else {
            v
        }
    });

    // Squared uniforms give skill profiles with distinct emphases.
    let skills = Array2::from_shape_fn((n_o, SKILL_FEATURES), |_| {
        let u: f64 = rng.random();
        u * u + 1e-3
    });

    // Symmetric Dirichlet via normalised gamma draws.
    let dirichlet = |n: usize, conc: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let gamma = Gamma::new(conc, 1.0).expect("valid concentration");
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|g| g / total).collect()
    };
    let region_w = dirichlet(n_r, 3.0, &mut rng);
    let industry_w = dirichlet(n_i, 3.0, &mut rng);
    let occupation_w: Vec<Vec<f64>> = (0..n_i).map(|_| dirichlet(n_o, 1.0, &mut rng)).collect();
    let n_cells = n_r * n_i * n_o;
    let mut probs = Vec::with_capacity(n_cells);
    for r in 0..n_r {
        for i in 0..n_i {
            for o in 0..n_o {
                probs.push(region_w[r] * industry_w[i] * occupation_w[i][o]);
            }
        }
    }
    let counts = multinomial(spec.n_positions as u64, &probs, &mut rng);

    let industry_effect: Vec<f64> = (0..n_i).map(|_| Normal::new(0.0, 0.25).unwrap().sample(&mut rng)).collect();
    let occupation_effect: Vec<f64> = (0..n_o).map(|_| Normal::new(0.0, 0.35).unwrap().sample(&mut rng)).collect();
    let region_effect: Vec<f64> = (0..n_r).map(|_| Normal::new(0.0, 0.1).unwrap().sample(&mut rng)).collect();
    let cell_noise = Normal::new(0.0, 0.1).expect("valid normal");
    let mut wage_mean = Vec::with_capacity(n_cells);
    for r in 0..n_r {
        for i in 0..n_i {
            for o in 0..n_o {
                let log_mean = 25_000f64.ln()
                    + region_effect[r]
                    + industry_effect[i]
                    + occupation_effect[o]
                    + cell_noise.sample(&mut rng);
                wage_mean.push(log_mean.exp().round());
            }
        }
    }
    let wage_std = wage_mean.iter().map(|m| (m * WAGE_STD_SHARE).round()).collect();
    let jobs = JobDistribution::new(spec.dims, counts, wage_mean, wage_std)?;

    let labels = NodeMetadata {
        region: (0..n_r).map(|k| format!("R{k:02}")).collect(),
        industry: (0..n_i).map(|k| format!("I{k:02}")).collect(),
        occupation: (0..n_o).map(|k| format!("O{k:02}")).collect(),
    };

    Ok(SyntheticData {
        spec,
        labels,
        distances,
        io_table,
        skills,
        jobs,
        survival: logistic_survival(EconomyParams::DEFAULT_ENTRY_AGE),
        population: PopulationParams::default(),
        theta_e: DEFAULT_THETA_E,
        theta_ue: DEFAULT_THETA_UE,
    })
}

/// Sequential binomial draws; exact multinomial sampling.
fn multinomial(n: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut left = n;
    let mut mass = total;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        if left == 0 || mass <= 0.0 {
            out.push(0);
            continue;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let k = rand_distr::Binomial::new(left, q).expect("valid binomial").sample(rng);
        out.push(k);
        left -= k;
        mass -= p;
    }
    if left > 0 {
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1);
        out[last] += left;
    }
    out
}

impl SyntheticData {
    pub fn raw_similarity(&self) -> Result<RawSimilarity> {
        let skills = self
            .skills
            .rows()
            .into_iter()
            .map(|r| SkillVector::new(r.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        RawSimilarity::from_inputs(&self.distances, &self.io_table, &skills)
    }

    /// Normalised similarities with unit exponents.
    pub fn bundle(&self) -> Result<SimilarityBundle> {
        normalize_bundle(&self.raw_similarity()?)
    }

    pub fn economy(&self) -> EconomyParams {
        EconomyParams {
            n_agents: self.spec.n_agents,
            n_positions: self.jobs.total() as usize,
            lambda: EconomyParams::DEFAULT_LAMBDA,
            gamma: EconomyParams::DEFAULT_GAMMA,
            theta_e: self.theta_e,
            theta_ue: self.theta_ue,
            survival: self.survival.clone(),
            entry_age: EconomyParams::DEFAULT_ENTRY_AGE,
            age_increment: 1,
        }
    }

    /// Model with default economy settings and the given bundle.
    pub fn model_with(&self, bundle: SimilarityBundle) -> Result<Model> {
        Model::new(
            self.economy(),
            self.population.clone(),
            self.jobs.clone(),
            Arc::new(bundle),
            Model::DEFAULT_VACANCY_FRACTION,
        )
    }

    pub fn model(&self) -> Result<Model> {
        self.model_with(self.bundle()?)
    }

    /// Scenario referencing the files written by [`SyntheticData::write`].
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            economy: EconomyConfig {
                n_agents: self.spec.n_agents,
                n_positions: Some(self.jobs.total() as usize),
                lambda: EconomyParams::DEFAULT_LAMBDA,
                gamma: EconomyParams::DEFAULT_GAMMA,
                theta_e: self.theta_e,
                theta_ue: self.theta_ue,
                entry_age: EconomyParams::DEFAULT_ENTRY_AGE,
            },
            population: self.population.clone(),
            files: InputFiles {
                jobs: "jobs.csv".into(),
                distances: "distances.csv".into(),
                io_table: "io_table.csv".into(),
                skills: "skills.csv".into(),
                survival: "survival.csv".into(),
                labels: "labels.json".into(),
                nu: None,
            },
            steady_state: SteadyStateParams::default(),
            calibration: None,
            shock: None,
            seeds: vec![1, 2, 3, 4, 5],
            age_increment: 1,
            vacancy_fraction: Model::DEFAULT_VACANCY_FRACTION,
            collection_steps: 200,
            include_unemployed: true,
            output_dir: "results".into(),
        }
    }

    /// Writes every input plus `scenario.json` into `dir` and returns the
    /// written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| LfnError::io(dir, e))?;
        let p = |name: &str| dir.join(name);
        write_matrix(&p("distances.csv"), &self.distances, Some(&self.labels.region))?;
        write_matrix(&p("io_table.csv"), &self.io_table, Some(&self.labels.industry))?;
        let features: Vec<String> = (0..self.skills.ncols()).map(|k| format!("skill_{k:02}")).collect();
        write_table(&p("skills.csv"), "occupation", &self.labels.occupation, &features, &self.skills)?;
        write_jobs(&p("jobs.csv"), &self.jobs)?;
        write_survival(&p("survival.csv"), &self.survival)?;
        let labels = serde_json::to_string_pretty(&self.labels).expect("labels serialise");
        fs::write(p("labels.json"), labels + "\n").map_err(|e| LfnError::io(p("labels.json"), e))?;
        save_scenario(&self.scenario(), &p("scenario.json"))?;
        Ok([
            "distances.csv",
            "io_table.csv",
            "skills.csv",
            "jobs.csv",
            "survival.csv",
            "labels.json",
            "scenario.json",
        ]
        .iter()
        .map(|n| p(n))
        .collect())
    }
}
