//! Core value types shared by the engine, calibrator and shock harness.

use ndarray::Array2;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LfnError, Result};

/// A (region, industry, occupation) coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub region: usize,
    pub industry: usize,
    pub occupation: usize,
}

impl Cell {
    pub fn new(region: usize, industry: usize, occupation: usize) -> Self {
        Cell {
            region,
            industry,
            occupation,
        }
    }

    pub fn get(&self, dim: Dimension) -> usize {
        match dim {
            Dimension::Region => self.region,
            Dimension::Industry => self.industry,
            Dimension::Occupation => self.occupation,
        }
    }
}

/// One of the three category axes a labour flow network is built over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Region,
    Industry,
    Occupation,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Region, Dimension::Industry, Dimension::Occupation];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Region => "region",
            Dimension::Industry => "industry",
            Dimension::Occupation => "occupation",
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionState {
    Vacant,
    /// Slot index of the occupying agent.
    Filled(usize),
}

/// An exogenous job slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Position {
    pub id: u64,
    pub cell: Cell,
    pub wage: f64,
    pub state: PositionState,
}

impl Position {
    pub fn is_vacant(&self) -> bool {
        self.state == PositionState::Vacant
    }
}

/// Attributes of the position an agent currently holds or most recently held.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobSnapshot {
    pub cell: Cell,
    pub wage: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentStatus {
    /// Slot index of the held position.
    Employed(usize),
    Unemployed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub id: u64,
    pub age: u32,
    pub alpha: f64,
    pub status: AgentStatus,
    /// Mirrors the held position while employed; frozen at separation otherwise.
    pub last_position: JobSnapshot,
}

impl Agent {
    pub fn is_employed(&self) -> bool {
        matches!(self.status, AgentStatus::Employed(_))
    }

    pub fn position_slot(&self) -> Option<usize> {
        match self.status {
            AgentStatus::Employed(slot) => Some(slot),
            AgentStatus::Unemployed => None,
        }
    }
}

/// Age-indexed survival probabilities. Ages past the table end survive with
/// probability 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    pub first_age: u32,
    pub probabilities: Vec<f64>,
}

impl SurvivalTable {
    pub fn new(first_age: u32, probabilities: Vec<f64>) -> Result<Self> {
        let table = SurvivalTable {
            first_age,
            probabilities,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn max_age(&self) -> u32 {
        self.first_age + self.probabilities.len() as u32 - 1
    }

    pub fn survival(&self, age: u32) -> f64 {
        if age < self.first_age {
            return self.probabilities[0];
        }
        self.probabilities
            .get((age - self.first_age) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.is_empty() {
            return Err(LfnError::validation("survival", "table is empty"));
        }
        if let Some((k, p)) = self
            .probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(LfnError::validation(
                "survival",
                format!("probability {p} at age {} outside [0, 1]", self.first_age + k as u32),
            ));
        }
        if *self.probabilities.last().unwrap() != 0.0 {
            return Err(LfnError::validation(
                "survival",
                format!("survival at maximum age {} must be 0", self.max_age()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EconomyParams {
    pub n_agents: usize,
    pub n_positions: usize,
    /// Job creation/destruction rate.
    pub lambda: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Activation rate of employed agents.
    pub theta_e: f64,
    /// Activation rate of unemployed agents.
    pub theta_ue: f64,
    pub survival: SurvivalTable,
    pub entry_age: u32,
    /// Years added to every agent's age per step.
    pub age_increment: u32,
}

impl EconomyParams {
    pub const DEFAULT_LAMBDA: f64 = 0.0463;
    pub const DEFAULT_GAMMA: f64 = 0.9662;
    pub const DEFAULT_ENTRY_AGE: u32 = 18;

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(LfnError::validation(name, format!("{v} outside [0, 1]")))
            }
        };
        unit("lambda", self.lambda)?;
        unit("theta_e", self.theta_e)?;
        unit("theta_ue", self.theta_ue)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LfnError::validation("gamma", format!("{} outside (0, 1)", self.gamma)));
        }
        if self.n_agents == 0 {
            return Err(LfnError::validation("n_agents", "must be positive"));
        }
        if self.n_positions == 0 {
            return Err(LfnError::validation("n_positions", "must be positive"));
        }
        self.survival.validate()?;
        if self.entry_age > self.survival.max_age() || self.entry_age < self.survival.first_age {
            return Err(LfnError::validation(
                "entry_age",
                format!(
                    "{} not covered by survival table ({}..={})",
                    self.entry_age,
                    self.survival.first_age,
                    self.survival.max_age()
                ),
            ));
        }
        Ok(())
    }
}

/// Beta(a, b) draw scaled into `(lo, hi)`, used for consumption preferences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaDistribution {
    pub a: f64,
    pub b: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for AlphaDistribution {
    fn default() -> Self {
        AlphaDistribution {
            a: 2.0,
            b: 2.0,
            lo: 0.05,
            hi: 0.95,
        }
    }
}

impl AlphaDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(LfnError::validation("population.alpha", "beta shape parameters must be positive"));
        }
        if !(0.0 < self.lo && self.lo < self.hi && self.hi < 1.0) {
            return Err(LfnError::validation("population.alpha", "need 0 < lo < hi < 1"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let beta = rand_distr::Beta::new(self.a, self.b).expect("validated beta parameters");
        self.lo + (self.hi - self.lo) * beta.sample(rng)
    }
}

/// Attributes drawn for initial and replacement agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationParams {
    pub alpha: AlphaDistribution,
    /// Inclusive age range of the initial population.
    pub initial_age_min: u32,
    pub initial_age_max: u32,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams {
            alpha: AlphaDistribution::default(),
            initial_age_min: 18,
            initial_age_max: 65,
        }
    }
}

impl PopulationParams {
    pub fn validate(&self, survival: &SurvivalTable) -> Result<()> {
        self.alpha.validate()?;
        if self.initial_age_min > self.initial_age_max {
            return Err(LfnError::validation("population.initial_age_min", "exceeds initial_age_max"));
        }
        if self.initial_age_min < survival.first_age || self.initial_age_max > survival.max_age() {
            return Err(LfnError::validation(
                "population",
                "initial ages not covered by the survival table",
            ));
        }
        Ok(())
    }
}

/// Position counts and wage moments per (region, industry, occupation) cell,
/// stored flat in region-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct JobDistribution {
    pub dims: (usize, usize, usize),
    pub counts: Vec<u64>,
    pub wage_mean: Vec<f64>,
    pub wage_std: Vec<f64>,
}

impl JobDistribution {
    pub fn new(
        dims: (usize, usize, usize),
        counts: Vec<u64>,
        wage_mean: Vec<f64>,
        wage_std: Vec<f64>,
    ) -> Result<Self> {
        let jobs = JobDistribution {
            dims,
            counts,
            wage_mean,
            wage_std,
        };
        jobs.validate()?;
        Ok(jobs)
    }

    pub fn n_cells(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn index(&self, cell: Cell) -> usize {
        (cell.region * self.dims.1 + cell.industry) * self.dims.2 + cell.occupation
    }

    pub fn cell(&self, index: usize) -> Cell {
        let occupation = index % self.dims.2;
        let rest = index / self.dims.2;
        Cell::new(rest / self.dims.1, rest % self.dims.1, occupation)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn industry_total(&self, industry: usize) -> u64 {
        (0..self.n_cells())
            .filter(|&k| self.cell(k).industry == industry)
            .map(|k| self.counts[k])
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        if self.dims.0 == 0 || self.dims.1 == 0 || self.dims.2 == 0 {
            return Err(LfnError::validation("jobs", "every dimension must be non-empty"));
        }
        for (name, len) in [
            ("jobs.counts", self.counts.len()),
            ("jobs.wage_mean", self.wage_mean.len()),
            ("jobs.wage_std", self.wage_std.len()),
        ] {
            if len != n {
                return Err(LfnError::validation(name, format!("expected {n} cells, got {len}")));
            }
        }
        for k in 0..n {
            if self.counts[k] > 0 && !(self.wage_mean[k] > 0.0) {
                return Err(LfnError::validation(
                    "jobs.wage_mean",
                    format!("non-positive mean wage in occupied cell {:?}", self.cell(k)),
                ));
            }
            if !(self.wage_std[k] >= 0.0) {
                return Err(LfnError::validation(
                    "jobs.wage_std",
                    format!("negative standard deviation in cell {:?}", self.cell(k)),
                ));
            }
        }
        if self.total() == 0 {
            return Err(LfnError::validation("jobs.counts", "no positions"));
        }
        Ok(())
    }

    /// Same proportions and wages with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> JobDistribution {
        JobDistribution {
            counts: self.counts.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    pub fn sampler(&self) -> CellSampler {
        CellSampler {
            weights: WeightedIndex::new(self.counts.iter().map(|&c| c as f64))
                .expect("validated job distribution has positive total"),
        }
    }

    /// Normal wage draw for a cell, redrawn below 1% of the mean and clamped
    /// there after 100 redraws.
    pub fn draw_wage<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> f64 {
        let mean = self.wage_mean[index];
        let std = self.wage_std[index];
        let floor = 0.01 * mean;
        if std == 0.0 {
            return mean;
        }
        let normal = Normal::new(mean, std).expect("finite wage moments");
        for _ in 0..=100 {
            let w = normal.sample(rng);
            if w >= floor {
                return w;
            }
        }
        floor
    }
}

/// Draws cell indices with probability proportional to job counts.
#[derive(Clone, Debug)]
pub struct CellSampler {
    weights: WeightedIndex<f64>,
}

impl CellSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.weights.sample(rng)
    }
}

/// Square matrix of transition densities. Entries sum to one unless no
/// transitions were recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowDensityMatrix(pub Array2<f64>);

impl FlowDensityMatrix {
    pub fn zeros(n: usize) -> Self {
        FlowDensityMatrix(Array2::zeros((n, n)))
    }

    /// Normalises a non-negative count matrix.
    pub fn from_counts(counts: &Array2<f64>) -> Self {
        let total: f64 = counts.sum();
        if total == 0.0 {
            FlowDensityMatrix(Array2::zeros(counts.raw_dim()))
        } else {
            FlowDensityMatrix(counts / total)
        }
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.0.dim();
        if r != c {
            return Err(LfnError::ShapeMismatch {
                expected: (r, r),
                actual: (r, c),
            });
        }
        if self.0.iter().any(|v| !(*v >= 0.0)) {
            return Err(LfnError::Domain("flow densities must be non-negative".into()));
        }
        let total = self.0.sum();
        if total != 0.0 && (total - 1.0).abs() > 1e-9 {
            return Err(LfnError::Domain(format!("flow densities sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Region, industry and occupation flow densities from one source.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTriple {
    pub region: FlowDensityMatrix,
    pub industry: FlowDensityMatrix,
    pub occupation: FlowDensityMatrix,
}

impl FlowTriple {
    pub fn get(&self, dim: Dimension) -> &FlowDensityMatrix {
        match dim {
            Dimension::Region => &self.region,
            Dimension::Industry => &self.industry,
            Dimension::Occupation => &self.occupation,
        }
    }

    /// Elementwise mean of several triples.
    pub fn mean(triples: &[FlowTriple]) -> Result<FlowTriple> {
        let first = triples
            .first()
            .ok_or_else(|| LfnError::Degenerate("mean of zero flow triples".into()))?;
        let avg = |dim: Dimension| -> Result<FlowDensityMatrix> {
            let mut acc = first.get(dim).0.clone();
            for t in &triples[1..] {
                let m = &t.get(dim).0;
                if m.dim() != acc.dim() {
                    return Err(LfnError::ShapeMismatch {
                        expected: acc.dim(),
                        actual: m.dim(),
                    });
                }
                acc += m;
            }
            Ok(FlowDensityMatrix(acc / triples.len() as f64))
        };
        Ok(FlowTriple {
            region: avg(Dimension::Region)?,
            industry: avg(Dimension::Industry)?,
            occupation: avg(Dimension::Occupation)?,
        })
    }
}

/// Whether the mover held a position when hired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoverStatus {
    Employed,
    Unemployed,
}

impl MoverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MoverStatus::Employed => "employed",
            MoverStatus::Unemployed => "unemployed",
        }
    }
}

/// One realised move from the mover's current (or last) position to a new one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRecord {
    pub step: u64,
    pub from: Cell,
    pub to: Cell,
    pub from_wage: f64,
    pub to_wage: f64,
    pub status: MoverStatus,
}

/// Optimal lifetime utility of an agent aged `age` earning `wage` per step,
/// from the closed-form solution of the leisure-consumption problem.
pub fn optimal_utility(age: u32, alpha: f64, wage: f64, gamma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LfnError::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(wage > 0.0) || !wage.is_finite() {
        return Err(LfnError::Domain(format!("wage {wage} must be positive")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(LfnError::Domain(format!("gamma {gamma} outside (0, 1)")));
    }
    let discount = gamma.powf(age as f64) / (1.0 - gamma);
    Ok(discount * wage * alpha.powf(alpha) * ((1.0 - alpha) / wage).powf(1.0 - alpha))
}

/// Whether `agent` gains utility by moving to a position paying
/// `candidate_wage` rather than staying on its current (or last) wage.
pub fn prefers_switch(agent: &Agent, candidate_wage: f64, gamma: f64) -> Result<bool> {
    let current = optimal_utility(agent.age, agent.alpha, agent.last_position.wage, gamma)?;
    let candidate = optimal_utility(agent.age, agent.alpha, candidate_wage, gamma)?;
    Ok(candidate > current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force maximiser of the discounted utility over a leisure grid
    /// with consumption pinned by the budget constraint.
    fn grid_utility(age: u32, alpha: f64, wage: f64, gamma: f64) -> f64 {
        let discount = gamma.powi(age as i32) / (1.0 - gamma);
        (0..=10_000)
            .map(|k| {
                let leisure = k as f64 / 10_000.0;
                let consumption = (1.0 - leisure) * wage;
                discount * consumption.powf(alpha) * leisure.powf(1.0 - alpha)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn agent(alpha: f64, wage: f64) -> Agent {
        Agent {
            id: 0,
            age: 30,
            alpha,
            status: AgentStatus::Employed(0),
            last_position: JobSnapshot {
                cell: Cell::new(0, 0, 0),
                wage,
            },
        }
    }

    #[test]
    fn utility_reference_values() {
        let u1 = optimal_utility(0, 0.5, 1.0, 0.9662).unwrap();
        assert_relative_eq!(u1, 0.5 / 0.0338, max_relative = 1e-12);
        assert_relative_eq!(u1, 14.7929, epsilon = 1e-4);
        assert_relative_eq!(u1, grid_utility(0, 0.5, 1.0, 0.9662), max_relative = 1e-4);
        let u4 = optimal_utility(0, 0.5, 4.0, 0.9662).unwrap();
        assert_relative_eq!(u4, 2.0 * u1, max_relative = 1e-12);
        assert_relative_eq!(u4, grid_utility(0, 0.5, 4.0, 0.9662), max_relative = 1e-4);
    }

    #[test]
    fn utility_rejects_bad_domain() {
        assert!(optimal_utility(0, 0.0, 1.0, 0.9).is_err());
        assert!(optimal_utility(0, 1.0, 1.0, 0.9).is_err());
        assert!(optimal_utility(0, 0.5, 0.0, 0.9).is_err());
        assert!(optimal_utility(0, 0.5, -3.0, 0.9).is_err());
        assert!(optimal_utility(0, 0.5, 1.0, 1.0).is_err());
        assert!(prefers_switch(&agent(0.5, 10.0), 0.0, 0.9).is_err());
    }

    #[test]
    fn switch_requires_strictly_higher_wage() {
        for k in 1..100 {
            let alpha = k as f64 / 100.0;
            let a = agent(alpha, 25_000.0);
            assert!(!prefers_switch(&a, 25_000.0, 0.9662).unwrap());
            assert!(prefers_switch(&a, 50_000.0, 0.9662).unwrap());
            assert!(!prefers_switch(&a, 12_500.0, 0.9662).unwrap());
        }
    }

    #[test]
    fn survival_table_lookup() {
        let t = SurvivalTable::new(18, vec![0.99, 0.98, 0.0]).unwrap();
        assert_eq!(t.max_age(), 20);
        assert_eq!(t.survival(18), 0.99);
        assert_eq!(t.survival(20), 0.0);
        assert_eq!(t.survival(60), 0.0);
        assert!(SurvivalTable::new(18, vec![0.99, 0.5]).is_err());
    }

    #[test]
    fn truncated_wage_draws_stay_above_floor() {
        let jobs = JobDistribution::new((1, 1, 1), vec![1], vec![100.0], vec![500.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(jobs.draw_wage(0, &mut rng) >= 1.0);
        }
        let fixed = JobDistribution::new((1, 1, 1), vec![1], vec![100.0], vec![0.0]).unwrap();
        assert_eq!(fixed.draw_wage(0, &mut rng), 100.0);
    }

    #[test]
    fn cell_index_round_trip() {
        let jobs = JobDistribution::new((3, 4, 5), vec![1; 60], vec![1.0; 60], vec![0.0; 60]).unwrap();
        for k in 0..60 {
            assert_eq!(jobs.index(jobs.cell(k)), k);
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_grid_search(
            age in 0u32..80,
            alpha in 0.01f64..0.99,
            wage in 0.1f64..1000.0,
        ) {
            let closed = optimal_utility(age, alpha, wage, 0.9662).unwrap();
            let grid = grid_utility(age, alpha, wage, 0.9662);
            prop_assert!((closed - grid).abs() / closed < 1e-4);
        }

        #[test]
        fn utility_increasing_in_wage(
            alpha in 0.01f64..0.99,
            wage in 0.1f64..1000.0,
            bump in 1e-3f64..100.0,
        ) {
            let lo = optimal_utility(40, alpha, wage, 0.9662).unwrap();
            let hi = optimal_utility(40, alpha, wage + bump, 0.9662).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn switch_iff_higher_wage(
            alpha in 0.001f64..0.999,
            current in 1.0f64..1e5,
            candidate in 1.0f64..1e5,
        ) {
            let a = agent(alpha, current);
            prop_assert_eq!(prefers_switch(&a, candidate, 0.9662).unwrap(), candidate > current);
        }
    }
}
