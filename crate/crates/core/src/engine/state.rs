use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matching::{match_and_apply, rank_applicants, Application, VacancyIndex};
use crate::domain::{
    Agent, AgentStatus, CellSampler, EconomyParams, JobDistribution, JobSnapshot, MoverStatus,
    PopulationParams, Position, PositionState, TransitionRecord,
};
use crate::error::{LfnError, Result};
use crate::similarity::SimilarityBundle;

/// Everything a run needs besides its seed and stopping rules.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: EconomyParams,
    pub population: PopulationParams,
    pub jobs: JobDistribution,
    pub bundle: Arc<SimilarityBundle>,
    /// Share of positions left vacant at initialisation.
    pub vacancy_fraction: f64,
    sampler: CellSampler,
}

impl Model {
    pub const DEFAULT_VACANCY_FRACTION: f64 = 800.0 / 36_000.0;

    pub fn new(
        params: EconomyParams,
        population: PopulationParams,
        jobs: JobDistribution,
        bundle: Arc<SimilarityBundle>,
        vacancy_fraction: f64,
    ) -> Result<Self> {
        params.validate()?;
        population.validate(&params.survival)?;
        jobs.validate()?;
        if jobs.total() != params.n_positions as u64 {
            return Err(LfnError::validation(
                "n_positions",
                format!("{} but job counts sum to {}", params.n_positions, jobs.total()),
            ));
        }
        if jobs.dims != bundle.dims() {
            return Err(LfnError::DimensionMismatch {
                first: "job distribution".into(),
                second: "similarity bundle".into(),
                detail: format!("{:?} vs {:?}", jobs.dims, bundle.dims()),
            });
        }
        if !(0.0..1.0).contains(&vacancy_fraction) {
            return Err(LfnError::validation("vacancy_fraction", "must lie in [0, 1)"));
        }
        let sampler = jobs.sampler();
        Ok(Model {
            params,
            population,
            jobs,
            bundle,
            vacancy_fraction,
            sampler,
        })
    }

    /// Same model with a different similarity bundle.
    pub fn with_bundle(&self, bundle: Arc<SimilarityBundle>) -> Result<Self> {
        Model::new(
            self.params.clone(),
            self.population.clone(),
            self.jobs.clone(),
            bundle,
            self.vacancy_fraction,
        )
    }

    /// Same model with a different job distribution.
    pub fn with_jobs(&self, jobs: JobDistribution) -> Result<Self> {
        let mut params = self.params.clone();
        params.n_positions = jobs.total() as usize;
        Model::new(params, self.population.clone(), jobs, self.bundle.clone(), self.vacancy_fraction)
    }

    pub fn sample_job<R: Rng + ?Sized>(&self, rng: &mut R) -> JobSnapshot {
        let k = self.sampler.sample(rng);
        JobSnapshot {
            cell: self.jobs.cell(k),
            wage: self.jobs.draw_wage(k, rng),
        }
    }
}

/// Counts produced by one call to [`SimulationState::step`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub destroyed: usize,
    pub applications: usize,
    pub deaths: usize,
    pub transitions: Vec<TransitionRecord>,
}

#[derive(Clone, Debug)]
pub struct SimulationState {
    pub agents: Vec<Agent>,
    pub positions: Vec<Position>,
    pub step: u64,
    pub transition_log: Vec<TransitionRecord>,
    /// Append every transition to `transition_log`.
    pub record_log: bool,
    rng: ChaCha8Rng,
    next_agent_id: u64,
    next_position_id: u64,
}

impl SimulationState {
    /// Builds positions from the job counts, leaves the configured share
    /// vacant and fills the rest with randomly chosen agents. Agents left over
    /// start unemployed with a last position drawn from the job distribution.
    pub fn initialise(model: &Model, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jobs = &model.jobs;

        let mut positions = Vec::with_capacity(model.params.n_positions);
        for k in 0..jobs.n_cells() {
            let cell = jobs.cell(k);
            for _ in 0..jobs.counts[k] {
                let wage = jobs.draw_wage(k, &mut rng);
                positions.push(Position {
                    id: positions.len() as u64,
                    cell,
                    wage,
                    state: PositionState::Vacant,
                });
            }
        }

        let n_agents = model.params.n_agents;
        let mut agents: Vec<Agent> = (0..n_agents)
            .map(|k| {
                let age = rng.random_range(
                    model.population.initial_age_min..=model.population.initial_age_max,
                );
                let alpha = model.population.alpha.sample(&mut rng);
                let last_position = model.sample_job(&mut rng);
                Agent {
                    id: k as u64,
                    age,
                    alpha,
                    status: AgentStatus::Unemployed,
                    last_position,
                }
            })
            .collect();

        let n_vacant = (model.vacancy_fraction * positions.len() as f64).round() as usize;
        let mut open: Vec<usize> = (0..positions.len()).collect();
        open.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..n_agents).collect();
        order.shuffle(&mut rng);
        for (&slot, &a) in open[n_vacant.min(open.len())..].iter().zip(&order) {
            let p = &mut positions[slot];
            p.state = PositionState::Filled(a);
            agents[a].status = AgentStatus::Employed(slot);
            agents[a].last_position = JobSnapshot {
                cell: p.cell,
                wage: p.wage,
            };
        }

        let next_position_id = positions.len() as u64;
        SimulationState {
            agents,
            positions,
            step: 0,
            transition_log: Vec::new(),
            record_log: true,
            rng,
            next_agent_id: n_agents as u64,
            next_position_id,
        }
    }

    pub fn vacancies(&self) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_vacant())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn employed(&self) -> usize {
        self.agents.iter().filter(|a| a.is_employed()).count()
    }

    /// Checks the two-way agent/position links.
    pub fn check_links(&self) -> Result<()> {
        let broken = |msg: String| Err(LfnError::Domain(msg));
        for (slot, p) in self.positions.iter().enumerate() {
            if let PositionState::Filled(a) = p.state {
                if self.agents.get(a).map(|x| x.status) != Some(AgentStatus::Employed(slot)) {
                    return broken(format!("position {slot} filled by agent {a} who is not there"));
                }
            }
        }
        for (a, agent) in self.agents.iter().enumerate() {
            if let AgentStatus::Employed(slot) = agent.status {
                let p = &self.positions[slot];
                if p.state != PositionState::Filled(a) {
                    return broken(format!("agent {a} holds position {slot} which is not filled by it"));
                }
                if p.cell != agent.last_position.cell || p.wage != agent.last_position.wage {
                    return broken(format!("agent {a} snapshot disagrees with position {slot}"));
                }
            }
        }
        Ok(())
    }

    /// Advances the economy by one step.
    pub fn step(&mut self, model: &Model) -> Result<StepReport> {
        let params = &model.params;
        let rng = &mut self.rng;
        let mut report = StepReport::default();
        self.step += 1;

        // Destruction; occupants keep the destroyed position as their last one.
        let mut destroyed = Vec::new();
        for (slot, p) in self.positions.iter().enumerate() {
            if rng.random_bool(params.lambda) {
                destroyed.push(slot);
                if let PositionState::Filled(a) = p.state {
                    self.agents[a].status = AgentStatus::Unemployed;
                }
            }
        }
        report.destroyed = destroyed.len();

        // Creation of the same number of vacant positions.
        for &slot in &destroyed {
            let job = model.sample_job(rng);
            self.positions[slot] = Position {
                id: self.next_position_id,
                cell: job.cell,
                wage: job.wage,
                state: PositionState::Vacant,
            };
            self.next_position_id += 1;
        }

        // Aging, activation and applications.
        let vacancies: Vec<usize> = self
            .positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_vacant())
            .map(|(k, _)| k)
            .collect();
        let mut applications: Vec<Vec<Application>> = vec![Vec::new(); self.positions.len()];
        {
            let mut index = VacancyIndex::new(&model.bundle, &self.positions, &vacancies);
            let mut submission = 0;
            for (a, agent) in self.agents.iter_mut().enumerate() {
                agent.age += params.age_increment;
                let theta = if agent.is_employed() { params.theta_e } else { params.theta_ue };
                if !rng.random_bool(theta) {
                    continue;
                }
                if let Some((slot, score)) =
                    match_and_apply(agent, &mut index, &self.positions, params.gamma, rng)?
                {
                    applications[slot].push(Application {
                        agent: a,
                        score,
                        submission,
                    });
                    submission += 1;
                }
            }
            report.applications = submission;
        }

        // Hiring: vacancies in random order take their best applicant.
        let mut order = vacancies;
        order.shuffle(rng);
        for slot in order {
            let Some(best) = rank_applicants(&applications[slot]) else {
                continue;
            };
            let a = best.agent;
            let agent = &mut self.agents[a];
            let status = match agent.status {
                AgentStatus::Employed(old) => {
                    self.positions[old].state = PositionState::Vacant;
                    MoverStatus::Employed
                }
                AgentStatus::Unemployed => MoverStatus::Unemployed,
            };
            let target = &mut self.positions[slot];
            target.state = PositionState::Filled(a);
            let record = TransitionRecord {
                step: self.step,
                from: agent.last_position.cell,
                to: target.cell,
                from_wage: agent.last_position.wage,
                to_wage: target.wage,
                status,
            };
            agent.status = AgentStatus::Employed(slot);
            agent.last_position = JobSnapshot {
                cell: target.cell,
                wage: target.wage,
            };
            report.transitions.push(record);
        }

        // Survival trials; the dead are replaced by new unemployed entrants.
        for a in 0..self.agents.len() {
            let survive = params.survival.survival(self.agents[a].age);
            if rng.random_bool(survive) {
                continue;
            }
            if let AgentStatus::Employed(slot) = self.agents[a].status {
                self.positions[slot].state = PositionState::Vacant;
            }
            let alpha = model.population.alpha.sample(rng);
            let last_position = model.sample_job(rng);
            self.agents[a] = Agent {
                id: self.next_agent_id,
                age: params.entry_age,
                alpha,
                status: AgentStatus::Unemployed,
                last_position,
            };
            self.next_agent_id += 1;
            report.deaths += 1;
        }

        if self.record_log {
            self.transition_log.extend_from_slice(&report.transitions);
        }
        Ok(report)
    }
}
