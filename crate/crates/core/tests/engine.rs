mod common;

use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;

use lfn::engine::{run, Model, RunConfig, SimulationState};
use lfn::flows::SteadyStateParams;
use lfn::metrics::pearson;
use lfn::similarity::NuMatrices;
use lfn::{
    AgentStatus, Dimension, EconomyParams, JobDistribution, MoverStatus, PopulationParams, PositionState,
    SimilarityBundle, SurvivalTable,
};

/// Survival of 1 up to age 300.
fn immortal() -> SurvivalTable {
    let mut p = vec![1.0; 300 - 18];
    p.push(0.0);
    SurvivalTable::new(18, p).unwrap()
}

fn uniform_bundle(n: usize) -> SimilarityBundle {
    let ones = Array2::from_elem((n, n), 1.0);
    SimilarityBundle::new(ones.clone(), ones.clone(), ones, NuMatrices::ones(n, n, n)).unwrap()
}

fn uniform_model(n: usize, per_cell: u64, n_agents: usize, lambda: f64, theta: (f64, f64), survival: SurvivalTable) -> Model {
    let cells = n * n * n;
    let jobs = JobDistribution::new((n, n, n), vec![per_cell; cells], vec![100.0; cells], vec![20.0; cells]).unwrap();
    let params = EconomyParams {
        n_agents,
        n_positions: jobs.total() as usize,
        lambda,
        gamma: EconomyParams::DEFAULT_GAMMA,
        theta_e: theta.0,
        theta_ue: theta.1,
        survival,
        entry_age: 18,
        age_increment: 1,
    };
    Model::new(params, PopulationParams::default(), jobs, Arc::new(uniform_bundle(n)), Model::DEFAULT_VACANCY_FRACTION)
        .unwrap()
}

#[test]
fn frozen_economy_only_ages() {
    let model = uniform_model(2, 10, 70, 0.0, (0.0, 0.0), immortal());
    let mut state = SimulationState::initialise(&model, 3);
    let before = state.clone();
    let report = state.step(&model).unwrap();
    assert_eq!(report.destroyed, 0);
    assert_eq!(report.deaths, 0);
    assert!(report.transitions.is_empty());
    assert_eq!(state.positions, before.positions);
    for (a, b) in state.agents.iter().zip(&before.agents) {
        assert_eq!(a.age, b.age + 1);
        assert_eq!((a.id, a.alpha, a.status, a.last_position), (b.id, b.alpha, b.status, b.last_position));
    }
}

#[test]
fn certain_destruction_unemploys_everyone() {
    let model = uniform_model(2, 10, 70, 1.0, (0.0, 0.0), immortal());
    let mut state = SimulationState::initialise(&model, 4);
    let before = state.clone();
    assert!(before.employed() > 0);
    let report = state.step(&model).unwrap();
    assert_eq!(report.destroyed, 80);
    assert_eq!(state.employed(), 0);
    assert!(state.positions.iter().all(|p| p.is_vacant()));
    // fresh ids for every recreated position
    assert!(state.positions.iter().zip(&before.positions).all(|(a, b)| a.id != b.id));
    for (a, b) in state.agents.iter().zip(&before.agents) {
        if let AgentStatus::Employed(_) = b.status {
            assert_eq!(a.last_position, b.last_position);
        }
    }
}

#[test]
fn mean_destruction_matches_binomial() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let mut state = SimulationState::initialise(&model, 11);
    state.record_log = false;
    let steps = 1000;
    let total: usize = (0..steps).map(|_| state.step(&model).unwrap().destroyed).sum();
    let p = model.params.n_positions as f64;
    let lambda = model.params.lambda;
    let mean = total as f64 / steps as f64;
    let se = (p * lambda * (1.0 - lambda) / steps as f64).sqrt();
    assert!((mean - 166.68).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn employed_movers_always_gain_wage() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let mut state = SimulationState::initialise(&model, 2);
    for _ in 0..100 {
        state.step(&model).unwrap();
    }
    let log = &state.transition_log;
    assert!(log.iter().any(|t| t.status == MoverStatus::Unemployed));
    let employed: Vec<_> = log.iter().filter(|t| t.status == MoverStatus::Employed).collect();
    assert!(!employed.is_empty());
    assert!(employed.iter().all(|t| t.to_wage > t.from_wage));
}

#[test]
fn replay_is_bit_identical() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let mut config = RunConfig::new(21, SteadyStateParams::default(), 50);
    config.record_log = true;
    let a = run(&model, &config).unwrap();
    let b = run(&model, &config).unwrap();
    assert!(!a.state.transition_log.is_empty());
    assert_eq!(a.state.transition_log, b.state.transition_log);
    assert_eq!(a.xi_history, b.xi_history);
    config.seed = 22;
    let c = run(&model, &config).unwrap();
    assert_ne!(a.state.transition_log, c.state.transition_log);
}

#[test]
fn runs_with_different_seeds_agree_on_flows() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let a = run(&model, &RunConfig::new(1, SteadyStateParams::default(), 200)).unwrap();
    let b = run(&model, &RunConfig::new(2, SteadyStateParams::default(), 200)).unwrap();
    for dim in Dimension::ALL {
        let r = pearson(&a.flows.get(dim).0, &b.flows.get(dim).0).unwrap();
        assert!(r >= 0.9, "{dim}: {r}");
    }
}

#[test]
fn non_convergence_is_reported() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let params = SteadyStateParams {
        epsilon: 1e-15,
        max_steps: 60,
        ..SteadyStateParams::default()
    };
    let err = run(&model, &RunConfig::new(1, params, 10)).unwrap_err();
    assert!(matches!(err, lfn::LfnError::NonConvergence { max_steps: 60 }));
}

#[test]
fn fixed_burn_in_skips_detection() {
    let data = common::fixture();
    let model = data.model().unwrap();
    let mut config = RunConfig::new(1, SteadyStateParams::default(), 5);
    config.burn_in = Some(7);
    let out = run(&model, &config).unwrap();
    assert_eq!(out.steady_state_step, 7);
    assert_eq!(out.state.step, 12);
    assert!(out.xi_history.is_empty());
}

#[test]
fn uniform_similarity_gives_symmetric_flows() {
    let model = uniform_model(3, 40, 1050, EconomyParams::DEFAULT_LAMBDA, (0.1, 0.5), immortal());
    let out = run(&model, &RunConfig::new(5, SteadyStateParams::default(), 400)).unwrap();
    let total = out.flow_counts.total();
    for dim in Dimension::ALL {
        let m = &out.flows.get(dim).0;
        let p = 1.0 / 9.0;
        let se = (p * (1.0 - p) / total).sqrt();
        for v in m.iter() {
            assert!((v - p).abs() < 6.0 * se, "{dim}: {v} vs {p} (se {se})");
        }
    }
}

fn small_model(lambda: f64, theta_e: f64, theta_ue: f64, n_agents: usize) -> Model {
    let dims = (2, 3, 2);
    let cells = 12;
    let counts: Vec<u64> = (0..cells as u64).map(|k| 1 + k % 4).collect();
    let means: Vec<f64> = (0..cells).map(|k| 50.0 + 10.0 * k as f64).collect();
    let jobs = JobDistribution::new(dims, counts, means, vec![15.0; cells]).unwrap();
    let base = |n: usize| Array2::from_shape_fn((n, n), |(a, b)| if a == b { 1.0 } else { 0.3 + 0.1 * (a + b) as f64 % 0.7 });
    let bundle = SimilarityBundle::new(base(2), base(3), base(2), NuMatrices::ones(2, 3, 2)).unwrap();
    let mut p: Vec<f64> = (18..80).map(|a| if a < 60 { 0.99 } else { 0.9 }).collect();
    p.push(0.0);
    let params = EconomyParams {
        n_agents,
        n_positions: jobs.total() as usize,
        lambda,
        gamma: EconomyParams::DEFAULT_GAMMA,
        theta_e,
        theta_ue,
        survival: SurvivalTable::new(18, p).unwrap(),
        entry_age: 18,
        age_increment: 1,
    };
    Model::new(params, PopulationParams::default(), jobs, Arc::new(bundle), 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn conservation_and_links_hold_every_step(
        seed in any::<u64>(),
        lambda in 0.0f64..0.5,
        theta_e in 0.0f64..1.0,
        theta_ue in 0.0f64..1.0,
        n_agents in 1usize..60,
    ) {
        let model = small_model(lambda, theta_e, theta_ue, n_agents);
        let mut state = SimulationState::initialise(&model, seed);
        state.check_links().unwrap();
        for _ in 0..40 {
            let report = state.step(&model).unwrap();
            prop_assert_eq!(state.agents.len(), n_agents);
            prop_assert_eq!(state.positions.len(), model.params.n_positions);
            prop_assert!(state.check_links().is_ok(), "{:?}", state.check_links());
            for t in &report.transitions {
                if t.status == MoverStatus::Employed {
                    prop_assert!(t.to_wage > t.from_wage);
                }
            }
            let filled = state.positions.iter().filter(|p| matches!(p.state, PositionState::Filled(_))).count();
            prop_assert_eq!(filled, state.employed());
            prop_assert!(state.positions.iter().all(|p| p.wage > 0.0));
        }
    }
}
