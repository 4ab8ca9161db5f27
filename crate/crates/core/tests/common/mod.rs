#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lfn::engine::{Model, RunConfig};
use lfn::flows::SteadyStateParams;
use lfn::io::{generate_synthetic, SyntheticData, SyntheticSpec};
use lfn::similarity::NuMatrices;
use lfn::Dimension;

pub const FIXTURE_SEED: u64 = 7;

/// 21 x 21 x 9 categories, 3500 agents, 3600 positions.
pub fn fixture() -> SyntheticData {
    generate_synthetic(SyntheticSpec::full_scale(FIXTURE_SEED)).unwrap()
}

/// Exponents drawn log-uniformly from (e^-1, e^1.5), cell by cell.
pub fn known_nu(dims: (usize, usize, usize), seed: u64) -> NuMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nu = NuMatrices::ones(dims.0, dims.1, dims.2);
    for d in Dimension::ALL {
        nu.get_mut(d).mapv_inplace(|_| rng.random_range(-1.0f64..1.5).exp());
    }
    nu
}

/// Fixture model whose exponents are [`known_nu`].
pub fn known_model(data: &SyntheticData) -> Model {
    let base = data.bundle().unwrap();
    let nu = known_nu(base.dims(), 99);
    data.model_with(base.with_nu(nu).unwrap()).unwrap()
}

pub fn run_template(collection_steps: usize) -> RunConfig {
    RunConfig::new(0, SteadyStateParams::default(), collection_steps)
}
