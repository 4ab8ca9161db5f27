//! Fitting the similarity exponents to observed flow densities.
//!
//! Each iteration runs a Monte Carlo suite with the current exponents,
//! measures the error between observed and mean simulated densities, and
//! rescales every exponent cell by a bounded factor proportional to its
//! relative error.

use std::sync::Arc;

use log::{info, warn};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::domain::{Dimension, FlowTriple};
use crate::engine::{Model, RunConfig};
use crate::error::{LfnError, Result};
use crate::metrics::FitReport;
use crate::similarity::{NuMatrices, SimilarityBundle};
use crate::suite::{run_suite, suite_flows};

/// Denominator floor for relative errors on cells with zero observed density.
pub const DELTA_FLOOR: f64 = 1e-6;
pub const MAX_GROWTH: f64 = 1.5;
pub const MAX_SHRINK: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub m_simulations: usize,
    /// Stop once the mean error falls below this.
    pub threshold: f64,
    pub max_iterations: usize,
    pub collection_steps: usize,
    /// One seed per simulation; generated from 1..=M when empty.
    pub seeds: Vec<u64>,
    /// Draw new seeds every iteration instead of reusing the same ones.
    pub fresh_seeds: bool,
    /// Average signed instead of absolute errors.
    pub signed_error: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            m_simulations: 5,
            threshold: 1e-4,
            max_iterations: 20,
            collection_steps: 200,
            seeds: Vec::new(),
            fresh_seeds: false,
            signed_error: false,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_simulations == 0 {
            return Err(LfnError::validation("calibration.m_simulations", "must be at least 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(LfnError::validation("calibration.threshold", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(LfnError::validation("calibration.max_iterations", "must be at least 1"));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.m_simulations {
            return Err(LfnError::validation(
                "calibration.seeds",
                format!("{} seeds for {} simulations", self.seeds.len(), self.m_simulations),
            ));
        }
        Ok(())
    }

    /// Seeds for one iteration.
    pub fn seeds_for(&self, iteration: usize) -> Vec<u64> {
        let base: Vec<u64> = if self.seeds.is_empty() {
            (1..=self.m_simulations as u64).collect()
        } else {
            self.seeds.clone()
        };
        if !self.fresh_seeds {
            return base;
        }
        let shift = (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        base.into_iter().map(|s| s.wrapping_add(shift)).collect()
    }
}

/// Observed minus mean simulated densities per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMatrices {
    pub region: Array2<f64>,
    pub industry: Array2<f64>,
    pub occupation: Array2<f64>,
}

impl ErrorMatrices {
    pub fn get(&self, dim: Dimension) -> &Array2<f64> {
        match dim {
            Dimension::Region => &self.region,
            Dimension::Industry => &self.industry,
            Dimension::Occupation => &self.occupation,
        }
    }
}

pub fn compute_errors(observed: &FlowTriple, suite: &[FlowTriple]) -> Result<ErrorMatrices> {
    if suite.is_empty() {
        return Err(LfnError::InsufficientSamples { needed: 1, have: 0 });
    }
    let mean = FlowTriple::mean(suite)?;
    let diff = |dim: Dimension| -> Result<Array2<f64>> {
        let (o, s) = (&observed.get(dim).0, &mean.get(dim).0);
        if o.dim() != s.dim() {
            return Err(LfnError::ShapeMismatch {
                expected: o.dim(),
                actual: s.dim(),
            });
        }
        Ok(o - s)
    };
    Ok(ErrorMatrices {
        region: diff(Dimension::Region)?,
        industry: diff(Dimension::Industry)?,
        occupation: diff(Dimension::Occupation)?,
    })
}

/// Bounded multiplicative exponent update. A negative error (too much
/// simulated flow) raises the exponent, lowering the similarity.
pub fn update_nu(
    nu: &Array2<f64>,
    errors: &Array2<f64>,
    observed: &Array2<f64>,
    base: &Array2<f64>,
) -> Result<Array2<f64>> {
    for m in [errors, observed, base] {
        if m.dim() != nu.dim() {
            return Err(LfnError::ShapeMismatch {
                expected: nu.dim(),
                actual: m.dim(),
            });
        }
    }
    if nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(LfnError::Domain("exponents must be positive and finite".into()));
    }
    let mut out = nu.clone();
    Zip::from(&mut out)
        .and(errors)
        .and(observed)
        .for_each(|v, &e, &obs| *v *= multiplier(e, obs));
    Ok(out)
}

fn multiplier(error: f64, observed: f64) -> f64 {
    let delta = error.abs() / observed.max(DELTA_FLOOR);
    if error < 0.0 {
        (1.0 + delta).min(MAX_GROWTH)
    } else {
        (1.0 - delta).max(MAX_SHRINK)
    }
}

/// Average over dimensions of the mean (absolute, unless `signed`) error.
pub fn mean_error(errors: &ErrorMatrices, signed: bool) -> f64 {
    Dimension::ALL
        .iter()
        .map(|&d| {
            let m = errors.get(d);
            let sum: f64 = if signed { m.sum() } else { m.iter().map(|v| v.abs()).sum() };
            sum / m.len() as f64
        })
        .sum::<f64>()
        / 3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_error: f64,
    /// Mean simulated versus observed densities; NaN entries mark a
    /// constant simulated matrix.
    pub fit: FitReport,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    /// Bundle carrying the exponents of the lowest-error iteration.
    pub bundle: SimilarityBundle,
    pub history: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub converged: bool,
}

impl CalibrationResult {
    pub fn best_error(&self) -> f64 {
        self.history[self.best_iteration].mean_error
    }

    pub fn initial_error(&self) -> f64 {
        self.history[0].mean_error
    }
}

fn fit_or_nan(sim: &FlowTriple, obs: &FlowTriple) -> Result<FitReport> {
    use crate::metrics::{frobenius_distance, pearson, DimensionFit};
    let mut parts = Vec::with_capacity(3);
    for dim in Dimension::ALL {
        let (s, o) = (&sim.get(dim).0, &obs.get(dim).0);
        let r = match pearson(s, o) {
            Ok(r) => r,
            Err(LfnError::Degenerate(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        parts.push(DimensionFit {
            dimension: dim,
            pearson: r,
            frobenius: frobenius_distance(s, o)?,
            cells: s.len(),
        });
    }
    Ok(FitReport::from_parts(parts))
}

/// Fits the exponents of `model`'s bundle starting from all ones.
///
/// `template` supplies the stopping rules of each run; its seed, collection
/// length and reference flows are overridden. Returns the best exponents seen
/// with `converged = false` when the threshold was never met.
pub fn calibrate(
    observed: &FlowTriple,
    config: &CalibrationConfig,
    model: &Model,
    template: &RunConfig,
) -> Result<CalibrationResult> {
    config.validate()?;
    let (n_r, n_i, n_o) = model.bundle.dims();
    for dim in Dimension::ALL {
        let expected = model.bundle.base(dim).dim();
        if observed.get(dim).0.dim() != expected {
            return Err(LfnError::ShapeMismatch {
                expected,
                actual: observed.get(dim).0.dim(),
            });
        }
    }
    let template = RunConfig {
        observed: Some(observed.clone()),
        collection_steps: config.collection_steps,
        ..template.clone()
    };

    let mut nu = NuMatrices::ones(n_r, n_i, n_o);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, NuMatrices)> = None;
    let mut converged = false;

    for iteration in 0..config.max_iterations {
        let bundle = Arc::new(model.bundle.with_nu(nu.clone())?);
        let current = model.with_bundle(bundle)?;
        let outputs = run_suite(&current, &template, &config.seeds_for(iteration))?;
        let flows = suite_flows(&outputs);
        let errors = compute_errors(observed, &flows)?;
        let e = mean_error(&errors, config.signed_error);
        let fit = fit_or_nan(&FlowTriple::mean(&flows)?, observed)?;
        info!(
            "iteration {iteration}: mean error {e:.6}, pearson {:.4}",
            fit.pearson
        );
        history.push(IterationRecord {
            iteration,
            mean_error: e,
            fit,
        });
        let objective = e.abs();
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, iteration, nu.clone()));
        }
        if objective < config.threshold {
            converged = true;
            break;
        }
        let mut next = nu.clone();
        for dim in Dimension::ALL {
            *next.get_mut(dim) = update_nu(
                nu.get(dim),
                errors.get(dim),
                &observed.get(dim).0,
                model.bundle.base(dim),
            )?;
        }
        nu = next;
    }

    let (_, best_iteration, best_nu) = best.expect("at least one iteration ran");
    if !converged {
        warn!(
            "calibration stopped after {} iterations without reaching threshold {}",
            history.len(),
            config.threshold
        );
    }
    Ok(CalibrationResult {
        bundle: model.bundle.with_nu(best_nu)?,
        history,
        best_iteration,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FlowDensityMatrix;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn triple(r: Array2<f64>, i: Array2<f64>, o: Array2<f64>) -> FlowTriple {
        FlowTriple {
            region: FlowDensityMatrix(r),
            industry: FlowDensityMatrix(i),
            occupation: FlowDensityMatrix(o),
        }
    }

    fn one(v: f64) -> Array2<f64> {
        array![[v]]
    }

    #[test]
    fn errors_against_the_suite_mean() {
        let obs = triple(one(0.5), one(0.5), one(0.5));
        let suite = vec![
            triple(one(0.2), one(0.5), one(0.5)),
            triple(one(0.4), one(0.5), one(0.5)),
        ];
        let e = compute_errors(&obs, &suite).unwrap();
        assert_relative_eq!(e.region[[0, 0]], 0.2, epsilon = 1e-15);
        assert_eq!(e.industry[[0, 0]], 0.0);
        let same = compute_errors(&obs, &[obs.clone()]).unwrap();
        assert_eq!(mean_error(&same, false), 0.0);
        assert!(compute_errors(&obs, &[]).is_err());
    }

    #[test]
    fn update_examples() {
        let base = one(0.5);
        let nu = one(1.0);
        assert_eq!(update_nu(&nu, &one(0.0), &one(0.1), &base).unwrap()[[0, 0]], 1.0);
        assert_relative_eq!(update_nu(&nu, &one(-0.05), &one(0.1), &base).unwrap()[[0, 0]], 1.5);
        assert_relative_eq!(update_nu(&nu, &one(0.2), &one(0.1), &base).unwrap()[[0, 0]], 0.5);
        // zero observed density uses the floor
        assert_relative_eq!(update_nu(&nu, &one(-1e-7), &one(0.0), &base).unwrap()[[0, 0]], 1.1);
        assert!(update_nu(&nu, &array![[0.0, 0.0]], &one(0.1), &base).is_err());
        assert!(update_nu(&one(0.0), &one(0.0), &one(0.1), &base).is_err());
    }

    #[test]
    fn mean_error_examples() {
        let zero = ErrorMatrices {
            region: one(0.0),
            industry: one(0.0),
            occupation: one(0.0),
        };
        assert_eq!(mean_error(&zero, false), 0.0);
        let r = ErrorMatrices {
            region: one(0.3),
            ..zero.clone()
        };
        assert_relative_eq!(mean_error(&r, false), 0.1, epsilon = 1e-15);
        let sym = ErrorMatrices {
            region: array![[0.2, -0.2]],
            industry: array![[0.2, -0.2]],
            occupation: array![[0.2, -0.2]],
        };
        assert_relative_eq!(mean_error(&sym, false), 0.2, epsilon = 1e-15);
        assert_eq!(mean_error(&sym, true), 0.0);
    }

    #[test]
    fn fixed_and_fresh_seeds() {
        let fixed = CalibrationConfig::default();
        assert_eq!(fixed.seeds_for(0), fixed.seeds_for(7));
        let fresh = CalibrationConfig {
            fresh_seeds: true,
            ..fixed
        };
        assert_eq!(fresh.seeds_for(0), vec![1, 2, 3, 4, 5]);
        assert_ne!(fresh.seeds_for(0), fresh.seeds_for(1));
    }

    proptest! {
        #[test]
        fn update_stays_positive_and_bounded(
            nu in prop::collection::vec(0.01f64..50.0, 4),
            err in prop::collection::vec(-1.0f64..1.0, 4),
            obs in prop::collection::vec(0.0f64..1.0, 4),
        ) {
            let m = |v: &Vec<f64>| Array2::from_shape_vec((2, 2), v.clone()).unwrap();
            let (nu, err, obs) = (m(&nu), m(&err), m(&obs));
            let out = update_nu(&nu, &err, &obs, &Array2::from_elem((2, 2), 0.5)).unwrap();
            for (new, old) in out.iter().zip(nu.iter()) {
                prop_assert!(*new > 0.0);
                let ratio = new / old;
                prop_assert!((MAX_SHRINK - 1e-12..=MAX_GROWTH + 1e-12).contains(&ratio));
            }
        }

        #[test]
        fn update_is_cellwise(
            err in prop::collection::vec(-1.0f64..1.0, 4),
            obs in prop::collection::vec(0.01f64..1.0, 4),
        ) {
            // each cell depends only on its own error snapshot
            let m = |v: &Vec<f64>| Array2::from_shape_vec((2, 2), v.clone()).unwrap();
            let full = update_nu(&Array2::ones((2, 2)), &m(&err), &m(&obs), &Array2::zeros((2, 2))).unwrap();
            for k in 0..4 {
                let single = update_nu(&one(1.0), &one(err[k]), &one(obs[k]), &one(0.0)).unwrap();
                prop_assert_eq!(full[[k / 2, k % 2]], single[[0, 0]]);
            }
        }
    }
}
