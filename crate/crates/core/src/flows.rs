//! Flow-density accumulation and steady-state detection.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{Cell, Dimension, FlowDensityMatrix, FlowTriple, TransitionRecord};
use crate::error::{LfnError, Result};
use crate::metrics::frobenius_distance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadyStateParams {
    /// Smoothing window size.
    pub window: usize,
    pub lag: usize,
    pub epsilon: f64,
    pub max_steps: usize,
    /// Compute the per-step error on flows from the last `window` steps
    /// instead of all steps since the start of the run.
    pub windowed_flows: bool,
}

impl Default for SteadyStateParams {
    fn default() -> Self {
        SteadyStateParams {
            window: 20,
            lag: 20,
            epsilon: 1e-3,
            max_steps: 2000,
            windowed_flows: false,
        }
    }
}

impl SteadyStateParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(LfnError::validation("steady_state.window", "must be at least 1"));
        }
        if self.lag == 0 {
            return Err(LfnError::validation("steady_state.lag", "must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(LfnError::validation("steady_state.epsilon", "must be positive"));
        }
        if self.max_steps < self.window + self.lag {
            return Err(LfnError::validation(
                "steady_state.max_steps",
                "must allow at least window + lag steps",
            ));
        }
        Ok(())
    }
}

/// Transition counts along each of the three dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCounts {
    pub region: Array2<f64>,
    pub industry: Array2<f64>,
    pub occupation: Array2<f64>,
}

impl FlowCounts {
    pub fn new(dims: (usize, usize, usize)) -> Self {
        FlowCounts {
            region: Array2::zeros((dims.0, dims.0)),
            industry: Array2::zeros((dims.1, dims.1)),
            occupation: Array2::zeros((dims.2, dims.2)),
        }
    }

    #[inline]
    pub fn record(&mut self, from: Cell, to: Cell) {
        self.region[[from.region, to.region]] += 1.0;
        self.industry[[from.industry, to.industry]] += 1.0;
        self.occupation[[from.occupation, to.occupation]] += 1.0;
    }

    pub fn add(&mut self, other: &FlowCounts) {
        self.region += &other.region;
        self.industry += &other.industry;
        self.occupation += &other.occupation;
    }

    pub fn sub(&mut self, other: &FlowCounts) {
        self.region -= &other.region;
        self.industry -= &other.industry;
        self.occupation -= &other.occupation;
    }

    pub fn total(&self) -> f64 {
        self.region.sum()
    }

    pub fn densities(&self) -> FlowTriple {
        FlowTriple {
            region: FlowDensityMatrix::from_counts(&self.region),
            industry: FlowDensityMatrix::from_counts(&self.industry),
            occupation: FlowDensityMatrix::from_counts(&self.occupation),
        }
    }
}

/// Flow densities of `transitions` along one dimension over `n` categories.
/// Intra-category moves land on the diagonal.
pub fn accumulate(
    transitions: &[TransitionRecord],
    dimension: Dimension,
    n: usize,
) -> Result<FlowDensityMatrix> {
    let mut counts = Array2::<f64>::zeros((n, n));
    for t in transitions {
        let (a, b) = (t.from.get(dimension), t.to.get(dimension));
        for index in [a, b] {
            if index >= n {
                return Err(LfnError::IndexOutOfRange { index, size: n });
            }
        }
        counts[[a, b]] += 1.0;
    }
    Ok(FlowDensityMatrix::from_counts(&counts))
}

/// Mean Frobenius distance between simulated and observed densities over the
/// three dimensions.
pub fn error_xi(sim: &FlowTriple, obs: &FlowTriple) -> Result<f64> {
    let mut total = 0.0;
    for dim in Dimension::ALL {
        total += frobenius_distance(&sim.get(dim).0, &obs.get(dim).0)?;
    }
    Ok(total / 3.0)
}

/// Compares the mean of the last `window` error values with the mean of the
/// `window` values ending `lag` steps earlier.
pub fn steady_state_reached(xi_history: &[f64], params: &SteadyStateParams) -> Result<bool> {
    let (k, l) = (params.window, params.lag);
    if k == 0 || l == 0 {
        return Err(LfnError::validation("steady_state", "window and lag must be at least 1"));
    }
    let needed = k + l;
    if xi_history.len() < needed {
        return Err(LfnError::InsufficientHistory {
            needed,
            have: xi_history.len(),
        });
    }
    let end = xi_history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / k as f64;
    let recent = mean(&xi_history[end - k..end]);
    let lagged = mean(&xi_history[end - k - l..end - l]);
    Ok((recent - lagged).abs() < params.epsilon)
}

/// First index (0-based step) at which the detector fires, if any.
pub fn first_steady_step(xi_history: &[f64], params: &SteadyStateParams) -> Result<Option<usize>> {
    for end in (params.window + params.lag)..=xi_history.len() {
        if steady_state_reached(&xi_history[..end], params)? {
            return Ok(Some(end - 1));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MoverStatus;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn tr(from: usize, to: usize) -> TransitionRecord {
        TransitionRecord {
            step: 0,
            from: Cell::new(from, 0, 0),
            to: Cell::new(to, 0, 0),
            from_wage: 1.0,
            to_wage: 2.0,
            status: MoverStatus::Employed,
        }
    }

    fn single(v: f64) -> FlowDensityMatrix {
        FlowDensityMatrix(array![[v]])
    }

    fn triple(r: FlowDensityMatrix, i: FlowDensityMatrix, o: FlowDensityMatrix) -> FlowTriple {
        FlowTriple {
            region: r,
            industry: i,
            occupation: o,
        }
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(accumulate(&[], Dimension::Region, 2).unwrap(), FlowDensityMatrix::zeros(2));
        assert_eq!(
            accumulate(&[tr(0, 1)], Dimension::Region, 2).unwrap().0,
            array![[0.0, 1.0], [0.0, 0.0]]
        );
        let log = [tr(0, 0), tr(0, 0), tr(0, 1), tr(1, 0)];
        assert_eq!(
            accumulate(&log, Dimension::Region, 2).unwrap().0,
            array![[0.5, 0.25], [0.25, 0.0]]
        );
        assert!(matches!(
            accumulate(&[tr(0, 2)], Dimension::Region, 2),
            Err(LfnError::IndexOutOfRange { index: 2, size: 2 })
        ));
    }

    #[test]
    fn xi_examples() {
        let obs = triple(single(0.2), single(0.2), single(0.2));
        assert_eq!(error_xi(&obs, &obs).unwrap(), 0.0);
        let sim = triple(single(0.5), single(0.5), single(0.5));
        assert_relative_eq!(error_xi(&sim, &obs).unwrap(), 0.3, epsilon = 1e-12);

        let z = FlowDensityMatrix::zeros(2);
        let obs = triple(z.clone(), z.clone(), z.clone());
        let sim = triple(FlowDensityMatrix(array![[0.3, 0.4], [0.0, 0.0]]), z.clone(), z.clone());
        assert_relative_eq!(error_xi(&sim, &obs).unwrap(), 0.5 / 3.0, epsilon = 1e-12);

        let bad = triple(single(0.0), z.clone(), z);
        assert!(matches!(error_xi(&bad, &obs), Err(LfnError::ShapeMismatch { .. })));
    }

    #[test]
    fn steady_state_examples() {
        let params = SteadyStateParams {
            window: 5,
            lag: 3,
            epsilon: 1e-9,
            ..Default::default()
        };
        assert!(steady_state_reached(&[0.7; 8], &params).unwrap());
        assert!(matches!(
            steady_state_reached(&[0.7; 7], &params),
            Err(LfnError::InsufficientHistory { needed: 8, have: 7 })
        ));
    }

    #[test]
    fn counts_match_accumulate() {
        let log = [tr(0, 0), tr(0, 1), tr(1, 0), tr(1, 1), tr(1, 1)];
        let mut counts = FlowCounts::new((2, 1, 1));
        for t in &log {
            counts.record(t.from, t.to);
        }
        assert_eq!(counts.densities().region, accumulate(&log, Dimension::Region, 2).unwrap());
    }

    proptest! {
        #[test]
        fn accumulate_sums_to_one(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
            let log: Vec<_> = pairs.iter().map(|&(a, b)| tr(a, b)).collect();
            let m = accumulate(&log, Dimension::Region, 4).unwrap();
            prop_assert!((m.0.sum() - 1.0).abs() < 1e-9);
            prop_assert!(m.validate().is_ok());
        }

        #[test]
        fn constant_history_always_steady(v in 0.0f64..10.0, eps in 1e-12f64..1.0, k in 1usize..10, l in 1usize..10) {
            let params = SteadyStateParams { window: k, lag: l, epsilon: eps, ..Default::default() };
            prop_assert!(steady_state_reached(&vec![v; k + l + 3], &params).unwrap());
        }

        #[test]
        fn prepending_old_history_is_irrelevant(
            tail in prop::collection::vec(0.0f64..1.0, 12),
            head in prop::collection::vec(0.0f64..1.0, 0..10),
        ) {
            let params = SteadyStateParams { window: 6, lag: 6, epsilon: 0.05, ..Default::default() };
            let mut longer = head.clone();
            longer.extend_from_slice(&tail);
            prop_assert_eq!(
                steady_state_reached(&tail, &params).unwrap(),
                steady_state_reached(&longer, &params).unwrap()
            );
        }
    }
}
