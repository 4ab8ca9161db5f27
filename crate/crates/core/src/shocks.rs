//! Shocked scenarios and shocked-versus-baseline comparisons.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Cell, Dimension, FlowTriple, JobDistribution};
use crate::engine::{Model, RunConfig};
use crate::error::{LfnError, Result};
use crate::metrics::{matrix_jaccard_distance, weighted_clustering};
use crate::stats::mann_whitney_u;
use crate::suite::{run_suite, suite_flows};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockKind {
    Positional,
    WageUp,
    WageDown,
}

/// Target values forced instead of drawn for a positional shock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTarget {
    pub region: Option<usize>,
    pub occupation: Option<usize>,
}

fn default_sigma_multiplier() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub kind: ShockKind,
    pub industries: Vec<usize>,
    /// Characteristics made uniform within each shocked industry.
    #[serde(default)]
    pub homogenise: Vec<Dimension>,
    #[serde(default = "default_sigma_multiplier")]
    pub sigma_multiplier: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fixed_target: Option<FixedTarget>,
}

impl ShockSpec {
    pub fn positional(industries: Vec<usize>, homogenise: Vec<Dimension>, seed: u64) -> Self {
        ShockSpec {
            kind: ShockKind::Positional,
            industries,
            homogenise,
            sigma_multiplier: default_sigma_multiplier(),
            seed,
            fixed_target: None,
        }
    }

    pub fn wage(kind: ShockKind, industries: Vec<usize>) -> Self {
        ShockSpec {
            kind,
            industries,
            homogenise: Vec::new(),
            sigma_multiplier: default_sigma_multiplier(),
            seed: 0,
            fixed_target: None,
        }
    }

    pub fn validate(&self, n_industries: usize) -> Result<()> {
        if self.industries.is_empty() {
            return Err(LfnError::validation("shock.industries", "must not be empty"));
        }
        if let Some(&bad) = self.industries.iter().find(|&&i| i >= n_industries) {
            return Err(LfnError::IndexOutOfRange {
                index: bad,
                size: n_industries,
            });
        }
        match self.kind {
            ShockKind::Positional => {
                if self.homogenise.is_empty() {
                    return Err(LfnError::validation(
                        "shock.homogenise",
                        "a positional shock needs region and/or occupation",
                    ));
                }
                if self.homogenise.contains(&Dimension::Industry) {
                    return Err(LfnError::validation(
                        "shock.homogenise",
                        "only region and occupation can be homogenised",
                    ));
                }
            }
            ShockKind::WageUp | ShockKind::WageDown => {
                if !(self.sigma_multiplier >= 0.0 && self.sigma_multiplier.is_finite()) {
                    return Err(LfnError::validation(
                        "shock.sigma_multiplier",
                        "must be finite and non-negative",
                    ));
                }
            }
        }
        Ok(())
    }

    fn industry_set(&self) -> BTreeSet<usize> {
        self.industries.iter().copied().collect()
    }
}

/// Share of all positions that sit in the shocked industries.
pub fn fraction_shocked(jobs: &JobDistribution, industries: &[usize]) -> f64 {
    let set: BTreeSet<usize> = industries.iter().copied().collect();
    let shocked: u64 = set.iter().map(|&i| jobs.industry_total(i)).sum();
    shocked as f64 / jobs.total() as f64
}

/// Moves every position of each shocked industry onto one target region
/// and/or occupation. Targets are drawn per industry in proportion to its
/// current marginal unless `fixed_target` pins it. Other industries and the total
/// count are untouched.
pub fn apply_positional_shock<R: Rng + ?Sized>(
    jobs: &JobDistribution,
    spec: &ShockSpec,
    rng: &mut R,
) -> Result<JobDistribution> {
    let (n_r, n_i, n_o) = jobs.dims;
    spec.validate(n_i)?;
    if spec.kind != ShockKind::Positional {
        return Err(LfnError::validation("shock.kind", "expected a positional shock"));
    }
    let homog_r = spec.homogenise.contains(&Dimension::Region);
    let homog_o = spec.homogenise.contains(&Dimension::Occupation);
    let fixed = spec.fixed_target.unwrap_or_default();
    let mut out = jobs.clone();

    for i in spec.industry_set() {
        if jobs.industry_total(i) == 0 {
            return Err(LfnError::EmptyIndustry(i));
        }
        let mut region_marginal = vec![0.0; n_r];
        let mut occupation_marginal = vec![0.0; n_o];
        for r in 0..n_r {
            for o in 0..n_o {
                let c = jobs.counts[jobs.index(Cell::new(r, i, o))] as f64;
                region_marginal[r] += c;
                occupation_marginal[o] += c;
            }
        }
        let mut draw = |marginal: &[f64], forced: Option<usize>, size: usize| -> Result<usize> {
            match forced {
                Some(t) if t >= size => Err(LfnError::IndexOutOfRange { index: t, size }),
                Some(t) => Ok(t),
                None => Ok(WeightedIndex::new(marginal)
                    .expect("industry has positions")
                    .sample(rng)),
            }
        };
        let target_r = if homog_r { Some(draw(&region_marginal, fixed.region, n_r)?) } else { None };
        let target_o = if homog_o {
            Some(draw(&occupation_marginal, fixed.occupation, n_o)?)
        } else {
            None
        };

        for r in 0..n_r {
            for o in 0..n_o {
                out.counts[jobs.index(Cell::new(r, i, o))] = 0;
            }
        }
        for r in 0..n_r {
            for o in 0..n_o {
                let c = jobs.counts[jobs.index(Cell::new(r, i, o))];
                let to = Cell::new(target_r.unwrap_or(r), i, target_o.unwrap_or(o));
                out.counts[jobs.index(to)] += c;
            }
        }
    }
    Ok(out)
}

/// Shifts the mean wage of every occupied cell in the shocked industries by
/// `sigma_multiplier` of that cell's own standard deviation, floored at 1% of
/// the original mean.
pub fn apply_wage_shock(jobs: &JobDistribution, spec: &ShockSpec) -> Result<JobDistribution> {
    let (n_r, n_i, n_o) = jobs.dims;
    spec.validate(n_i)?;
    let sign = match spec.kind {
        ShockKind::WageUp => 1.0,
        ShockKind::WageDown => -1.0,
        ShockKind::Positional => {
            return Err(LfnError::validation("shock.kind", "expected a wage shock"))
        }
    };
    let mut out = jobs.clone();
    for i in spec.industry_set() {
        for r in 0..n_r {
            for o in 0..n_o {
                let k = jobs.index(Cell::new(r, i, o));
                if jobs.counts[k] == 0 {
                    continue;
                }
                let mean = jobs.wage_mean[k];
                let shifted = mean + sign * spec.sigma_multiplier * jobs.wage_std[k];
                out.wage_mean[k] = shifted.max(0.01 * mean);
            }
        }
    }
    Ok(out)
}

/// Applies either kind of shock; `rng` only matters for positional shocks.
pub fn apply_shock<R: Rng + ?Sized>(
    jobs: &JobDistribution,
    spec: &ShockSpec,
    rng: &mut R,
) -> Result<JobDistribution> {
    match spec.kind {
        ShockKind::Positional => apply_positional_shock(jobs, spec, rng),
        ShockKind::WageUp | ShockKind::WageDown => apply_wage_shock(jobs, spec),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedEdge {
    pub from: usize,
    pub to: usize,
    /// Mean shocked density minus mean baseline density.
    pub mean_change: f64,
    pub p_value: f64,
}

/// Edges whose shocked-minus-baseline density differences are distributed
/// differently from baseline-minus-baseline differences.
///
/// Run `j` of each group is paired to form the shocked differences
/// `s_j - b_j`. The null differences are `b_j - b_{j+1}` and their negations
/// over consecutive baseline runs (cyclically), which makes the null sample
/// symmetric about zero. Each edge is tested with a two-sided Mann-Whitney U
/// test and flagged when `p < alpha`.
pub fn flow_significance(
    shocked: &[Array2<f64>],
    baseline: &[Array2<f64>],
    alpha: f64,
) -> Result<Vec<FlaggedEdge>> {
    let m = shocked.len().min(baseline.len());
    if m < 3 {
        return Err(LfnError::InsufficientSamples { needed: 3, have: m });
    }
    if shocked.len() != baseline.len() {
        return Err(LfnError::validation(
            "flow_significance",
            format!("{} shocked vs {} baseline samples", shocked.len(), baseline.len()),
        ));
    }
    let dim = baseline[0].dim();
    if let Some(bad) = shocked.iter().chain(baseline).find(|a| a.dim() != dim) {
        return Err(LfnError::ShapeMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    let mut flagged = Vec::new();
    let mut diffs = vec![0.0; m];
    let mut null = vec![0.0; 2 * m];
    for from in 0..dim.0 {
        for to in 0..dim.1 {
            let s = |j: usize| shocked[j][[from, to]];
            let b = |j: usize| baseline[j][[from, to]];
            for j in 0..m {
                diffs[j] = s(j) - b(j);
                let d = b(j) - b((j + 1) % m);
                null[2 * j] = d;
                null[2 * j + 1] = -d;
            }
            let test = mann_whitney_u(&diffs, &null)?;
            if test.p_value < alpha {
                let mean = |f: &dyn Fn(usize) -> f64| (0..m).map(f).sum::<f64>() / m as f64;
                flagged.push(FlaggedEdge {
                    from,
                    to,
                    mean_change: mean(&s) - mean(&b),
                    p_value: test.p_value,
                });
            }
        }
    }
    Ok(flagged)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionShock {
    pub dimension: Dimension,
    /// Weighted Jaccard distance between mean shocked and mean baseline densities.
    pub jaccard: f64,
    /// Mean Jaccard distance over runs paired by index.
    pub paired_jaccard: f64,
    /// Smallest and largest Jaccard distance over pairs of baseline runs.
    pub baseline_band: (f64, f64),
    pub clustering_baseline: f64,
    pub clustering_shocked: f64,
    pub flagged: Vec<FlaggedEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockReport {
    pub spec: ShockSpec,
    pub fraction_shocked: f64,
    pub m: usize,
    pub baseline_seeds: Vec<u64>,
    pub shocked_seeds: Vec<u64>,
    pub dimensions: Vec<DimensionShock>,
}

impl ShockReport {
    pub fn get(&self, dim: Dimension) -> Option<&DimensionShock> {
        self.dimensions.iter().find(|d| d.dimension == dim)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub m: usize,
    /// Stopping rules and collection length shared by every run.
    pub run: RunConfig,
    /// First seed of the baseline suite; shocked runs use the next `m` seeds.
    pub first_seed: u64,
    pub alpha: f64,
}

impl ExperimentConfig {
    pub fn baseline_seeds(&self) -> Vec<u64> {
        (0..self.m as u64).map(|k| self.first_seed + k).collect()
    }

    pub fn shocked_seeds(&self) -> Vec<u64> {
        (0..self.m as u64).map(|k| self.first_seed + self.m as u64 + k).collect()
    }
}

/// Flows of a baseline suite, reusable across several shocks.
#[derive(Clone, Debug)]
pub struct BaselineSuite {
    pub seeds: Vec<u64>,
    pub flows: Vec<FlowTriple>,
}

pub fn run_baseline(model: &Model, config: &ExperimentConfig) -> Result<BaselineSuite> {
    if config.m < 3 {
        return Err(LfnError::InsufficientSamples {
            needed: 3,
            have: config.m,
        });
    }
    let seeds = config.baseline_seeds();
    let flows = suite_flows(&run_suite(model, &config.run, &seeds)?);
    Ok(BaselineSuite { seeds, flows })
}

/// Runs the baseline and shocked suites and compares them.
pub fn run_experiment(model: &Model, spec: &ShockSpec, config: &ExperimentConfig) -> Result<ShockReport> {
    let baseline = run_baseline(model, config)?;
    run_against_baseline(model, spec, config, &baseline)
}

/// Shocks the model's job distribution once, runs the shocked suite and
/// compares it with an existing baseline suite.
pub fn run_against_baseline(
    model: &Model,
    spec: &ShockSpec,
    config: &ExperimentConfig,
    baseline: &BaselineSuite,
) -> Result<ShockReport> {
    let shocked_model = shocked_model(model, spec)?;
    let shocked_seeds = config.shocked_seeds();
    let shocked = suite_flows(&run_suite(&shocked_model, &config.run, &shocked_seeds)?);
    let mut report = compare_suites(&baseline.flows, &shocked, spec, config.alpha)?;
    report.fraction_shocked = fraction_shocked(&model.jobs, &spec.industries);
    report.baseline_seeds = baseline.seeds.clone();
    report.shocked_seeds = shocked_seeds;
    Ok(report)
}

/// Per-dimension comparison of two suites of equal size.
pub fn compare_suites(
    baseline: &[FlowTriple],
    shocked: &[FlowTriple],
    spec: &ShockSpec,
    alpha: f64,
) -> Result<ShockReport> {
    let m = baseline.len();
    if m < 3 || shocked.len() < 3 {
        return Err(LfnError::InsufficientSamples {
            needed: 3,
            have: m.min(shocked.len()),
        });
    }
    let mean_b = FlowTriple::mean(baseline)?;
    let mean_s = FlowTriple::mean(shocked)?;
    let mut dimensions = Vec::with_capacity(3);
    for dim in Dimension::ALL {
        let b: Vec<Array2<f64>> = baseline.iter().map(|t| t.get(dim).0.clone()).collect();
        let s: Vec<Array2<f64>> = shocked.iter().map(|t| t.get(dim).0.clone()).collect();
        let jaccard = matrix_jaccard_distance(&mean_s.get(dim).0, &mean_b.get(dim).0)?;
        let mut paired = 0.0;
        for (x, y) in s.iter().zip(&b) {
            paired += matrix_jaccard_distance(x, y)?;
        }
        let paired_jaccard = paired / s.len().min(b.len()) as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..m {
            for k in j + 1..m {
                let d = matrix_jaccard_distance(&b[j], &b[k])?;
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        dimensions.push(DimensionShock {
            dimension: dim,
            jaccard,
            paired_jaccard,
            baseline_band: (lo, hi),
            clustering_baseline: weighted_clustering(&mean_b.get(dim).0)?,
            clustering_shocked: weighted_clustering(&mean_s.get(dim).0)?,
            flagged: flow_significance(&s, &b, alpha)?,
        });
    }
    Ok(ShockReport {
        spec: spec.clone(),
        fraction_shocked: 0.0,
        m,
        baseline_seeds: Vec::new(),
        shocked_seeds: Vec::new(),
        dimensions,
    })
}

/// The model with its job distribution shocked once, seeded by `spec.seed`.
pub fn shocked_model(model: &Model, spec: &ShockSpec) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    model.with_jobs(apply_shock(&model.jobs, spec, &mut rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    /// 2 regions x 2 industries x 1 occupation.
    fn jobs(counts: Vec<u64>) -> JobDistribution {
        let n = counts.len();
        JobDistribution::new((2, 2, 1), counts, vec![100.0; n], vec![10.0; n]).unwrap()
    }

    #[test]
    fn homogenising_a_single_region_industry_changes_nothing() {
        // industry 0 lives entirely in region 1
        let j = jobs(vec![0, 5, 7, 3]);
        let spec = ShockSpec::positional(vec![0], vec![Dimension::Region], 1);
        let out = apply_positional_shock(&j, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, j);
    }

    #[test]
    fn fixed_target_reallocation() {
        // industry 0 over regions: (10, 30)
        let j = jobs(vec![10, 4, 30, 6]);
        let mut spec = ShockSpec::positional(vec![0], vec![Dimension::Region], 1);
        spec.fixed_target = Some(FixedTarget {
            region: Some(1),
            occupation: None,
        });
        let out = apply_positional_shock(&j, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.counts, vec![0, 4, 40, 6]);
    }

    #[test]
    fn drawn_target_follows_marginal() {
        let j = jobs(vec![10, 4, 30, 6]);
        let spec = ShockSpec::positional(vec![0], vec![Dimension::Region], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 20_000;
        let mut to_region_1 = 0;
        for _ in 0..trials {
            let out = apply_positional_shock(&j, &spec, &mut rng).unwrap();
            if out.counts[2] == 40 {
                to_region_1 += 1;
            }
        }
        let p = to_region_1 as f64 / trials as f64;
        let se = (0.75f64 * 0.25 / trials as f64).sqrt();
        assert!((p - 0.75).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn empty_industry_is_rejected() {
        let j = jobs(vec![0, 5, 0, 3]);
        let spec = ShockSpec::positional(vec![0], vec![Dimension::Region], 1);
        let err = apply_positional_shock(&j, &spec, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(LfnError::EmptyIndustry(0))));
    }

    #[test]
    fn invalid_specs() {
        let j = jobs(vec![1, 1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let none = ShockSpec::positional(vec![0], vec![], 1);
        assert!(apply_positional_shock(&j, &none, &mut rng).is_err());
        let empty = ShockSpec::positional(vec![], vec![Dimension::Region], 1);
        assert!(apply_positional_shock(&j, &empty, &mut rng).is_err());
        let industry = ShockSpec::positional(vec![0], vec![Dimension::Industry], 1);
        assert!(apply_positional_shock(&j, &industry, &mut rng).is_err());
        let out_of_range = ShockSpec::positional(vec![5], vec![Dimension::Region], 1);
        assert!(apply_positional_shock(&j, &out_of_range, &mut rng).is_err());
    }

    #[test]
    fn wage_shock_examples() {
        let mut j = JobDistribution::new(
            (1, 2, 3),
            vec![1, 1, 1, 1, 0, 1],
            vec![100.0, 100.0, 100.0, 100.0, 100.0, 50.0],
            vec![10.0, 0.0, 60.0, 10.0, 10.0, 5.0],
        )
        .unwrap();
        let up = apply_wage_shock(&j, &ShockSpec::wage(ShockKind::WageUp, vec![0])).unwrap();
        assert_relative_eq!(up.wage_mean[0], 120.0);
        assert_eq!(up.wage_mean[1], 100.0);
        assert_relative_eq!(up.wage_mean[2], 220.0);
        // industry 1 untouched
        assert_eq!(&up.wage_mean[3..], &j.wage_mean[3..]);
        let down = apply_wage_shock(&j, &ShockSpec::wage(ShockKind::WageDown, vec![0])).unwrap();
        assert_relative_eq!(down.wage_mean[0], 80.0);
        assert_relative_eq!(down.wage_mean[2], 1.0);
        assert_eq!(down.counts, j.counts);
        assert_eq!(down.wage_std, j.wage_std);
        // empty cells keep their mean
        j.counts[0] = 0;
        let up = apply_wage_shock(&j, &ShockSpec::wage(ShockKind::WageUp, vec![0])).unwrap();
        assert_eq!(up.wage_mean[0], 100.0);
    }

    #[test]
    fn fraction_of_shocked_positions() {
        let j = jobs(vec![10, 4, 30, 6]);
        assert_relative_eq!(fraction_shocked(&j, &[0]), 0.8);
        assert_relative_eq!(fraction_shocked(&j, &[0, 1, 1]), 1.0);
    }

    #[test]
    fn significance_examples() {
        let m = |v: f64| array![[v]];
        let base: Vec<_> = [0.3, 0.31, 0.29, 0.33].iter().map(|&v| m(v)).collect();
        assert!(flow_significance(&base, &base, 0.05).unwrap().is_empty());

        let low: Vec<_> = [0.1, 0.11, 0.12, 0.13].iter().map(|&v| m(v)).collect();
        let high: Vec<_> = [0.5, 0.51, 0.52, 0.53].iter().map(|&v| m(v)).collect();
        let flagged = flow_significance(&low, &high, 0.05).unwrap();
        assert_eq!(flagged.len(), 1);
        assert_relative_eq!(flagged[0].mean_change, -0.4, epsilon = 1e-12);
        assert!(flagged[0].p_value < 0.05);

        assert!(matches!(
            flow_significance(&low[..2], &high[..2], 0.05),
            Err(LfnError::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn positional_shocks_conserve_counts(
            counts in prop::collection::vec(1u64..50, 12),
            industry in 0usize..3,
            both in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let n = counts.len();
            let j = JobDistribution::new((2, 3, 2), counts, vec![10.0; n], vec![1.0; n]).unwrap();
            let homog = if both {
                vec![Dimension::Region, Dimension::Occupation]
            } else {
                vec![Dimension::Occupation]
            };
            let spec = ShockSpec::positional(vec![industry], homog, seed);
            let out = apply_positional_shock(&j, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.total(), j.total());
            for i in 0..3 {
                prop_assert_eq!(out.industry_total(i), j.industry_total(i));
                if i != industry {
                    for r in 0..2 { for o in 0..2 {
                        let k = j.index(Cell::new(r, i, o));
                        prop_assert_eq!(out.counts[k], j.counts[k]);
                    }}
                }
            }
            let occupied = (0..2)
                .flat_map(|r| (0..2).map(move |o| (r, o)))
                .filter(|&(r, o)| out.counts[j.index(Cell::new(r, industry, o))] > 0)
                .count();
            let expected_max = if both { 1 } else { 2 };
            prop_assert!(occupied >= 1 && occupied <= expected_max);
        }

        #[test]
        fn wage_shocks_keep_counts(
            counts in prop::collection::vec(0u64..5, 8),
            up in any::<bool>(),
        ) {
            let mut counts = counts;
            counts[0] += 1;
            let j = JobDistribution::new((2, 2, 2), counts, vec![50.0; 8], vec![30.0; 8]).unwrap();
            let kind = if up { ShockKind::WageUp } else { ShockKind::WageDown };
            let out = apply_wage_shock(&j, &ShockSpec::wage(kind, vec![0, 1])).unwrap();
            prop_assert_eq!(&out.counts, &j.counts);
            prop_assert!(out.wage_mean.iter().all(|&w| w >= 0.5));
        }
    }
}
