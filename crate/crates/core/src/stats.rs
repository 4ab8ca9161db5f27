//! Rank statistics: midranks, Spearman correlation and the two-sided
//! Mann-Whitney U test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LfnError, Result};

/// Largest group size for which the exact null distribution is enumerated.
pub const EXACT_MAX_GROUP: usize = 8;

/// 1-based ranks with ties replaced by their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample: pairs where it is larger, ties
    /// counting one half.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test. Exact enumeration over the pooled midranks
/// when both groups have at most [`EXACT_MAX_GROUP`] values, otherwise the
/// tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(LfnError::InsufficientSamples {
            needed: 1,
            have: n1.min(n2),
        });
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(LfnError::Domain("NaN in Mann-Whitney sample".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;

    if n1.max(n2) <= EXACT_MAX_GROUP {
        let p_value = exact_p(&ranks, n1, (u - mean).abs());
        return Ok(MannWhitney {
            u,
            p_value,
            exact: true,
        });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = tie_groups(&pooled).map(|t| t * t * t - t).sum();
    let variance = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return Ok(MannWhitney {
            u,
            p_value: 1.0,
            exact: false,
        });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * normal.sf(z)).min(1.0);
    Ok(MannWhitney {
        u,
        p_value,
        exact: false,
    })
}

fn tie_groups(values: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        sizes.push((j - i + 1) as f64);
        i = j + 1;
    }
    sizes.into_iter()
}

/// Fraction of all size-`n1` subsets of `ranks` whose U deviates from its
/// mean at least as much as `observed_dev`.
fn exact_p(ranks: &[f64], n1: usize, observed_dev: f64) -> f64 {
    let n2 = ranks.len() - n1;
    let mean = (n1 * n2) as f64 / 2.0;
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let tol = 1e-9 * (1.0 + observed_dev);
    let mut extreme = 0u64;
    let mut total = 0u64;

    fn walk(
        ranks: &[f64],
        start: usize,
        left: usize,
        sum: f64,
        visit: &mut dyn FnMut(f64),
    ) {
        if left == 0 {
            visit(sum);
            return;
        }
        for i in start..=ranks.len() - left {
            walk(ranks, i + 1, left - 1, sum + ranks[i], visit);
        }
    }

    walk(ranks, 0, n1, 0.0, &mut |sum| {
        total += 1;
        if ((sum - offset) - mean).abs() >= observed_dev - tol {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

/// Spearman rank correlation. Errors when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LfnError::ShapeMismatch {
            expected: (a.len(), 1),
            actual: (b.len(), 1),
        });
    }
    crate::metrics::pearson_slices(&midranks(a), &midranks(b))
}
