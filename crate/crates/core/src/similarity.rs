//! Base similarity matrices between categories and the composite
//! position-pair score built from them.
//!
//! Three base matrices are built from raw data: region proximity from
//! pairwise distances, industry affinity from an input-output table and
//! occupation closeness from skill vectors. Each is min-max scaled into
//! `[0, 1]`, and the score between two positions is the product of the three
//! base entries, each raised to its own calibrated exponent.

use ndarray::Array2;

use crate::domain::{Cell, Dimension};
use crate::error::{LfnError, Result};

/// Non-negative skill-level vector of one occupation.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillVector(Vec<f64>);

impl SkillVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(LfnError::Domain("skill levels must be finite and non-negative".into()));
        }
        if !values.iter().any(|v| *v > 0.0) {
            return Err(LfnError::Degenerate("skill vector has zero norm".into()));
        }
        Ok(SkillVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_square(m: &Array2<f64>, what: &str) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(LfnError::ShapeMismatch {
            expected: (r, r),
            actual: (r, c),
        });
    }
    if r == 0 {
        return Err(LfnError::Degenerate(format!("{what} matrix is empty")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LfnError::Domain(format!("{what} matrix has non-finite entries")));
    }
    Ok(r)
}

/// Proximity between regions: distances min-max scaled and flipped so the
/// closest pair scores 1 and the farthest 0.
pub fn region_similarity(distances: &Array2<f64>) -> Result<Array2<f64>> {
    let n = check_square(distances, "distance")?;
    for i in 0..n {
        if distances[[i, i]] != 0.0 {
            return Err(LfnError::Domain(format!("distance diagonal entry {i} is not zero")));
        }
        for j in 0..n {
            if distances[[i, j]] < 0.0 {
                return Err(LfnError::Domain("distances must be non-negative".into()));
            }
            if distances[[i, j]] != distances[[j, i]] {
                return Err(LfnError::Domain(format!("distances not symmetric at ({i}, {j})")));
            }
        }
    }
    let (min, max) = min_max(distances);
    if max == min {
        return Err(LfnError::Degenerate("all distances are equal".into()));
    }
    Ok(distances.mapv(|d| 1.0 - (d - min) / (max - min)))
}

/// Affinity of industry `i` to industry `j`: the share of `i`'s inputs that
/// it buys from `j`. Rows sum to one.
pub fn industry_affinity(io_table: &Array2<f64>) -> Result<Array2<f64>> {
    let n = check_square(io_table, "input-output")?;
    if io_table.iter().any(|v| *v < 0.0) {
        return Err(LfnError::Domain("input-output flows must be non-negative".into()));
    }
    let mut out = io_table.clone();
    for i in 0..n {
        let total: f64 = io_table.row(i).sum();
        if total <= 0.0 {
            return Err(LfnError::Degenerate(format!("industry {i} has no inputs")));
        }
        out.row_mut(i).mapv_inplace(|x| x / total);
    }
    Ok(out)
}

/// Cosine similarity between occupation skill vectors.
pub fn occupation_closeness(skills: &[SkillVector]) -> Result<Array2<f64>> {
    let n = skills.len();
    if n == 0 {
        return Err(LfnError::Degenerate("no skill vectors".into()));
    }
    let n_s = skills[0].values().len();
    if let Some(bad) = skills.iter().find(|s| s.values().len() != n_s) {
        return Err(LfnError::Domain(format!(
            "skill vectors differ in length ({} vs {n_s})",
            bad.values().len()
        )));
    }
    let norms: Vec<f64> = skills.iter().map(SkillVector::norm).collect();
    let mut out = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = skills[i]
                .values()
                .iter()
                .zip(skills[j].values())
                .map(|(a, b)| a * b)
                .sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(0.0, 1.0);
            out[[i, j]] = cos;
            out[[j, i]] = cos;
        }
    }
    Ok(out)
}

fn min_max(m: &Array2<f64>) -> (f64, f64) {
    m.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Min-max scales a matrix into `[0, 1]`, diagonal included.
pub fn normalize_matrix(m: &Array2<f64>) -> Result<Array2<f64>> {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return Err(LfnError::Domain("matrix must be non-empty and finite".into()));
    }
    let (min, max) = min_max(m);
    if max == min {
        return Err(LfnError::Degenerate("constant matrix cannot be normalised".into()));
    }
    Ok(m.mapv(|v| (v - min) / (max - min)))
}

/// Base matrices as produced by the three constructors, before scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSimilarity {
    pub region: Array2<f64>,
    pub industry: Array2<f64>,
    pub occupation: Array2<f64>,
}

impl RawSimilarity {
    pub fn from_inputs(
        distances: &Array2<f64>,
        io_table: &Array2<f64>,
        skills: &[SkillVector],
    ) -> Result<Self> {
        Ok(RawSimilarity {
            region: region_similarity(distances)?,
            industry: industry_affinity(io_table)?,
            occupation: occupation_closeness(skills)?,
        })
    }
}

/// Exponent matrices, one per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct NuMatrices {
    pub region: Array2<f64>,
    pub industry: Array2<f64>,
    pub occupation: Array2<f64>,
}

impl NuMatrices {
    pub fn ones(n_r: usize, n_i: usize, n_o: usize) -> Self {
        NuMatrices {
            region: Array2::ones((n_r, n_r)),
            industry: Array2::ones((n_i, n_i)),
            occupation: Array2::ones((n_o, n_o)),
        }
    }

    pub fn get(&self, dim: Dimension) -> &Array2<f64> {
        match dim {
            Dimension::Region => &self.region,
            Dimension::Industry => &self.industry,
            Dimension::Occupation => &self.occupation,
        }
    }

    pub fn get_mut(&mut self, dim: Dimension) -> &mut Array2<f64> {
        match dim {
            Dimension::Region => &mut self.region,
            Dimension::Industry => &mut self.industry,
            Dimension::Occupation => &mut self.occupation,
        }
    }
}

/// Normalised base matrices, exponents and the cached powered factors.
///
/// A bundle is immutable once built; calibration swaps in a new one via
/// [`SimilarityBundle::with_nu`].
#[derive(Clone, Debug)]
pub struct SimilarityBundle {
    base: NuMatrices,
    nu: NuMatrices,
    powered: NuMatrices,
}

impl SimilarityBundle {
    pub fn new(
        region: Array2<f64>,
        industry: Array2<f64>,
        occupation: Array2<f64>,
        nu: NuMatrices,
    ) -> Result<Self> {
        let base = NuMatrices {
            region,
            industry,
            occupation,
        };
        for dim in Dimension::ALL {
            let m = base.get(dim);
            check_square(m, dim.name())?;
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(LfnError::Domain(format!("{dim} similarity outside [0, 1]")));
            }
            let exps = nu.get(dim);
            if exps.dim() != m.dim() {
                return Err(LfnError::ShapeMismatch {
                    expected: m.dim(),
                    actual: exps.dim(),
                });
            }
            if exps.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(LfnError::Domain(format!("{dim} exponents must be positive")));
            }
        }
        let powered = power(&base, &nu);
        Ok(SimilarityBundle { base, nu, powered })
    }

    pub fn with_nu(&self, nu: NuMatrices) -> Result<Self> {
        SimilarityBundle::new(
            self.base.region.clone(),
            self.base.industry.clone(),
            self.base.occupation.clone(),
            nu,
        )
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.base.region.nrows(),
            self.base.industry.nrows(),
            self.base.occupation.nrows(),
        )
    }

    pub fn base(&self, dim: Dimension) -> &Array2<f64> {
        self.base.get(dim)
    }

    pub fn nu(&self) -> &NuMatrices {
        &self.nu
    }

    /// `base^nu` for one dimension.
    pub fn powered(&self, dim: Dimension) -> &Array2<f64> {
        self.powered.get(dim)
    }

    /// Composite similarity of moving from position cell `from` to `to`.
    #[inline]
    pub fn score(&self, from: Cell, to: Cell) -> f64 {
        self.powered.region[[from.region, to.region]]
            * self.powered.industry[[from.industry, to.industry]]
            * self.powered.occupation[[from.occupation, to.occupation]]
    }
}

fn power(base: &NuMatrices, nu: &NuMatrices) -> NuMatrices {
    let pow = |b: &Array2<f64>, e: &Array2<f64>| {
        let mut out = b.clone();
        out.zip_mut_with(e, |x, &y| *x = x.powf(y));
        out
    };
    NuMatrices {
        region: pow(&base.region, &nu.region),
        industry: pow(&base.industry, &nu.industry),
        occupation: pow(&base.occupation, &nu.occupation),
    }
}

/// Composite similarity between two positions under `bundle`.
pub fn compose_similarity(bundle: &SimilarityBundle, from: Cell, to: Cell) -> f64 {
    bundle.score(from, to)
}

/// Scales each raw matrix into `[0, 1]` and attaches unit exponents.
pub fn normalize_bundle(raw: &RawSimilarity) -> Result<SimilarityBundle> {
    let region = normalize_matrix(&raw.region)?;
    let industry = normalize_matrix(&raw.industry)?;
    let occupation = normalize_matrix(&raw.occupation)?;
    let nu = NuMatrices::ones(region.nrows(), industry.nrows(), occupation.nrows());
    SimilarityBundle::new(region, industry, occupation, nu)
}
