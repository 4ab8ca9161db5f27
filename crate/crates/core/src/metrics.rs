//! Comparisons between flow-density matrices and vectors.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{Dimension, FlowTriple};
use crate::error::{LfnError, Result};

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(LfnError::ShapeMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn pearson_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(LfnError::Degenerate("correlation of a constant input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation over all flattened entries, diagonal included.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let av: Vec<f64> = a.iter().copied().collect();
    let bv: Vec<f64> = b.iter().copied().collect();
    pearson_slices(&av, &bv)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// One minus the weighted Jaccard index of two non-negative vectors.
pub fn weighted_jaccard_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LfnError::ShapeMismatch {
            expected: (a.len(), 1),
            actual: (b.len(), 1),
        });
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0)) {
        return Err(LfnError::Domain("weighted Jaccard needs non-negative entries".into()));
    }
    let (mut lo, mut hi) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        lo += x.min(*y);
        hi += x.max(*y);
    }
    if hi == 0.0 {
        return Err(LfnError::Degenerate("both vectors are all zero".into()));
    }
    Ok(1.0 - lo / hi)
}

/// Weighted Jaccard distance between two density matrices, flattened over
/// every cell so edges absent from one network count as zero density.
pub fn matrix_jaccard_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let av: Vec<f64> = a.iter().copied().collect();
    let bv: Vec<f64> = b.iter().copied().collect();
    weighted_jaccard_distance(&av, &bv)
}

/// Average weighted clustering coefficient of a flow matrix.
///
/// The directed matrix is symmetrised by summing `w_ij + w_ji`, self-loops
/// are dropped and weights are divided by the largest one. Each node scores
/// the mean geometric-mean intensity of the triangles through it, over the
/// `k (k - 1)` ordered neighbour pairs; nodes with fewer than two neighbours
/// score 0.
pub fn weighted_clustering(matrix: &Array2<f64>) -> Result<f64> {
    let (n, c) = matrix.dim();
    if n != c {
        return Err(LfnError::ShapeMismatch {
            expected: (n, n),
            actual: (n, c),
        });
    }
    if matrix.iter().any(|v| !(*v >= 0.0)) {
        return Err(LfnError::Domain("clustering needs non-negative weights".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut w = matrix + &matrix.t();
    w.diag_mut().fill(0.0);
    let max = w.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0.0);
    }
    w.mapv_inplace(|v| (v / max).cbrt());

    let mut total = 0.0;
    for i in 0..n {
        let neighbours: Vec<usize> = (0..n).filter(|&j| w[[i, j]] > 0.0).collect();
        let k = neighbours.len();
        if k < 2 {
            continue;
        }
        let mut intensity = 0.0;
        for (a, &j) in neighbours.iter().enumerate() {
            for &h in &neighbours[a + 1..] {
                intensity += w[[i, j]] * w[[i, h]] * w[[j, h]];
            }
        }
        total += 2.0 * intensity / (k * (k - 1)) as f64;
    }
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub dimension: Dimension,
    pub pearson: f64,
    pub frobenius: f64,
    pub cells: usize,
}

/// Agreement between simulated and observed flows per dimension, plus a
/// total weighted by each dimension's number of cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub pearson: f64,
    pub frobenius: f64,
    pub dimensions: Vec<DimensionFit>,
}

impl FitReport {
    pub fn from_parts(dimensions: Vec<DimensionFit>) -> Self {
        let cells: usize = dimensions.iter().map(|d| d.cells).sum();
        let weighted = |f: fn(&DimensionFit) -> f64| {
            dimensions.iter().map(|d| f(d) * d.cells as f64).sum::<f64>() / cells as f64
        };
        FitReport {
            pearson: weighted(|d| d.pearson),
            frobenius: weighted(|d| d.frobenius),
            dimensions,
        }
    }

    pub fn compare(sim: &FlowTriple, obs: &FlowTriple) -> Result<Self> {
        let mut parts = Vec::with_capacity(3);
        for dim in Dimension::ALL {
            let (s, o) = (&sim.get(dim).0, &obs.get(dim).0);
            parts.push(DimensionFit {
                dimension: dim,
                pearson: pearson(s, o)?,
                frobenius: frobenius_distance(s, o)?,
                cells: s.len(),
            });
        }
        Ok(FitReport::from_parts(parts))
    }

    pub fn get(&self, dim: Dimension) -> Option<&DimensionFit> {
        self.dimensions.iter().find(|d| d.dimension == dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_relative_eq!(pearson(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&a, &array![[2.0, 4.0], [6.0, 8.0]]).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&a, &(7.0 - &a)).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            pearson(&a, &Array2::from_elem((2, 2), 0.25)),
            Err(LfnError::Degenerate(_))
        ));
        assert!(pearson(&a, &Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let a = array![[0.2, 0.1], [0.5, 0.2]];
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        let diff = array![[3.0, 4.0], [0.0, 0.0]];
        assert_relative_eq!(frobenius_distance(&diff, &Array2::zeros((2, 2))).unwrap(), 5.0);
        assert!(frobenius_distance(&a, &Array2::zeros((1, 1))).is_err());
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(weighted_jaccard_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(weighted_jaccard_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(weighted_jaccard_distance(&[2.0, 1.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert!(matches!(
            weighted_jaccard_distance(&[0.0, 0.0], &[0.0, 0.0]),
            Err(LfnError::Degenerate(_))
        ));
    }

    #[test]
    fn clustering_examples() {
        let triangle = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        assert_relative_eq!(weighted_clustering(&triangle).unwrap(), 1.0, epsilon = 1e-12);
        let star = array![
            [0.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0]
        ];
        assert_eq!(weighted_clustering(&star).unwrap(), 0.0);
        let directed = array![[0.5, 0.3, 0.0], [0.0, 0.2, 0.1], [0.2, 0.0, 0.9]];
        let c = weighted_clustering(&directed).unwrap();
        assert_relative_eq!(weighted_clustering(&(&directed * 37.0)).unwrap(), c, epsilon = 1e-12);
        assert!((0.0..=1.0).contains(&c));
        assert_eq!(weighted_clustering(&Array2::zeros((4, 4))).unwrap(), 0.0);
    }

    #[test]
    fn fit_report_weights_by_cells() {
        let r = FitReport::from_parts(vec![
            DimensionFit { dimension: Dimension::Region, pearson: 1.0, frobenius: 0.0, cells: 3 },
            DimensionFit { dimension: Dimension::Industry, pearson: 0.0, frobenius: 1.0, cells: 1 },
        ]);
        assert_relative_eq!(r.pearson, 0.75);
        assert_relative_eq!(r.frobenius, 0.25);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 6).prop_map(|mut v| {
            v[0] += 1e-3;
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn jaccard_is_a_metric(a in vec3(), b in vec3(), c in vec3()) {
            let d = |x: &[f64], y: &[f64]| weighted_jaccard_distance(x, y).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
            if a != b { prop_assert!(d(&a, &b) > 0.0); }
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }

        #[test]
        fn pearson_affine_invariant(
            v in prop::collection::vec(-5.0f64..5.0, 9),
            w in prop::collection::vec(-5.0f64..5.0, 9),
            scale in 0.1f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let a = Array2::from_shape_vec((3, 3), v).unwrap();
            let b = Array2::from_shape_vec((3, 3), w).unwrap();
            if let Ok(r) = pearson(&a, &b) {
                let moved = a.mapv(|x| x * scale + shift);
                prop_assert!((pearson(&moved, &b).unwrap() - r).abs() < 1e-9);
            }
        }

        #[test]
        fn frobenius_triangle_inequality(
            v in prop::collection::vec(-1.0f64..1.0, 27),
        ) {
            let m = |k: usize| Array2::from_shape_vec((3, 3), v[9 * k..9 * (k + 1)].to_vec()).unwrap();
            let (a, b, c) = (m(0), m(1), m(2));
            let d = |x: &Array2<f64>, y: &Array2<f64>| frobenius_distance(x, y).unwrap();
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }
    }
}
