//! Centered PCA via SVD, projection and back-projection of directions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SsdError};

/// Flips `row` so that its entry of largest magnitude is nonnegative.
/// The first maximal entry wins ties.
pub(crate) fn canonical_sign(row: &mut [f64]) {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = i;
        }
    }
    if row.get(best).is_some_and(|v| *v < 0.0) {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Column means of `x` (n × D).
pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Full principal decomposition of a row set, from which any number of
/// leading components can be taken without refitting.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    mean: DVector<f64>,
    // one row per direction, descending singular value
    directions: DMatrix<f64>,
    singular_values: Vec<f64>,
    total_variance: f64,
    n_samples: usize,
}

impl PcaBasis {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 || d == 0 {
            return Err(SsdError::InsufficientData(format!(
                "PCA needs at least 2 rows, got {n}x{d}"
            )));
        }
        let mean = column_mean(x);
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = centered.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| SsdError::Degenerate("SVD did not produce right singular vectors".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });

        let mut directions = DMatrix::zeros(order.len(), d);
        let mut singular_values = Vec::with_capacity(order.len());
        for (r, &src) in order.iter().enumerate() {
            let mut row: Vec<f64> = v_t.row(src).iter().copied().collect();
            canonical_sign(&mut row);
            directions.row_mut(r).copy_from_slice(&row);
            singular_values.push(svd.singular_values[src]);
        }
        let total_variance: f64 = singular_values.iter().map(|s| s * s).sum();
        Ok(PcaBasis {
            mean,
            directions,
            singular_values,
            total_variance,
            n_samples: n,
        })
    }

    /// Largest admissible K: the centered rank bound `min(n - 1, D)`.
    pub fn max_components(&self) -> usize {
        (self.n_samples - 1).min(self.mean.len())
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Numerical rank of the centered data.
    pub fn rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        let n = self.n_samples.max(self.mean.len()) as f64;
        let tol = top * n * f64::EPSILON;
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    /// Model restricted to the leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        let max = self.max_components();
        if k == 0 || k > max {
            return Err(SsdError::Bounds { k, max });
        }
        if self.total_variance <= 0.0 {
            return Err(SsdError::Degenerate("PCV set has zero variance".into()));
        }
        let explained_variance_ratio: Vec<f64> = self.singular_values[..k]
            .iter()
            .map(|s| s * s / self.total_variance)
            .collect();
        let cumulative_ratio = explained_variance_ratio.iter().sum();
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: self.directions.rows(0, k).into_owned(),
            explained_variance_ratio,
            cumulative_ratio,
        })
    }
}

/// A fitted K-component PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// K × D, orthonormal rows ordered by explained variance.
    pub components: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative_ratio: f64,
}

/// Fits a K-component PCA on the rows of `x` (n × D).
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    if x.nrows() < 3 {
        return Err(SsdError::InsufficientData(format!(
            "PCA needs at least 3 rows, got {}",
            x.nrows()
        )));
    }
    PcaBasis::fit(x)?.truncate(k)
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// Scores of `x` on the components: `components · (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(SsdError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok(&self.components * centered)
    }

    /// Projects every row of `x` (n × D), giving n × K scores.
    pub fn project_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(SsdError::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }

    /// Maps a K-space direction into embedding space. No mean is added.
    pub fn back_project_direction(&self, b: &[f64]) -> Result<DVector<f64>> {
        if b.len() != self.k() {
            return Err(SsdError::DimensionMismatch {
                expected: self.k(),
                got: b.len(),
            });
        }
        Ok(self.components.transpose() * DVector::from_column_slice(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data_is_fully_explained() {
        let u = [1.0, 2.0, -2.0];
        let mean = [0.5, -1.0, 3.0];
        let x = DMatrix::from_fn(6, 3, |i, j| mean[j] + (i as f64 - 2.0) * u[j]);
        let m = pca_fit(&x, 1).unwrap();
        assert!((m.cumulative_ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_rank_cumulative_is_one() {
        let x = random_matrix(8, 5, 3);
        let m = pca_fit(&x, 5).unwrap();
        assert!((m.cumulative_ratio - 1.0).abs() < 1e-10);
        let x = random_matrix(5, 9, 4);
        let m = pca_fit(&x, 4).unwrap();
        assert!((m.cumulative_ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ratios_match_covariance_eigensolve() {
        let x = random_matrix(30, 10, 11);
        let m = pca_fit(&x, 4).unwrap();

        // independent route: eigenvalues of the sample covariance
        let mean = column_mean(&x);
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = c.transpose() * &c / 29.0;
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = vals.iter().sum();
        for (r, v) in m.explained_variance_ratio.iter().zip(&vals) {
            assert!((r - v / total).abs() < 1e-8, "{r} vs {}", v / total);
        }
    }

    #[test]
    fn bounds_are_checked() {
        let x = random_matrix(5, 10, 1);
        assert!(matches!(pca_fit(&x, 0), Err(SsdError::Bounds { .. })));
        assert!(matches!(pca_fit(&x, 5), Err(SsdError::Bounds { k: 5, max: 4 })));
        assert!(pca_fit(&x, 4).is_ok());
        let x = random_matrix(2, 3, 1);
        assert!(matches!(pca_fit(&x, 1), Err(SsdError::InsufficientData(_))));
    }

    #[test]
    fn sign_convention_holds() {
        let m = pca_fit(&random_matrix(20, 6, 5), 6).unwrap();
        for row in m.components.row_iter() {
            let big = row
                .iter()
                .copied()
                .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big >= 0.0);
        }
    }

    #[test]
    fn project_examples() {
        let x = random_matrix(20, 6, 8);
        let m = pca_fit(&x, 3).unwrap();
        let at_mean = m.project(m.mean.as_slice()).unwrap();
        assert!(at_mean.norm() < 1e-12);

        let c = 2.5;
        let shifted: Vec<f64> = (0..6).map(|j| m.mean[j] + c * m.components[(0, j)]).collect();
        let p = m.project(&shifted).unwrap();
        assert!((p[0] - c).abs() < 1e-10);
        assert!(p[1].abs() < 1e-10 && p[2].abs() < 1e-10);

        assert!(matches!(m.project(&[1.0]), Err(SsdError::DimensionMismatch { .. })));
        assert!(matches!(
            m.back_project_direction(&[1.0]),
            Err(SsdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn round_trip_at_full_rank() {
        let x = random_matrix(15, 6, 21);
        let m = pca_fit(&x, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scores = m.project(&v).unwrap();
        let back = m.back_project_direction(scores.as_slice()).unwrap() + &m.mean;
        for j in 0..6 {
            assert!((back[j] - v[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn back_projection_examples() {
        let m = pca_fit(&random_matrix(12, 5, 9), 3).unwrap();
        let e1 = m.back_project_direction(&[1.0, 0.0, 0.0]).unwrap();
        for j in 0..5 {
            assert_eq!(e1[j], m.components[(0, j)]);
        }
        assert!(m.back_project_direction(&[0.0; 3]).unwrap().norm() == 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn orthonormal_isometry(seed in 0u64..1000, b in proptest::collection::vec(-5.0f64..5.0, 4)) {
                let m = pca_fit(&random_matrix(25, 7, seed), 4).unwrap();
                let g = m.components.clone() * m.components.transpose();
                for i in 0..4 {
                    for j in 0..4 {
                        let want = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((g[(i, j)] - want).abs() < 1e-8);
                    }
                }
                let d = m.back_project_direction(&b).unwrap();
                let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((d.norm() - bn).abs() < 1e-8);

                // project ∘ back_project is the identity on directions
                let with_mean = d + &m.mean;
                let p = m.project(with_mean.as_slice()).unwrap();
                for i in 0..4 {
                    prop_assert!((p[i] - b[i]).abs() < 1e-8);
                }

                let sum: f64 = m.explained_variance_ratio.iter().sum();
                prop_assert!(sum <= 1.0 + 1e-10);
                prop_assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
            }

            #[test]
            fn fit_is_bit_stable(seed in 0u64..1000) {
                let x = random_matrix(10, 4, seed);
                prop_assert_eq!(pca_fit(&x, 3).unwrap(), pca_fit(&x, 3).unwrap());
            }
        }
    }
}
