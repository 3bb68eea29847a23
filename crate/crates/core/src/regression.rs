//! OLS of the outcome on PCA scores, F-test, and the unit semantic gradient.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Result, SsdError};
use crate::reducer::PcaModel;

/// p-values below this are displayed as `<1e-10`.
pub const P_FLOOR: f64 = 1e-10;

/// Ordinary least squares of `y` on `[1, X]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub r2: f64,
    pub r2_adj: f64,
    pub f_stat: f64,
    pub p_value: f64,
    pub residuals: Vec<f64>,
    pub n: usize,
    /// Set when the design was rank deficient and the pseudoinverse was used.
    pub rank_deficient: bool,
    /// Set when `y` was constant.
    pub constant_outcome: bool,
}

impl OlsFit {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    /// Multiple correlation `sqrt(max(r2, 0))`.
    pub fn r(&self) -> f64 {
        self.r2.max(0.0).sqrt()
    }
}

/// `P[F(df1, df2) > f]` through the regularized incomplete beta function.
pub fn f_upper_tail(f: f64, df1: usize, df2: usize) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let x = d2 / (d2 + d1 * f);
    beta_reg(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

/// Renders a p-value, flooring at `<1e-10`.
pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        "<1e-10".to_string()
    } else {
        crate::report::fmt_sig(p)
    }
}

/// Fits `y = alpha + X beta + e` for `X` of shape n × K.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(SsdError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if k == 0 {
        return Err(SsdError::Bounds {
            k,
            max: n.saturating_sub(2),
        });
    }
    if n < k + 2 {
        return Err(SsdError::Bounds {
            k,
            max: n.saturating_sub(2),
        });
    }
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let yv = DVector::from_column_slice(y);

    let svd = design.clone().svd(true, true);
    let top = svd.singular_values.max();
    let tol = top * (n.max(k + 1) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let rank_deficient = rank < k + 1;
    if rank_deficient {
        warn!("design matrix has rank {rank} < {}; using pseudoinverse", k + 1);
    }
    let coef = svd
        .solve(&yv, tol)
        .map_err(|e| SsdError::Degenerate(format!("least squares failed: {e}")))?;

    let fitted = &design * &coef;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();

    let df_model = k as f64;
    let df_resid = (n - k - 1) as f64;
    let constant_outcome = sst == 0.0;
    let (r2, f_stat, p_value) = if constant_outcome {
        warn!("outcome is constant; R² defined as 0");
        (0.0, 0.0, 1.0)
    } else {
        let r2 = 1.0 - sse / sst;
        if sse <= sst * 1e-28 {
            (r2, f64::INFINITY, 0.0)
        } else {
            let f = ((r2 / df_model) / ((1.0 - r2) / df_resid)).max(0.0);
            (r2, f, f_upper_tail(f, k, n - k - 1))
        }
    };
    let r2_adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid;

    Ok(OlsFit {
        alpha: coef[0],
        beta: coef.iter().skip(1).copied().collect(),
        r2,
        r2_adj,
        f_stat,
        p_value,
        residuals,
        n,
        rank_deficient,
        constant_outcome,
    })
}

/// Regression statistics plus the unit gradient in PCA and embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFit {
    pub ols: OlsFit,
    pub beta_norm: f64,
    pub gradient_k: Vec<f64>,
    pub gradient_d: Vec<f64>,
}

impl GradientFit {
    /// Normalizes the coefficients and back-projects them through `pca`.
    pub fn from_ols(ols: OlsFit, pca: &PcaModel) -> Result<Self> {
        let beta_norm = ols.beta_norm();
        if !(beta_norm > 0.0 && beta_norm.is_finite()) {
            return Err(SsdError::Degenerate(
                "regression coefficients are all zero; gradient undefined".into(),
            ));
        }
        let gradient_k: Vec<f64> = ols.beta.iter().map(|b| b / beta_norm).collect();
        let gradient_d = gradient_direction(pca, &gradient_k)?;
        Ok(GradientFit {
            ols,
            beta_norm,
            gradient_k,
            gradient_d,
        })
    }

    pub fn k(&self) -> usize {
        self.gradient_k.len()
    }
}

/// Unit embedding-space direction for a K-space direction.
pub fn gradient_direction(pca: &PcaModel, gradient_k: &[f64]) -> Result<Vec<f64>> {
    let d = pca.back_project_direction(gradient_k)?;
    let norm = d.norm();
    if norm == 0.0 {
        return Err(SsdError::Degenerate("back-projected gradient is zero".into()));
    }
    // renormalize away rounding; components are orthonormal so norm ≈ 1
    Ok(d.iter().map(|v| v / norm).collect())
}

/// Projects the PCVs onto `pca` and fits the outcome.
pub fn fit_gradient(pca: &PcaModel, pcvs: &DMatrix<f64>, y: &[f64]) -> Result<GradientFit> {
    let scores = pca.project_rows(pcvs)?;
    GradientFit::from_ols(fit_ols(&scores, y)?, pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reducer::pca_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, k: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        (x, y)
    }

    /// Normal-equations solve of `[1, X]`, used as the independent oracle.
    fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let (n, k) = x.shape();
        let a = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let ata = a.transpose() * &a;
        let aty = a.transpose() * DVector::from_column_slice(y);
        ata.lu().solve(&aty).unwrap().iter().copied().collect()
    }

    #[test]
    fn perfect_fit() {
        let (x, _) = random(20, 3, 1);
        let y: Vec<f64> = (0..20).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 2)]).collect();
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        assert!(fit.p_value < 1e-10);
        assert_eq!(format_p(fit.p_value), "<1e-10");
    }

    #[test]
    fn constant_outcome() {
        let (x, _) = random(10, 2, 2);
        let fit = fit_ols(&x, &[3.0; 10]).unwrap();
        assert_eq!((fit.r2, fit.f_stat, fit.p_value), (0.0, 0.0, 1.0));
        assert!(fit.constant_outcome);
    }

    #[test]
    fn matches_normal_equations() {
        let (x, y) = random(40, 3, 3);
        let fit = fit_ols(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        assert!((fit.alpha - oracle[0]).abs() < 1e-8);
        for (b, o) in fit.beta.iter().zip(&oracle[1..]) {
            assert!((b - o).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_design_falls_back() {
        let (mut x, y) = random(12, 3, 4);
        for i in 0..12 {
            x[(i, 2)] = 2.0 * x[(i, 0)];
        }
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.r2 >= 0.0 && fit.r2 <= 1.0);
    }

    #[test]
    fn too_few_rows() {
        let (x, y) = random(4, 3, 5);
        assert!(matches!(fit_ols(&x, &y), Err(SsdError::Bounds { .. })));
    }

    #[test]
    fn f_tail_examples() {
        assert_eq!(f_upper_tail(0.0, 3, 7), 1.0);
        assert!((f_upper_tail(4.9646, 1, 10) - 0.05).abs() < 5e-4);
        assert!(f_upper_tail(1e6, 3, 20) < 1e-10);
    }

    #[test]
    fn gradient_is_unit_in_both_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pcvs = DMatrix::from_fn(30, 8, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30)
            .map(|i| pcvs[(i, 0)] + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        let pca = pca_fit(&pcvs, 4).unwrap();
        let g = fit_gradient(&pca, &pcvs, &y).unwrap();
        let nk: f64 = g.gradient_k.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nd: f64 = g.gradient_d.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nk - 1.0).abs() < 1e-10 && (nd - 1.0).abs() < 1e-10);
        assert!(g.ols.r2_adj <= g.ols.r2);
        // recomputing from stored fields is a fixed point
        assert_eq!(gradient_direction(&pca, &g.gradient_k).unwrap(), g.gradient_d);
        assert!((g.beta_norm - g.ols.beta_norm()).abs() == 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn scale_equivariance(seed in 0u64..10_000, c in 0.1f64..50.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pcvs = DMatrix::from_fn(25, 6, |_, _| rng.random_range(-1.0..1.0));
                let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
                let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
                let pca = pca_fit(&pcvs, 3).unwrap();
                let a = fit_gradient(&pca, &pcvs, &y).unwrap();
                let b = fit_gradient(&pca, &pcvs, &yc).unwrap();
                prop_assert!((a.ols.r2 - b.ols.r2).abs() < 1e-9);
                prop_assert!((a.ols.f_stat - b.ols.f_stat).abs() < 1e-6 * a.ols.f_stat.max(1.0));
                prop_assert!((a.ols.p_value - b.ols.p_value).abs() < 1e-9);
                for i in 0..3 {
                    prop_assert!((a.gradient_k[i] - b.gradient_k[i]).abs() < 1e-9);
                    prop_assert!((a.ols.beta[i] * c - b.ols.beta[i]).abs() < 1e-8 * c);
                }
                for (u, v) in a.gradient_d.iter().zip(&b.gradient_d) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }

            #[test]
            fn rotation_covariance(seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (n, k) = (30, 3);
                let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)).qr().q();
                let a = fit_ols(&x, &y).unwrap();
                let b = fit_ols(&(&x * q.transpose()), &y).unwrap();
                let qb = &q * DVector::from_vec(a.beta.clone());
                for i in 0..k {
                    prop_assert!((qb[i] - b.beta[i]).abs() < 1e-8);
                }
                prop_assert!((a.r2 - b.r2).abs() < 1e-10);
                prop_assert!((a.p_value - b.p_value).abs() < 1e-10);
                for (ra, rb) in a.residuals.iter().zip(&b.residuals) {
                    prop_assert!((ra - rb).abs() < 1e-9);
                }
            }

            #[test]
            fn p_value_and_adjusted_r2_bounds(seed in 0u64..10_000) {
                let (x, y) = random(15, 4, seed);
                let fit = fit_ols(&x, &y).unwrap();
                prop_assert!((0.0..=1.0).contains(&fit.p_value));
                prop_assert!(fit.r2_adj <= fit.r2);
            }
        }
    }
}
