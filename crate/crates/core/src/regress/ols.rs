//! Ordinary least squares.

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::least_squares_with_intercept;

use super::{FittedParams, Hyperparameters, ModelKind, RegressionModel};

/// Fits OLS linear regression with an intercept. The slope system is solved
/// by SVD, so rank-deficient designs get the minimum-norm solution.
pub fn fit_ols(dm: &DesignMatrix) -> Result<RegressionModel> {
    if dm.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "OLS needs at least 2 rows, got {}",
            dm.rows()
        )));
    }
    let (slopes, intercept) = least_squares_with_intercept(&dm.x, &dm.y)?;
    Ok(RegressionModel {
        kind: ModelKind::Lr,
        feature_names: dm.column_names.clone(),
        hyperparameters: Hyperparameters::Lr,
        standardizer: None,
        params: FittedParams::Linear { slopes, intercept },
        convergence_warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::tests::design;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_exact_line() {
        let dm = design(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            &[1.0, 3.0, 5.0, 7.0],
        );
        let model = fit_ols(&dm).unwrap();
        let (slopes, b0) = model.linear_coefficients().unwrap();
        assert!((slopes[0] - 2.0).abs() < 1e-9);
        assert!((b0 - 1.0).abs() < 1e-9);

        // slope 2, intercept 1 at x = 3 predicts 7
        let x = crate::linalg::Matrix::from_rows(&[vec![3.0]]).unwrap();
        let pred = model.predict(&x, &dm.column_names).unwrap();
        assert!((pred[0] - 7.0).abs() < 1e-9);
    }

    #[test]
    fn constant_target_gives_flat_model() {
        let dm = design(
            &[vec![0.0, 1.0], vec![1.0, -2.0], vec![2.0, 0.5], vec![3.0, 2.0]],
            &[5.0, 5.0, 5.0, 5.0],
        );
        let model = fit_ols(&dm).unwrap();
        let (slopes, b0) = model.linear_coefficients().unwrap();
        assert!(slopes.iter().all(|s| s.abs() < 1e-9));
        assert!((b0 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn one_row_is_insufficient() {
        let dm = design(&[vec![1.0]], &[2.0]);
        assert!(matches!(fit_ols(&dm), Err(Error::InsufficientData(_))));
    }

    /// Normal-equations oracle: solve (X'X) b = X'y by Gaussian elimination
    /// with partial pivoting, with an explicit intercept column.
    fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let n = rows.len();
        let p = rows[0].len() + 1;
        let aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![1.0];
                r.extend_from_slice(&rows[i]);
                r
            })
            .collect();
        let mut ata = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                ata[i][j] = (0..n).map(|r| aug[r][i] * aug[r][j]).sum();
            }
            ata[i][p] = (0..n).map(|r| aug[r][i] * y[r]).sum();
        }
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&a, &b| ata[a][col].abs().partial_cmp(&ata[b][col].abs()).unwrap())
                .unwrap();
            ata.swap(col, pivot);
            let pivot_row = ata[col].clone();
            for (row, current) in ata.iter_mut().enumerate() {
                if row != col {
                    let f = current[col] / pivot_row[col];
                    for (dst, src) in current[col..=p].iter_mut().zip(&pivot_row[col..=p]) {
                        *dst -= f * src;
                    }
                }
            }
        }
        (0..p).map(|i| ata[i][p] / ata[i][i]).collect()
    }

    #[test]
    fn matches_normal_equations_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| 1.5 + r.iter().sum::<f64>() + rng.random_range(-0.5..0.5))
                .collect();
            let dm = design(&rows, &y);
            let model = fit_ols(&dm).unwrap();
            let (slopes, b0) = model.linear_coefficients().unwrap();
            let oracle = normal_equations(&rows, &y);
            assert!(
                (b0 - oracle[0]).abs() <= 1e-8 * (1.0 + oracle[0].abs()),
                "intercept {b0} vs {}",
                oracle[0]
            );
            for (j, s) in slopes.iter().enumerate() {
                let o = oracle[j + 1];
                assert!((s - o).abs() <= 1e-8 * (1.0 + o.abs()), "slope {s} vs {o}");
            }
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0] - 2.0 * r[2] + rng.random_range(-0.3..0.3))
            .collect();
        let dm = design(&rows, &y);
        let model = fit_ols(&dm).unwrap();
        let yhat = model.predict_design(&dm).unwrap();
        let residuals: Vec<f64> = y.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        let xtr = dm.x.t_matvec(&residuals);
        for v in xtr {
            assert!(v.abs() < 1e-6, "X'r component {v}");
        }
        assert!(residuals.iter().sum::<f64>().abs() < 1e-6);
    }
}
