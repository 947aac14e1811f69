//! LASSO by cyclic coordinate descent.
//!
//! Minimizes `(1/2n) * ||y - X b||^2 + alpha * ||b||_1` over slopes `b`, with
//! features standardized internally and the intercept left unpenalized.
//! Convergence is declared when no coefficient moves more than `tol` in one
//! sweep; hitting `max_iter` instead returns the model with a warning flag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::{dot, mean, Standardizer};

use super::{FittedParams, Hyperparameters, ModelKind, RegressionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoParams {
    /// alpha matches the common toolkit default of 1.0, which on pH-scale
    /// targets shrinks every standardized coefficient to zero.
    fn default() -> Self {
        LassoParams {
            alpha: 1.0,
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::InvalidHyperparameter("alpha must be >= 0".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidHyperparameter("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidHyperparameter("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

pub fn fit_lasso(dm: &DesignMatrix, params: &LassoParams) -> Result<RegressionModel> {
    params.validate()?;
    if dm.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "LASSO needs at least 2 rows, got {}",
            dm.rows()
        )));
    }
    let n = dm.rows();
    let p = dm.cols();
    let inv_n = 1.0 / n as f64;

    let standardizer = Standardizer::fit(&dm.x);
    let z = standardizer.transform(&dm.x);
    let columns: Vec<Vec<f64>> = z.columns();
    // (1/n) z_j' z_j; zero for constant columns, which then stay inactive.
    let col_sq: Vec<f64> = columns.iter().map(|c| inv_n * dot(c, c)).collect();

    let y_mean = mean(&dm.y);
    let y_centered: Vec<f64> = dm.y.iter().map(|v| v - y_mean).collect();

    let mut beta = vec![0.0; p];
    let mut residual = y_centered.clone();
    let mut converged = false;
    for _sweep in 0..params.max_iter {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            // rho = (1/n) z_j' r + (1/n) z_j'z_j * old
            let rho = inv_n * dot(&columns[j], &residual) + col_sq[j] * old;
            let new = soft_threshold(rho, params.alpha) / col_sq[j];
            if new != old {
                let delta = new - old;
                for (r, zj) in residual.iter_mut().zip(&columns[j]) {
                    *r -= delta * zj;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    Ok(RegressionModel {
        kind: ModelKind::Lasso,
        feature_names: dm.column_names.clone(),
        hyperparameters: Hyperparameters::Lasso(params.clone()),
        standardizer: Some(standardizer),
        params: FittedParams::Linear {
            slopes: beta,
            intercept: y_mean,
        },
        convergence_warning: (!converged)
            .then(|| format!("coordinate descent did not converge in {} sweeps", params.max_iter)),
    })
}

/// Maximum violation of the LASSO subgradient optimality conditions on the
/// standardized scale: inactive features need `|g_j| <= alpha`, active ones
/// `g_j = alpha * sign(b_j)`, where `g_j = (1/n) z_j' (y_c - Z b)`.
pub fn lasso_kkt_violation(model: &RegressionModel, dm: &DesignMatrix) -> Result<f64> {
    let FittedParams::Linear { slopes, .. } = &model.params else {
        return Err(Error::ModelFormat("not a linear-family model".into()));
    };
    let Hyperparameters::Lasso(params) = &model.hyperparameters else {
        return Err(Error::ModelFormat("not a LASSO model".into()));
    };
    let standardizer = model
        .standardizer
        .as_ref()
        .ok_or_else(|| Error::ModelFormat("LASSO model lacks a standardizer".into()))?;

    let z = standardizer.transform(&dm.x);
    let n_inv = 1.0 / dm.rows() as f64;
    let y_mean = mean(&dm.y);

    let mut residual: Vec<f64> = dm.y.iter().map(|v| v - y_mean).collect();
    for (r_idx, r) in residual.iter_mut().enumerate() {
        *r -= dot(z.row(r_idx), slopes);
    }

    let mut worst = 0.0f64;
    for (j, beta) in slopes.iter().enumerate() {
        let col = z.column(j);
        let g = n_inv * dot(&col, &residual);
        let violation = if *beta == 0.0 {
            (g.abs() - params.alpha).max(0.0)
        } else {
            (g - params.alpha * beta.signum()).abs()
        };
        worst = worst.max(violation);
    }
    Ok(worst)
}
