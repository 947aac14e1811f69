//! Metrics and evaluation protocols.
//!
//! R^2 follows the constant-model-scores-zero convention: a predictor that
//! always answers `mean(y)` gets exactly 0, perfect prediction gets 1, and
//! worse-than-constant predictors go negative. MAE is reported in pH units.
//!
//! Cross-validation shuffles rows with a seeded generator, assigns
//! contiguous folds, and aggregates by the unweighted mean over folds. A
//! validation fold whose targets are constant (always the case for
//! leave-one-out) has no defined R^2; such folds carry `r2: None` and are
//! skipped by the R^2 aggregate, while MAE still counts.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::Matrix;
use crate::par;
use crate::regress::{Hyperparameters, RegressionModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub r2: f64,
    pub mae: f64,
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let ss_res: f64 = y
        .iter()
        .zip(yhat)
        .map(|(v, p)| (v - p) * (v - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    Ok(y.iter().zip(yhat).map(|(v, p)| (v - p).abs()).sum::<f64>() / y.len() as f64)
}

/// Train/validation split protocol. The seed is part of the protocol so
/// every report records how its numbers were produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum Protocol {
    Kfold { k: usize, seed: u64 },
    Holdout { fraction: f64, seed: u64 },
}

impl Protocol {
    pub fn seed(&self) -> u64 {
        match self {
            Protocol::Kfold { seed, .. } | Protocol::Holdout { seed, .. } => *seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Protocol::Kfold { k, .. } => Protocol::Kfold { k, seed },
            Protocol::Holdout { fraction, .. } => Protocol::Holdout { fraction, seed },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Protocol::Kfold { k, .. } if *k < 2 => {
                Err(Error::InvalidConfig("k must be >= 2".into()))
            }
            Protocol::Holdout { fraction, .. }
                if fraction.is_nan() || *fraction <= 0.0 || *fraction >= 1.0 =>
            {
                Err(Error::InvalidConfig("holdout fraction must be in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Protocol::Kfold { k, seed } => format!("{k}-fold cv (seed {seed})"),
            Protocol::Holdout { fraction, seed } => {
                format!("holdout {fraction} (seed {seed})")
            }
        }
    }
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Kfold { k: 5, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// `None` when the fold's validation targets are constant.
    pub r2: Option<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub folds: Vec<FoldMetrics>,
    /// Unweighted mean over folds with a defined R^2; `None` when every
    /// fold was degenerate (leave-one-out).
    pub r2: Option<f64>,
    pub mae: f64,
}

impl EvalOutcome {
    pub fn metrics(&self) -> Option<MetricPair> {
        self.r2.map(|r2| MetricPair { r2, mae: self.mae })
    }
}

fn subset(dm: &DesignMatrix, rows: &[usize]) -> DesignMatrix {
    let mut x = Matrix::zeros(rows.len(), dm.cols());
    let mut y = Vec::with_capacity(rows.len());
    let mut row_fields = Vec::with_capacity(rows.len());
    for (out_r, &r) in rows.iter().enumerate() {
        for c in 0..dm.cols() {
            x.set(out_r, c, dm.x.get(r, c));
        }
        y.push(dm.y[r]);
        row_fields.push(dm.row_fields[r]);
    }
    DesignMatrix {
        x,
        y,
        row_fields,
        column_names: dm.column_names.clone(),
    }
}

fn eval_split(
    dm: &DesignMatrix,
    hp: &Hyperparameters,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldMetrics> {
    let train_dm = subset(dm, train);
    let test_dm = subset(dm, test);
    let model = RegressionModel::fit(hp, &train_dm)?;
    let yhat = model.predict(&test_dm.x, &test_dm.column_names)?;
    let r2 = match r2_score(&test_dm.y, &yhat) {
        Ok(v) => Some(v),
        Err(Error::DegenerateTarget) => None,
        Err(e) => return Err(e),
    };
    Ok(FoldMetrics {
        fold,
        train_rows: train.len(),
        test_rows: test.len(),
        r2,
        mae: mae(&test_dm.y, &yhat)?,
    })
}

fn aggregate(folds: Vec<FoldMetrics>) -> Result<EvalOutcome> {
    let r2s: Vec<f64> = folds.iter().filter_map(|f| f.r2).collect();
    let r2 = (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64);
    let mae = folds.iter().map(|f| f.mae).sum::<f64>() / folds.len() as f64;
    Ok(EvalOutcome { folds, r2, mae })
}

/// Seeded k-fold cross-validation: shuffle, split into contiguous folds
/// (the first `n mod k` folds get the extra row), each row validating
/// exactly once.
pub fn kfold_cv(
    dm: &DesignMatrix,
    hp: &Hyperparameters,
    k: usize,
    seed: u64,
) -> Result<EvalOutcome> {
    let n = dm.rows();
    if k < 2 {
        return Err(Error::InvalidConfig("k must be >= 2".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {n} available rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / k;
    let extra = n % k;
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        bounds.push(bounds[fold] + size);
    }

    let folds = par::map_indexed(k, |fold| {
        let (lo, hi) = (bounds[fold], bounds[fold + 1]);
        let test: Vec<usize> = order[lo..hi].to_vec();
        let train: Vec<usize> = order[..lo]
            .iter()
            .chain(order[hi..].iter())
            .copied()
            .collect();
        eval_split(dm, hp, fold, &train, &test)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    aggregate(folds)
}

/// Single seeded holdout split; `fraction` of rows validate.
pub fn holdout_eval(
    dm: &DesignMatrix,
    hp: &Hyperparameters,
    fraction: f64,
    seed: u64,
) -> Result<EvalOutcome> {
    let n = dm.rows();
    if fraction.is_nan() || fraction <= 0.0 || fraction >= 1.0 {
        return Err(Error::InvalidConfig("holdout fraction must be in (0, 1)".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData("holdout needs at least 2 rows".into()));
    }
    let test_size = ((n as f64) * fraction).round().clamp(1.0, (n - 1) as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at(test_size);
    let fold = eval_split(dm, hp, 0, train, test)?;
    aggregate(vec![fold])
}

/// Runs whichever protocol the config names.
pub fn evaluate(dm: &DesignMatrix, hp: &Hyperparameters, protocol: Protocol) -> Result<EvalOutcome> {
    protocol.validate()?;
    match protocol {
        Protocol::Kfold { k, seed } => kfold_cv(dm, hp, k, seed),
        Protocol::Holdout { fraction, seed } => holdout_eval(dm, hp, fraction, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn design(rows: &[Vec<f64>], y: &[f64]) -> DesignMatrix {
        DesignMatrix {
            x: Matrix::from_rows(rows).unwrap(),
            y: y.to_vec(),
            row_fields: (0..rows.len()).collect(),
            column_names: (0..rows[0].len()).map(|j| format!("x{j}")).collect(),
        }
    }

    #[test]
    fn perfect_fit_scores_one() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn constant_mean_predictor_scores_zero() {
        let y = [1.0, 2.0, 3.0, 10.0];
        let mean = y.iter().sum::<f64>() / 4.0;
        let yhat = [mean; 4];
        let r2 = r2_score(&y, &yhat).unwrap();
        assert!(r2.abs() < 1e-12, "r2 = {r2}");
    }

    #[test]
    fn hand_derived_half() {
        // SS_res = 1, SS_tot = 2 about mean 2.
        let r2 = r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_derived_two_thirds_mae() {
        let m = mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mae_is_homogeneous_in_errors() {
        let y = [1.0, 2.0, 3.0];
        let e1 = [1.5, 2.5, 2.0];
        let e2: Vec<f64> = y.iter().zip(&e1).map(|(t, p)| t + 2.0 * (p - t)).collect();
        assert!((2.0 * mae(&y, &e1).unwrap() - mae(&y, &e2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_target_r2_is_an_error() {
        assert!(matches!(
            r2_score(&[5.0, 5.0], &[5.0, 5.1]),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(r2_score(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    fn linear_design(n: usize) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i as f64).cos()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - 0.5 * r[1] + 2.0).collect();
        design(&rows, &y)
    }

    #[test]
    fn leave_one_out_yields_singleton_folds() {
        let dm = linear_design(5);
        let out = kfold_cv(&dm, &Hyperparameters::Lr, 5, 7).unwrap();
        assert_eq!(out.folds.len(), 5);
        for f in &out.folds {
            assert_eq!(f.test_rows, 1);
            assert_eq!(f.train_rows, 4);
            assert_eq!(f.r2, None);
        }
    }

    #[test]
    fn each_row_validates_exactly_once() {
        let dm = linear_design(23);
        let out = kfold_cv(&dm, &Hyperparameters::Lr, 4, 3).unwrap();
        let total: usize = out.folds.iter().map(|f| f.test_rows).sum();
        assert_eq!(total, 23);
        // First n % k folds carry the extra row.
        assert_eq!(
            out.folds.iter().map(|f| f.test_rows).collect::<Vec<_>>(),
            vec![6, 6, 6, 5]
        );
    }

    #[test]
    fn same_seed_same_outcome() {
        let dm = linear_design(40);
        let a = kfold_cv(&dm, &Hyperparameters::Lr, 5, 11).unwrap();
        let b = kfold_cv(&dm, &Hyperparameters::Lr, 5, 11).unwrap();
        assert_eq!(a, b);
        let c = kfold_cv(&dm, &Hyperparameters::Lr, 5, 12).unwrap();
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn noiseless_linear_data_scores_one_for_any_k() {
        let dm = linear_design(30);
        for k in [2, 3, 5, 10] {
            let out = kfold_cv(&dm, &Hyperparameters::Lr, k, 42).unwrap();
            let r2 = out.r2.unwrap();
            assert!((r2 - 1.0).abs() < 1e-9, "k = {k}, r2 = {r2}");
            assert!(out.mae < 1e-9);
        }
    }

    #[test]
    fn k_larger_than_rows_is_rejected() {
        let dm = linear_design(4);
        assert!(kfold_cv(&dm, &Hyperparameters::Lr, 5, 1).is_err());
    }

    #[test]
    fn holdout_splits_once() {
        let dm = linear_design(50);
        let out = holdout_eval(&dm, &Hyperparameters::Lr, 0.2, 5).unwrap();
        assert_eq!(out.folds.len(), 1);
        assert_eq!(out.folds[0].test_rows, 10);
        assert_eq!(out.folds[0].train_rows, 40);
    }
}
