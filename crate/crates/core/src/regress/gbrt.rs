//! Gradient-boosted regression trees for squared-error loss.
//!
//! `F_0` is the target mean; each stage fits a depth-limited CART tree to
//! the current residuals and adds it scaled by the learning rate. For
//! squared error the residual fit can only lower training MSE, so the
//! recorded per-stage MSE sequence is nonincreasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::mean;

use super::tree::{grow_tree, GrowContext, TreeParams};
use super::{FittedParams, Hyperparameters, ModelKind, RegressionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    /// Depth limit per stage tree; `None` lifts the limit.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: Some(3),
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl GbrtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::InvalidHyperparameter("n_stages must be >= 1".into()));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.learning_rate > 1.0
        {
            return Err(Error::InvalidHyperparameter(
                "learning_rate must be in (0, 1]".into(),
            ));
        }
        self.tree_params().validate()
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

pub fn fit_gbrt(dm: &DesignMatrix, params: &GbrtParams) -> Result<RegressionModel> {
    params.validate()?;
    if dm.rows() < 1 {
        return Err(Error::InsufficientData("GBRT needs at least 1 row".into()));
    }
    let n = dm.rows();
    let columns = dm.x.columns();
    let tree_params = params.tree_params();

    let base = mean(&dm.y);
    let mut prediction = vec![base; n];
    let mut residual: Vec<f64> = dm.y.iter().zip(&prediction).map(|(y, f)| y - f).collect();

    let mse_of = |residual: &[f64]| residual.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let mut train_mse = Vec::with_capacity(params.n_stages + 1);
    train_mse.push(mse_of(&residual));

    let mut trees = Vec::with_capacity(params.n_stages);
    for _stage in 0..params.n_stages {
        let ctx = GrowContext {
            columns: &columns,
            targets: &residual,
            params: &tree_params,
        };
        let tree = grow_tree(&ctx, (0..n as u32).collect(), None);
        for (i, (f, r)) in prediction.iter_mut().zip(residual.iter_mut()).enumerate() {
            let step = params.learning_rate * tree.predict_row(dm.x.row(i));
            *f += step;
            *r -= step;
        }
        train_mse.push(mse_of(&residual));
        trees.push(tree);
    }

    Ok(RegressionModel {
        kind: ModelKind::Gbrt,
        feature_names: dm.column_names.clone(),
        hyperparameters: Hyperparameters::Gbrt(params.clone()),
        standardizer: None,
        params: FittedParams::Gbrt {
            base,
            learning_rate: params.learning_rate,
            trees,
            train_mse_per_stage: train_mse,
        },
        convergence_warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::tests::design;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noisy_design(seed: u64, n: usize) -> crate::features::DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0].sin() * 2.0 + 0.3 * r[1] + rng.random_range(-0.4..0.4))
            .collect();
        design(&rows, &y)
    }

    #[test]
    fn stage_zero_is_the_target_mean() {
        let dm = noisy_design(1, 50);
        let model = fit_gbrt(&dm, &GbrtParams { n_stages: 3, ..Default::default() }).unwrap();
        let FittedParams::Gbrt { base, train_mse_per_stage, .. } = &model.params else {
            unreachable!()
        };
        let ym = mean(&dm.y);
        assert_eq!(*base, ym);
        // MSE before any stage is the variance of y around its mean.
        let var = dm.y.iter().map(|v| (v - ym) * (v - ym)).sum::<f64>() / dm.rows() as f64;
        assert!((train_mse_per_stage[0] - var).abs() < 1e-12);
        assert_eq!(train_mse_per_stage.len(), 4);
    }

    #[test]
    fn one_full_stage_memorizes_distinct_inputs() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| ((i * 19) % 7) as f64).collect();
        let dm = design(&rows, &y);
        let model = fit_gbrt(
            &dm,
            &GbrtParams {
                n_stages: 1,
                learning_rate: 1.0,
                max_depth: None,
                ..Default::default()
            },
        )
        .unwrap();
        let pred = model.predict_design(&dm).unwrap();
        for (p, t) in pred.iter().zip(&dm.y) {
            assert!((p - t).abs() < 1e-12);
        }
        let FittedParams::Gbrt { train_mse_per_stage, .. } = &model.params else { unreachable!() };
        assert!(train_mse_per_stage[1] < 1e-24);
    }

    #[test]
    fn training_mse_never_increases() {
        for seed in 0..20 {
            let dm = noisy_design(seed, 120);
            let model = fit_gbrt(
                &dm,
                &GbrtParams { n_stages: 40, ..Default::default() },
            )
            .unwrap();
            let FittedParams::Gbrt { train_mse_per_stage, .. } = &model.params else {
                unreachable!()
            };
            for w in train_mse_per_stage.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "stage MSE rose: {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn prediction_uses_learning_rate_scaling() {
        let dm = noisy_design(7, 60);
        let model = fit_gbrt(&dm, &GbrtParams { n_stages: 10, ..Default::default() }).unwrap();
        let FittedParams::Gbrt { base, learning_rate, trees, .. } = &model.params else {
            unreachable!()
        };
        let pred = model.predict_design(&dm).unwrap();
        let manual: Vec<f64> = (0..dm.rows())
            .map(|i| {
                base + learning_rate
                    * trees.iter().map(|t| t.predict_row(dm.x.row(i))).sum::<f64>()
            })
            .collect();
        assert_eq!(pred, manual);
    }
}
