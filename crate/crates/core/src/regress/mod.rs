//! Six regression techniques behind one fit/predict/serialize contract.
//!
//! * `lr`    - ordinary least squares via SVD (minimum-norm on rank
//!   deficiency), intercept always included
//! * `lasso` - L1-penalized least squares by cyclic coordinate descent on
//!   internally standardized features
//! * `dtr`   - CART regression tree
//! * `rf`    - bagged CART trees with per-split feature subsampling
//! * `gbrt`  - stagewise residual boosting of depth-limited CART trees
//! * `svr`   - epsilon-insensitive SVR solved in the dual by SMO
//!
//! Fitted models are immutable, safe to share across threads, and serialize
//! to a versioned JSON document that reloads to bit-identical predictions.
//! Hyperparameter defaults follow common toolkit conventions and are
//! documented on each params struct; everything is overridable.

mod forest;
mod gbrt;
mod lasso;
mod ols;
mod svr;
mod tree;

pub use forest::ForestParams;
pub use gbrt::GbrtParams;
pub use lasso::{lasso_kkt_violation, LassoParams};
pub use svr::{svr_dual_objective, SvrDual, SvrKernel, SvrParams};
pub use tree::{Tree, TreeNode, TreeParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::{Matrix, Standardizer};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Lasso,
    Dtr,
    Rf,
    Gbrt,
    Svr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lr,
        ModelKind::Lasso,
        ModelKind::Dtr,
        ModelKind::Rf,
        ModelKind::Gbrt,
        ModelKind::Svr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Lasso => "lasso",
            ModelKind::Dtr => "dtr",
            ModelKind::Rf => "rf",
            ModelKind::Gbrt => "gbrt",
            ModelKind::Svr => "svr",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" => Ok(ModelKind::Lr),
            "lasso" => Ok(ModelKind::Lasso),
            "dtr" => Ok(ModelKind::Dtr),
            "rf" => Ok(ModelKind::Rf),
            "gbrt" => Ok(ModelKind::Gbrt),
            "svr" => Ok(ModelKind::Svr),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Kind-tagged hyperparameter bundle. Bounds are enforced by `validate`,
/// which every fit entry point calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    Lr,
    Lasso(LassoParams),
    Dtr(TreeParams),
    Rf(ForestParams),
    Gbrt(GbrtParams),
    Svr(SvrParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr,
            ModelKind::Lasso => Hyperparameters::Lasso(LassoParams::default()),
            ModelKind::Dtr => Hyperparameters::Dtr(TreeParams::default()),
            ModelKind::Rf => Hyperparameters::Rf(ForestParams::default()),
            ModelKind::Gbrt => Hyperparameters::Gbrt(GbrtParams::default()),
            ModelKind::Svr => Hyperparameters::Svr(SvrParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Lr => ModelKind::Lr,
            Hyperparameters::Lasso(_) => ModelKind::Lasso,
            Hyperparameters::Dtr(_) => ModelKind::Dtr,
            Hyperparameters::Rf(_) => ModelKind::Rf,
            Hyperparameters::Gbrt(_) => ModelKind::Gbrt,
            Hyperparameters::Svr(_) => ModelKind::Svr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparameters::Lr => Ok(()),
            Hyperparameters::Lasso(p) => p.validate(),
            Hyperparameters::Dtr(p) => p.validate(),
            Hyperparameters::Rf(p) => p.validate(),
            Hyperparameters::Gbrt(p) => p.validate(),
            Hyperparameters::Svr(p) => p.validate(),
        }
    }
}

/// Learned state per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "params", rename_all = "lowercase")]
pub enum FittedParams {
    /// Slopes apply to the (possibly standardized) feature matrix.
    Linear { slopes: Vec<f64>, intercept: f64 },
    Tree { tree: Tree },
    Forest { trees: Vec<Tree> },
    Gbrt {
        base: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
        /// Training MSE before any stage, then after each stage.
        train_mse_per_stage: Vec<f64>,
    },
    Svr {
        /// Support rows in standardized feature space.
        support_rows: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        bias: f64,
        kernel: svr::ResolvedKernel,
    },
}

/// A fitted predictor. `feature_names` pins the expected input schema;
/// `standardizer` (LASSO/SVR) is applied to incoming matrices before the
/// learned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    pub hyperparameters: Hyperparameters,
    pub standardizer: Option<Standardizer>,
    pub params: FittedParams,
    pub convergence_warning: Option<String>,
}

impl RegressionModel {
    /// Fits a model of the hyperparameters' kind to a design matrix.
    pub fn fit(hp: &Hyperparameters, dm: &DesignMatrix) -> Result<Self> {
        hp.validate()?;
        match hp {
            Hyperparameters::Lr => ols::fit_ols(dm),
            Hyperparameters::Lasso(p) => lasso::fit_lasso(dm, p),
            Hyperparameters::Dtr(p) => fit_tree(dm, p),
            Hyperparameters::Rf(p) => forest::fit_random_forest(dm, p),
            Hyperparameters::Gbrt(p) => gbrt::fit_gbrt(dm, p),
            Hyperparameters::Svr(p) => svr::fit_svr(dm, p),
        }
    }

    /// Predicts for a matrix whose columns must match `feature_names`.
    pub fn predict(&self, x: &Matrix, column_names: &[String]) -> Result<Vec<f64>> {
        if column_names != self.feature_names.as_slice() {
            let offending = self
                .feature_names
                .iter()
                .zip(column_names.iter())
                .find(|(want, got)| want != got)
                .map(|(want, got)| format!("expected column {want:?}, got {got:?}"))
                .unwrap_or_else(|| {
                    format!(
                        "expected {} columns, got {}",
                        self.feature_names.len(),
                        column_names.len()
                    )
                });
            return Err(Error::SchemaMismatch(offending));
        }
        if x.cols() != self.feature_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "matrix has {} columns, model expects {}",
                x.cols(),
                self.feature_names.len()
            )));
        }
        if x.rows() == 0 {
            return Ok(Vec::new());
        }

        let standardized;
        let x = match &self.standardizer {
            Some(s) => {
                standardized = s.transform(x);
                &standardized
            }
            None => x,
        };

        Ok(match &self.params {
            FittedParams::Linear { slopes, intercept } => (0..x.rows())
                .map(|r| crate::linalg::dot(x.row(r), slopes) + intercept)
                .collect(),
            FittedParams::Tree { tree } => {
                (0..x.rows()).map(|r| tree.predict_row(x.row(r))).collect()
            }
            FittedParams::Forest { trees } => (0..x.rows())
                .map(|r| {
                    let row = x.row(r);
                    trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
                })
                .collect(),
            FittedParams::Gbrt { base, learning_rate, trees, .. } => (0..x.rows())
                .map(|r| {
                    let row = x.row(r);
                    base + learning_rate * trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
                })
                .collect(),
            FittedParams::Svr { support_rows, coefficients, bias, kernel } => (0..x.rows())
                .map(|r| {
                    let row = x.row(r);
                    support_rows
                        .iter()
                        .zip(coefficients)
                        .map(|(sv, c)| c * kernel.eval(sv, row))
                        .sum::<f64>()
                        + bias
                })
                .collect(),
        })
    }

    /// Convenience: predict on the matrix the model was trained against.
    pub fn predict_design(&self, dm: &DesignMatrix) -> Result<Vec<f64>> {
        self.predict(&dm.x, &dm.column_names)
    }

    /// For linear-family models, the slopes and intercept on the *raw*
    /// feature scale (undoing any stored standardizer).
    pub fn linear_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        let FittedParams::Linear { slopes, intercept } = &self.params else {
            return None;
        };
        match &self.standardizer {
            None => Some((slopes.clone(), *intercept)),
            Some(s) => {
                let mut raw = Vec::with_capacity(slopes.len());
                let mut b0 = *intercept;
                for (j, beta) in slopes.iter().enumerate() {
                    let sd = if s.sds[j] > 0.0 { s.sds[j] } else { 1.0 };
                    raw.push(beta / sd);
                    b0 -= beta * s.means[j] / sd;
                }
                Some((raw, b0))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct ModelFile<'a> {
            format_version: u32,
            model: &'a RegressionModel,
        }
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: Option<u32>,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        match probe.format_version {
            Some(v) if v == MODEL_FORMAT_VERSION => {}
            Some(v) => {
                return Err(Error::ModelVersion {
                    found: v,
                    expected: MODEL_FORMAT_VERSION,
                })
            }
            None => {
                return Err(Error::ModelFormat(
                    "missing format_version field".into(),
                ))
            }
        }
        #[derive(Deserialize)]
        struct ModelFile {
            model: RegressionModel,
        }
        let file: ModelFile = serde_json::from_str(text)?;
        Ok(file.model)
    }
}

/// Fits a CART tree (the `dtr` kind).
pub fn fit_tree(dm: &DesignMatrix, params: &TreeParams) -> Result<RegressionModel> {
    params.validate()?;
    if dm.rows() < 1 {
        return Err(Error::InsufficientData("tree needs at least 1 row".into()));
    }
    let columns = dm.x.columns();
    let ctx = tree::GrowContext {
        columns: &columns,
        targets: &dm.y,
        params,
    };
    let fitted = tree::grow_tree(&ctx, (0..dm.rows() as u32).collect(), None);
    Ok(RegressionModel {
        kind: ModelKind::Dtr,
        feature_names: dm.column_names.clone(),
        hyperparameters: Hyperparameters::Dtr(params.clone()),
        standardizer: None,
        params: FittedParams::Tree { tree: fitted },
        convergence_warning: None,
    })
}

pub use lasso::fit_lasso;
pub use ols::fit_ols;
pub use forest::fit_random_forest;
pub use gbrt::fit_gbrt;
pub use svr::{fit_svr, fit_svr_with_dual};
