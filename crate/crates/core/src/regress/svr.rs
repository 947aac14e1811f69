//! Epsilon-insensitive support vector regression, solved in the dual by
//! SMO-style pairwise updates.
//!
//! The dual over `alpha, alpha*` (both in `[0, C]`, sum of differences zero)
//! is treated as 2n box variables with signs. Each iteration picks the
//! maximal violating pair from the KKT bound sets, solves the two-variable
//! subproblem analytically, and updates the cached prediction values `F`.
//! Termination: the largest lower bound on the bias minus the smallest upper
//! bound drops below `tol` (or `max_iter` pairs, which flags the model).
//!
//! Features are standardized internally; the default RBF gamma is
//! `1 / (p * var(Z))` over the standardized matrix `Z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::{dot, Matrix, Standardizer};

use super::{FittedParams, Hyperparameters, ModelKind, RegressionModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum SvrKernel {
    /// `gamma = None` resolves to `1 / (p * var(Z))` at fit time.
    Rbf { gamma: Option<f64> },
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: SvrKernel,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            kernel: SvrKernel::Rbf { gamma: None },
            tol: 1e-3,
            max_iter: 200_000,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(Error::InvalidHyperparameter("C must be > 0".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidHyperparameter("epsilon must be >= 0".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidHyperparameter("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidHyperparameter("max_iter must be >= 1".into()));
        }
        if let SvrKernel::Rbf { gamma: Some(g) } = self.kernel {
            if g.is_nan() || g <= 0.0 {
                return Err(Error::InvalidHyperparameter("gamma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Kernel with all parameters pinned, as stored in fitted models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum ResolvedKernel {
    Rbf { gamma: f64 },
    Linear,
}

impl ResolvedKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ResolvedKernel::Rbf { gamma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * sq).exp()
            }
            ResolvedKernel::Linear => dot(a, b),
        }
    }
}

/// Final dual state, exposed for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrDual {
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub bias: f64,
    /// Dual objective value at the returned solution (minimization form).
    pub objective: f64,
    /// `max(0, m - M)`: residual gap of the KKT bound sets.
    pub kkt_violation: f64,
    pub iterations: usize,
}

/// Lazily materialized kernel rows over the standardized training matrix.
struct KernelCache<'a> {
    z: &'a Matrix,
    kernel: ResolvedKernel,
    rows: Vec<Option<Box<[f64]>>>,
}

impl<'a> KernelCache<'a> {
    fn new(z: &'a Matrix, kernel: ResolvedKernel) -> Self {
        KernelCache {
            z,
            kernel,
            rows: vec![None; z.rows()],
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            let a = self.z.row(i);
            let row: Vec<f64> = (0..self.z.rows())
                .map(|j| self.kernel.eval(a, self.z.row(j)))
                .collect();
            self.rows[i] = Some(row.into_boxed_slice());
        }
        self.rows[i].as_deref().unwrap()
    }

    fn diag(&mut self, i: usize) -> f64 {
        match self.kernel {
            ResolvedKernel::Rbf { .. } => 1.0,
            ResolvedKernel::Linear => dot(self.z.row(i), self.z.row(i)),
        }
    }
}

/// Elementwise variance of the whole matrix (the RBF gamma denominator).
fn total_variance(z: &Matrix) -> f64 {
    let n = z.rows() * z.cols();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for r in 0..z.rows() {
        for v in z.row(r) {
            sum += v;
            sumsq += v * v;
        }
    }
    let mean = sum / n as f64;
    (sumsq / n as f64 - mean * mean).max(0.0)
}

struct SmoState {
    /// theta[t]: alpha_i for t < n, alpha*_i for t >= n.
    theta: Vec<f64>,
    /// F_i = sum_j beta_j K_ij with beta = alpha - alpha*.
    f: Vec<f64>,
    c: f64,
    epsilon: f64,
    n: usize,
}

impl SmoState {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn sample(&self, t: usize) -> usize {
        if t < self.n {
            t
        } else {
            t - self.n
        }
    }

    /// phi_t = (y_i - F_i) - s_t * epsilon: the bias bound contributed by t.
    #[inline]
    fn phi(&self, t: usize, y: &[f64]) -> f64 {
        let i = self.sample(t);
        (y[i] - self.f[i]) - self.sign(t) * self.epsilon
    }

    /// In the lower-bound set: b >= phi_t is required (or t is free).
    #[inline]
    fn in_lower(&self, t: usize) -> bool {
        if t < self.n {
            self.theta[t] < self.c
        } else {
            self.theta[t] > 0.0
        }
    }

    /// In the upper-bound set: b <= phi_t is required (or t is free).
    #[inline]
    fn in_upper(&self, t: usize) -> bool {
        if t < self.n {
            self.theta[t] > 0.0
        } else {
            self.theta[t] < self.c
        }
    }

    /// `(m, i, M, j)`: the extreme bias bounds and their variables.
    fn bounds(&self, y: &[f64]) -> (f64, usize, f64, usize) {
        let mut m = f64::NEG_INFINITY;
        let mut m_at = usize::MAX;
        let mut big_m = f64::INFINITY;
        let mut big_m_at = usize::MAX;
        for t in 0..2 * self.n {
            let phi = self.phi(t, y);
            if self.in_lower(t) && phi > m {
                m = phi;
                m_at = t;
            }
            if self.in_upper(t) && phi < big_m {
                big_m = phi;
                big_m_at = t;
            }
        }
        (m, m_at, big_m, big_m_at)
    }
}

/// Fits epsilon-SVR, also returning the dual state for auditing.
pub fn fit_svr_with_dual(
    dm: &DesignMatrix,
    params: &SvrParams,
) -> Result<(RegressionModel, SvrDual)> {
    params.validate()?;
    if dm.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "SVR needs at least 2 rows, got {}",
            dm.rows()
        )));
    }
    let n = dm.rows();
    let standardizer = Standardizer::fit(&dm.x);
    let z = standardizer.transform(&dm.x);

    let kernel = match params.kernel {
        SvrKernel::Linear => ResolvedKernel::Linear,
        SvrKernel::Rbf { gamma: Some(g) } => ResolvedKernel::Rbf { gamma: g },
        SvrKernel::Rbf { gamma: None } => {
            let denom = dm.cols() as f64 * total_variance(&z);
            ResolvedKernel::Rbf {
                gamma: if denom > 0.0 { 1.0 / denom } else { 1.0 },
            }
        }
    };

    let mut cache = KernelCache::new(&z, kernel);
    let mut state = SmoState {
        theta: vec![0.0; 2 * n],
        f: vec![0.0; n],
        c: params.c,
        epsilon: params.epsilon,
        n,
    };

    let mut iterations = 0usize;
    let (final_m, final_big_m) = loop {
        let (m, i, big_m, j) = state.bounds(&dm.y);
        if m - big_m <= params.tol || iterations >= params.max_iter {
            break (m, big_m);
        }
        iterations += 1;

        let si = state.sign(i);
        let sj = state.sign(j);
        let (a, b) = (state.sample(i), state.sample(j));
        let k_aa = cache.diag(a);
        let k_bb = cache.diag(b);
        let k_ab = cache.row(a)[b];
        let mut curvature = k_aa + k_bb - 2.0 * k_ab;
        if curvature <= 0.0 {
            curvature = 1e-12;
        }

        let unclipped = (m - big_m) / curvature;
        let room_i = if si > 0.0 { state.c - state.theta[i] } else { state.theta[i] };
        let room_j = if sj > 0.0 { state.theta[j] } else { state.c - state.theta[j] };
        let lambda = unclipped.min(room_i).min(room_j);
        if lambda <= 0.0 {
            break (m, big_m);
        }

        state.theta[i] = (state.theta[i] + si * lambda).clamp(0.0, state.c);
        state.theta[j] = (state.theta[j] - sj * lambda).clamp(0.0, state.c);

        // beta_a += lambda, beta_b -= lambda; refresh the cached F.
        let row_a = cache.row(a).to_vec();
        let row_b = cache.row(b);
        for q in 0..n {
            state.f[q] += lambda * (row_a[q] - row_b[q]);
        }
    };

    let bias = if final_m.is_finite() && final_big_m.is_finite() {
        (final_m + final_big_m) / 2.0
    } else if final_m.is_finite() {
        final_m
    } else {
        final_big_m
    };

    let alpha = state.theta[..n].to_vec();
    let alpha_star = state.theta[n..].to_vec();
    let beta: Vec<f64> = alpha
        .iter()
        .zip(&alpha_star)
        .map(|(a, s)| a - s)
        .collect();

    // Dual objective, minimization form:
    // 1/2 sum_i beta_i F_i + eps * sum theta - sum y_i beta_i
    let objective = 0.5 * dot(&beta, &state.f) + params.epsilon * state.theta.iter().sum::<f64>()
        - dot(&dm.y, &beta);
    let kkt_violation = (final_m - final_big_m).max(0.0);
    let converged = kkt_violation <= params.tol;

    let mut support_rows = Vec::new();
    let mut coefficients = Vec::new();
    for (i, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            support_rows.push(z.row(i).to_vec());
            coefficients.push(*b);
        }
    }

    let model = RegressionModel {
        kind: ModelKind::Svr,
        feature_names: dm.column_names.clone(),
        hyperparameters: Hyperparameters::Svr(params.clone()),
        standardizer: Some(standardizer),
        params: FittedParams::Svr {
            support_rows,
            coefficients,
            bias,
            kernel,
        },
        convergence_warning: (!converged).then(|| {
            format!(
                "SMO stopped after {iterations} iterations with KKT gap {kkt_violation:.3e}"
            )
        }),
    };
    Ok((
        model,
        SvrDual {
            alpha,
            alpha_star,
            bias,
            objective,
            kkt_violation,
            iterations,
        },
    ))
}

pub fn fit_svr(dm: &DesignMatrix, params: &SvrParams) -> Result<RegressionModel> {
    fit_svr_with_dual(dm, params).map(|(model, _)| model)
}

/// Dual objective of an arbitrary `(alpha, alpha*)` pair for this problem,
/// evaluated from scratch. Used to compare solvers.
pub fn svr_dual_objective(
    z: &Matrix,
    y: &[f64],
    kernel: ResolvedKernel,
    epsilon: f64,
    alpha: &[f64],
    alpha_star: &[f64],
) -> f64 {
    let n = y.len();
    let beta: Vec<f64> = alpha.iter().zip(alpha_star).map(|(a, s)| a - s).collect();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if beta[j] != 0.0 {
                quad += beta[i] * beta[j] * kernel.eval(z.row(i), z.row(j));
            }
        }
    }
    0.5 * quad + epsilon * (alpha.iter().sum::<f64>() + alpha_star.iter().sum::<f64>())
        - dot(y, &beta)
}
