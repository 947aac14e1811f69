//! Minimal dense linear algebra: a row-major matrix, an SVD-based
//! least-squares solver, and per-column standardization.
//!
//! The solver uses one-sided Jacobi orthogonalization, which is accurate and
//! simple at the column counts this crate works with (tens of features). For
//! rank-deficient systems it returns the minimum-norm solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(Error::LengthMismatch {
                    expected: ncols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    /// Builds a matrix from column vectors, all of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map(|c| c.len()).unwrap_or(0);
        for c in columns {
            if c.len() != nrows {
                return Err(Error::LengthMismatch {
                    expected: nrows,
                    got: c.len(),
                });
            }
        }
        let mut m = Matrix::zeros(nrows, ncols);
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    /// `self * v` for a vector of length `cols`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(self.row(r), v))
            .collect()
    }

    /// `self^T * v` for a vector of length `rows`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, w) in v.iter().enumerate() {
            let row = self.row(r);
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        if self.rows == 0 {
            return vec![0.0; self.cols];
        }
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, x) in means.iter_mut().zip(self.row(r)) {
                *m += x;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Least-squares solution of `x * beta ~ y` with an intercept.
///
/// Columns of `x` and `y` are centered, the slope system is solved by SVD
/// (minimum-norm on rank deficiency), and the intercept is recovered from
/// the means. Returns `(slopes, intercept)`.
pub fn least_squares_with_intercept(x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "least squares needs at least 2 rows, got {}",
            x.rows()
        )));
    }
    let x_means = x.column_means();
    let y_mean = mean(y);

    let mut centered_cols: Vec<Vec<f64>> = Vec::with_capacity(x.cols());
    for (j, m) in x_means.iter().enumerate() {
        let mut c = x.column(j);
        c.iter_mut().for_each(|v| *v -= m);
        centered_cols.push(c);
    }
    let y_centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let slopes = svd_min_norm_solve(&mut centered_cols, &y_centered);
    let intercept = y_mean - dot(&x_means, &slopes);
    Ok((slopes, intercept))
}

/// Minimum-norm least squares via one-sided Jacobi orthogonalization.
///
/// `cols` is consumed as the working copy of the design columns.
fn svd_min_norm_solve(cols: &mut [Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = cols.len();
    if p == 0 {
        return Vec::new();
    }
    let n = cols[0].len();

    // v accumulates the right-singular-vector rotations.
    let mut v = vec![vec![0.0; p]; p];
    for (j, row) in v.iter_mut().enumerate() {
        row[j] = 1.0;
    }

    let tol = 1e-14;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b, c) = {
                    let (ci, cj) = (&cols[i], &cols[j]);
                    (dot(ci, ci), dot(ci, cj), dot(cj, cj))
                };
                if b.abs() <= tol * (a * c).sqrt() || b == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (c - a) / (2.0 * b);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (lo, hi) = cols.split_at_mut(j);
                for (wi, wj) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (a, b) = (*wi, *wj);
                    *wi = cs * a - sn * b;
                    *wj = sn * a + cs * b;
                }
                for row in v.iter_mut() {
                    let vi = row[i];
                    let vj = row[j];
                    row[i] = cs * vi - sn * vj;
                    row[j] = sn * vi + cs * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigmas: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let sigma_max = sigmas.iter().cloned().fold(0.0, f64::max);
    let cutoff = sigma_max * (n.max(p) as f64) * f64::EPSILON;

    // beta = V * diag(1/sigma) * U^T y, truncating small singular values.
    let mut scaled = vec![0.0; p];
    for j in 0..p {
        if sigmas[j] > cutoff && sigmas[j] > 0.0 {
            let uty = dot(&cols[j], y) / sigmas[j];
            scaled[j] = uty / sigmas[j];
        }
    }
    (0..p)
        .map(|i| (0..p).map(|j| v[i][j] * scaled[j]).sum())
        .collect()
}

/// Per-column mean/standard-deviation transform, stored with fitted models
/// so prediction applies exactly the training-time scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let means = x.column_means();
        let n = x.rows() as f64;
        let mut sds = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (j, v) in x.row(r).iter().enumerate() {
                let d = v - means[j];
                sds[j] += d * d;
            }
        }
        for s in sds.iter_mut() {
            *s = (*s / n).sqrt();
        }
        Standardizer { means, sds }
    }

    /// Constant columns (sd = 0) are shifted to zero and left unscaled.
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..x.rows() {
            for j in 0..x.cols() {
                let sd = if self.sds[j] > 0.0 { self.sds[j] } else { 1.0 };
                out.set(r, j, (x.get(r, j) - self.means[j]) / sd);
            }
        }
        out
    }
}
