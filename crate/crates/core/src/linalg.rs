//! Small dense linear-algebra helpers shared across the pipeline:
//! ridge regression in closed form, spectral radius via Schur, and a
//! row-major JSON representation for matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense matrix in row-major order, the on-disk form used by every artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Data(format!(
                "matrix payload has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Solve `min_M ||M X - Y||_F^2 + lambda ||M||_F^2` in closed form:
/// `M = Y X^T (X X^T + lambda I)^{-1}`, using a Cholesky factorization
/// of the (symmetric positive definite for lambda > 0) normal matrix.
///
/// With `lambda = 0` the normal matrix may be singular; that case returns
/// an error advising a positive ridge parameter.
pub fn ridge_solve(targets: &DMatrix<f64>, inputs: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if targets.ncols() != inputs.ncols() {
        return Err(Error::Data(format!(
            "ridge solve: {} target columns vs {} input columns",
            targets.ncols(),
            inputs.ncols()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }
    let n = inputs.nrows();
    let mut gram = inputs * inputs.transpose();
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::Numeric(
            "ridge normal matrix is singular; use a regularization lambda > 0".to_string(),
        )
    })?;
    // M = Y X^T G^{-1}  <=>  M^T = G^{-1} (X Y^T)
    let rhs = inputs * targets.transpose();
    let mt = chol.solve(&rhs);
    Ok(mt.transpose())
}

/// Spectral radius `max |lambda_i|` of a square real matrix, via the
/// complex eigenvalues of its Schur form. Very sparse matrices can defeat
/// the QR iteration; those fall back to a repeated-squaring growth
/// estimate of `||m^(2^s)||^(1/2^s)`, which converges to the radius.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Data(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Data("spectral radius of an empty matrix".to_string()));
    }
    let max_iter = 100 * m.nrows() + 5000;
    if let Some(schur) = m.clone().try_schur(1.0e-12, max_iter) {
        let eigs = schur.complex_eigenvalues();
        return Ok(eigs.iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    Ok(growth_radius(m))
}

/// Repeated-squaring estimate of the spectral radius: after S squarings of
/// the norm-rescaled matrix, `||m^(2^S)||^(1/2^S)` differs from the radius
/// by a factor `C^(1/2^S)` that vanishes for any fixed conditioning C.
fn growth_radius(m: &DMatrix<f64>) -> f64 {
    let mut a = m.clone();
    let mut log_acc = 0.0f64;
    for s in 0..48 {
        let f = a.norm();
        if f == 0.0 || !f.is_finite() {
            return if f == 0.0 { 0.0 } else { f64::INFINITY };
        }
        log_acc += f.ln() / (1u64 << s) as f64;
        a /= f;
        a = &a * &a;
    }
    let tail = a.norm();
    if tail > 0.0 {
        log_acc += tail.ln() / (1u64 << 48) as f64;
    }
    log_acc.exp()
}

/// Symmetrize in place: `m <- (m + m^T) / 2`. Used to clean up rounding
/// noise on matrices that are symmetric by construction.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Mean of a slice; 0 for empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance of a slice; 0 for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Check that every entry of a vector is finite.
pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
