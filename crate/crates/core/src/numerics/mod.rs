//! Dense linear algebra helpers and a small LP solver.
//!
//! Storage is `nalgebra`; SVD and symmetric eigendecompositions go through
//! `faer`. This module fixes the conventions (descending singular values,
//! relative rank tolerance).

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

mod lp;

pub use lp::{solve_lp, Bound, LinearProgram, LpSolution, LpStatus};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values at or below `DEFAULT_RANK_TOL * sigma_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin SVD `A = U diag(sigma) V^T` with `sigma` sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }

    /// Number of singular values above `rank_tol * sigma_max`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let cutoff = self.cutoff(rank_tol);
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    fn cutoff(&self, rank_tol: f64) -> f64 {
        rank_tol * self.singular_values.iter().copied().fold(0.0, f64::max)
    }
}

fn require_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn svd(a: &Matrix) -> Result<SvdResult> {
    require_finite(a)?;
    let (r, c) = a.shape();
    let k = r.min(c);
    if k == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(r, 0),
            singular_values: Vector::zeros(0),
            v: Matrix::zeros(c, 0),
        });
    }
    let dec = to_faer(a).thin_svd().map_err(|_| Error::NonFinite)?;
    let s = dec.S().column_vector();
    Ok(SvdResult {
        u: Matrix::from_fn(r, k, |i, j| dec.U()[(i, j)]),
        singular_values: Vector::from_fn(k, |i, _| s[i]),
        v: Matrix::from_fn(c, k, |i, j| dec.V()[(i, j)]),
    })
}

fn to_faer(a: &Matrix) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Moore-Penrose pseudoinverse with relative rank cutoff `rank_tol`.
pub fn pseudoinverse(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    let dec = svd(a)?;
    let cutoff = dec.cutoff(rank_tol);
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > cutoff {
            out += dec.v.column(i) * dec.u.column(i).transpose() / s;
        }
    }
    Ok(out)
}

pub fn numerical_rank(a: &Matrix, rank_tol: f64) -> Result<usize> {
    Ok(svd(a)?.rank(rank_tol))
}

/// Largest `|A_ij - A_ji|`; `NotSymmetric` beyond `1e-10 * max(1, max|A|)`.
pub(crate) fn require_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} is not square",
            a.shape()
        )));
    }
    require_finite(a)?;
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-10 * a.abs().max().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vector> {
    require_symmetric(a)?;
    let sym = to_faer(&((a + a.transpose()) * 0.5));
    let values = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NonFinite)?;
    Ok(Vector::from_vec(values))
}

/// Orthonormal basis (as columns) of the numerical null space of a symmetric
/// PSD matrix. A one-column basis is oriented so its first significant
/// entry is positive.
pub fn nullspace_basis(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    require_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let sym = to_faer(&((a + a.transpose()) * 0.5));
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonFinite)?;
    let values = eig.S().column_vector();
    let scale = (0..n).map(|i| values[i].abs()).fold(0.0, f64::max);
    let cutoff = rank_tol * scale;
    // Eigenvalues come back ascending, so the null directions lead.
    let k = (0..n).take_while(|&i| values[i] <= cutoff).count();
    let mut basis = Matrix::from_fn(n, k, |i, j| eig.U()[(i, j)]);
    if basis.ncols() == 1 {
        if let Some(first) = basis.column(0).iter().copied().find(|v| v.abs() > 1e-8) {
            if first < 0.0 {
                basis.neg_mut();
            }
        }
    }
    Ok(basis)
}
