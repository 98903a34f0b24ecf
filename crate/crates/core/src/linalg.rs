//! Thin wrappers over LAPACK-backed dense routines used by the solver:
//! singular values, full SVD, LU solves, and the dense eigenproblem.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Factorize, JobSvd, Solve, SVDDC, SVD};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {0} x {1}")]
    NotSquare(usize, usize),
    #[error("lapack failure: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),
}

/// All singular values in descending order (divide-and-conquer driver).
pub fn singular_values(a: &Array2<Complex64>) -> Result<Array1<f64>, LinalgError> {
    let (_, s, _) = a.svddc(JobSvd::None)?;
    Ok(s)
}

/// Smallest singular value.
pub fn sigma_min(a: &Array2<Complex64>) -> Result<f64, LinalgError> {
    let s = singular_values(a)?;
    Ok(s[s.len() - 1])
}

/// Full SVD a = U diag(s) V^H.
pub fn full_svd(
    a: &Array2<Complex64>,
) -> Result<(Array2<Complex64>, Array1<f64>, Array2<Complex64>), LinalgError> {
    let (u, s, vh) = a.svd(true, true)?;
    Ok((u.expect("requested"), s, vh.expect("requested")))
}

/// Right-singular vector for the smallest singular value (approximate null
/// vector when sigma_min is small).
pub fn min_singular_vector(a: &Array2<Complex64>) -> Result<Array1<Complex64>, LinalgError> {
    let (_, s, vh) = full_svd(a)?;
    Ok(vh.row(s.len() - 1).mapv(|c| c.conj()))
}

/// Solves a x = b by LU with partial pivoting for a batch of right-hand
/// sides (columns of b).
pub fn lu_solve_many(
    a: &Array2<Complex64>,
    b: &Array2<Complex64>,
) -> Result<Array2<Complex64>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare(a.nrows(), a.ncols()));
    }
    let f = a.factorize()?;
    let mut out = Array2::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        let x = f.solve(&col.to_owned())?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

/// Solves a x = b for a single right-hand side.
pub fn lu_solve(
    a: &Array2<Complex64>,
    b: &Array1<Complex64>,
) -> Result<Array1<Complex64>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare(a.nrows(), a.ncols()));
    }
    Ok(a.solve(b)?)
}

/// Two-norm condition number sigma_max / sigma_min.
pub fn condition_number(a: &Array2<Complex64>) -> Result<f64, LinalgError> {
    let s = singular_values(a)?;
    Ok(s[0] / s[s.len() - 1])
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eigen(
    a: &Array2<Complex64>,
) -> Result<(Array1<Complex64>, Array2<Complex64>), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare(a.nrows(), a.ncols()));
    }
    Ok(a.eig()?)
}
