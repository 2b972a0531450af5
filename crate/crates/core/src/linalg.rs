use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Largest condition number accepted for symmetric positive-definite solves.
pub(crate) const MAX_CONDITION: f64 = 1e12;

pub(crate) fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Solves `A x = rhs` for symmetric positive-definite `A`, rejecting systems
/// whose eigenvalue ratio exceeds [`MAX_CONDITION`]. `subset` only labels the error.
pub(crate) fn spd_solve(a: &DMatrix<f64>, rhs: &DVector<f64>, subset: &[usize]) -> Result<DVector<f64>> {
    let ev = sym_eigenvalues(a);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularSystem { subset: subset.to_vec(), condition });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem { subset: subset.to_vec(), condition })?;
    Ok(chol.solve(rhs))
}

/// Columns of `m` listed in `cols`.
pub(crate) fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Least-squares solution of `a x ~ b` via SVD, with relative singular cutoff `rcond`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    if a.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    let svd = svd(a, true);
    let smax = svd.singular_values.max();
    svd.solve(b, rcond * smax).ok()
}

/// SVD iterated to machine precision. The default convergence threshold of
/// `SVD::new` stops early on badly conditioned matrices (reconstruction errors
/// near 1e-7 were observed on moment matrices).
pub(crate) fn svd(a: &DMatrix<f64>, vectors: bool) -> SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    SVD::try_new(a.clone(), vectors, vectors, f64::EPSILON, 0).unwrap_or_else(|| SVD::new(a.clone(), vectors, vectors))
}
