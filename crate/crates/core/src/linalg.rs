//! Small dense helpers shared by the estimator and inference code.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. The r×r helpers are
//! cheap; the only O(NT·min(N,T)) routine in the crate is the SVD in
//! [`crate::model`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// The input is symmetrised first so that round-off asymmetry does not leak
/// into the eigenvectors.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(k, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sym_power(m, 0.5, 0.0)
}

/// Inverse principal square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sym_power(m, -0.5, f64::MIN_POSITIVE)
}

fn sym_power(m: &DMatrix<f64>, power: f64, floor: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(m);
    let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let mut d = DVector::zeros(vals.len());
    for (k, &v) in vals.iter().enumerate() {
        if v < -1e-12 * scale || (power < 0.0 && v <= floor) {
            return Err(Error::NotSpd(format!("eigenvalue {v:e}")));
        }
        d[k] = v.max(0.0).powf(power);
    }
    Ok(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose())
}

/// Lower Cholesky factor, or `NotSpd`.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::NotSpd(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * m.abs().max().max(1.0) {
        return Err(Error::NotSpd(format!("asymmetry {asym:e}")));
    }
    symmetrize(m)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotSpd("Cholesky factorisation failed".into()))
}

pub fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().try_inverse()?;
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `a (aᵀa)⁻¹`, guarded by the condition number of the Gram matrix.
pub fn right_pinv_factor(a: &DMatrix<f64>, max_cond: f64) -> Result<DMatrix<f64>> {
    let gram = a.transpose() * a;
    let cond = condition_number(&gram);
    if !(cond <= max_cond) {
        return Err(Error::SingularGram { cond });
    }
    let inv = invert(&gram).ok_or(Error::SingularGram { cond })?;
    Ok(a * inv)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Stack two matrices with the same number of columns on top of each other.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Euclidean norm of every row.
pub fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|row| row.norm()).collect()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = sym_sqrt(&m).unwrap();
        assert!((&s * &s - &m).norm() < 1e-12);
        let is = sym_inv_sqrt(&m).unwrap();
        assert!((&is * &m * &is - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn eigen_is_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 3.0, 0.1, 0.0, 0.1, 2.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - m).norm() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_lower(&m), Err(Error::NotSpd(_))));
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(sym_inv_sqrt(&m).is_err());
    }
}
