use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;

/// `E[ε_t | ε_{t−δ−1}, ε_{t+δ+1}]` for a stationary Gaussian AR(1).
pub fn ar1_conditional_mean(phi: f64, delta: usize, eps_left: f64, eps_right: f64) -> Result<f64> {
    if !(phi.abs() < 1.0) {
        return Err(Error::NonStationary { max_root: phi.abs(), bound: 1.0 });
    }
    Ok(ar1_conditional_coefficient(phi, delta) * (eps_left + eps_right))
}

/// `φ^{δ+1} / (1 + φ^{2δ+2})`.
pub fn ar1_conditional_coefficient(phi: f64, delta: usize) -> f64 {
    let a = phi.powi(delta as i32 + 1);
    a / (1.0 + a * a)
}

/// Exact Gaussian conditional mean `Σ_yx Σ_xx⁻¹ x` of a zero-mean vector.
pub fn gaussian_conditional_oracle(
    cov: &DMatrix<f64>,
    observed_idx: &[usize],
    observed_vals: &[f64],
    target_idx: usize,
) -> Result<f64> {
    let n = cov.nrows();
    cholesky_lower(cov)?;
    if observed_idx.len() != observed_vals.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} indices, {} values",
            observed_idx.len(),
            observed_vals.len()
        )));
    }
    for &k in observed_idx.iter().chain(std::iter::once(&target_idx)) {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
    }
    if observed_idx.contains(&target_idx) {
        return Err(Error::ShapeMismatch(format!("target {target_idx} is also observed")));
    }
    let m = observed_idx.len();
    if m == 0 {
        return Ok(0.0);
    }
    let sxx = DMatrix::from_fn(m, m, |a, b| cov[(observed_idx[a], observed_idx[b])]);
    let syx = DVector::from_fn(m, |a, _| cov[(target_idx, observed_idx[a])]);
    let x = DVector::from_column_slice(observed_vals);
    let chol = sxx.cholesky().ok_or_else(|| Error::NotSpd("observed block".into()))?;
    Ok(syx.dot(&chol.solve(&x)))
}

/// `γ(h) = φ^{|h|} / (1 − φ²)` arranged as the covariance of `len`
/// consecutive observations of a unit-innovation AR(1).
pub fn ar1_covariance_matrix(phi: f64, len: usize) -> DMatrix<f64> {
    let g0 = 1.0 / (1.0 - phi * phi);
    DMatrix::from_fn(len, len, |a, b| g0 * phi.powi((a as i32 - b as i32).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_is_zero() {
        assert_eq!(ar1_conditional_mean(0.0, 3, 1.7, -2.0).unwrap(), 0.0);
    }

    #[test]
    fn half_delta_one() {
        let v = ar1_conditional_mean(0.5, 1, 1.0, 1.0).unwrap();
        assert!((v - 0.25 / 1.0625 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_root_rejected() {
        assert!(matches!(ar1_conditional_mean(1.0, 1, 0.0, 0.0), Err(Error::NonStationary { .. })));
        assert!(ar1_conditional_mean(-1.3, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let eye = DMatrix::identity(3, 3);
        assert_eq!(gaussian_conditional_oracle(&eye, &[0, 2], &[1.0, -4.0], 1).unwrap(), 0.0);
        let rho = 0.3;
        let c = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let v = gaussian_conditional_oracle(&c, &[1], &[2.5], 0).unwrap();
        assert!((v - rho * 2.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_rejects_bad_input() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gaussian_conditional_oracle(&c, &[1], &[1.0], 0), Err(Error::NotSpd(_))));
        let eye = DMatrix::identity(2, 2);
        assert!(matches!(
            gaussian_conditional_oracle(&eye, &[2], &[1.0], 0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
