//! Asymptotic covariances (oracle and plug-in), Wald intervals and
//! studentized errors for loadings, factors and common components.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dgp::{CrossDependence, DgpDescriptor, TemporalDependence};
use crate::error::{Error, Result};
use crate::estimator::{oracle_svd_of_truth, theta_eigenvectors, PcFit};
use crate::linalg::{invert, sym_eigen_desc, sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::model::FactorStructure;

pub const SINGULAR_COV_TOL: f64 = 1e-14;
pub const DEGENERATE_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticObjects {
    pub sigma_lambda: DMatrix<f64>,
    pub sigma_f: DMatrix<f64>,
    /// Diagonal of 𝒟, descending.
    pub d_cal: DVector<f64>,
    pub g_cal: DMatrix<f64>,
    /// 𝒬 = 𝒟𝒢ᵀΣ_Λ^{−1/2}
    pub q_cal: DMatrix<f64>,
    pub phi_lambda_t: DMatrix<f64>,
    pub phi_f_i: DMatrix<f64>,
    /// N^α used to scale the factor covariance.
    pub n_alpha: f64,
    pub n_periods: usize,
}

impl AsymptoticObjects {
    /// Assemble 𝒟, 𝒢, 𝒬 from the limits. Each column of 𝒢 is signed to agree
    /// with the matching column of `g_reference` when one is given, else its
    /// largest-magnitude entry is made positive.
    pub fn from_parts(
        sigma_lambda: DMatrix<f64>,
        sigma_f: DMatrix<f64>,
        phi_lambda_t: DMatrix<f64>,
        phi_f_i: DMatrix<f64>,
        g_reference: Option<&DMatrix<f64>>,
        n_alpha: f64,
        n_periods: usize,
    ) -> Result<Self> {
        let r = sigma_lambda.nrows();
        for (name, m) in [("sigma_f", &sigma_f), ("phi_lambda", &phi_lambda_t), ("phi_f", &phi_f_i)] {
            if m.shape() != (r, r) {
                return Err(Error::ShapeMismatch(format!("{name} is {:?}, expected {r}x{r}", m.shape())));
            }
        }
        let root = sym_sqrt(&sigma_lambda)?;
        let inv_root = sym_inv_sqrt(&sigma_lambda)?;
        let (vals, mut g) = sym_eigen_desc(&(&root * &sigma_f * &root));
        for k in 0..r {
            let flip = match g_reference {
                Some(reference) => g.column(k).dot(&reference.column(k)) < 0.0,
                None => {
                    let col = g.column(k);
                    let big = col.iamax();
                    col[big] < 0.0
                }
            };
            if flip {
                g.column_mut(k).neg_mut();
            }
        }
        if vals.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::SingularQ);
        }
        let d_cal = vals.map(f64::sqrt);
        let q_cal = DMatrix::from_diagonal(&d_cal) * g.transpose() * inv_root;
        Ok(Self { sigma_lambda, sigma_f, d_cal, g_cal: g, q_cal, phi_lambda_t, phi_f_i, n_alpha, n_periods })
    }

    /// 𝒬^{−ᵀ} in closed form, `𝒟^{−1}𝒢ᵀΣ_Λ^{1/2}`.
    pub fn q_inv_t_closed_form(&self) -> Result<DMatrix<f64>> {
        let d_inv = DMatrix::from_diagonal(&self.d_cal.map(|d| 1.0 / d));
        Ok(d_inv * self.g_cal.transpose() * sym_sqrt(&self.sigma_lambda)?)
    }
}

/// Oracle objects for unit i and period t from the generating process.
///
/// Φ_{F,i} = Var(ε_it) Σ_F since factors are serially independent and
/// independent of the noise. Φ_{Λ,t} = N^{−α} Σ_{i,j} λ_iλ_jᵀ Cov(ε_it, ε_jt),
/// which picks up the within-block cross terms under block dependence.
pub fn oracle_objects(desc: &DgpDescriptor, truth: &FactorStructure, i: usize, t: usize) -> Result<AsymptoticObjects> {
    let (n, len) = (truth.n_units(), truth.n_periods());
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if t >= len {
        return Err(Error::IndexOutOfRange { index: t, len });
    }
    let var = desc.noise.marginal_variance();
    let lambda = &truth.loadings;
    let mut phi_lambda = lambda.transpose() * lambda;
    if let CrossDependence::BlockNeighbors { block_size, rho } = desc.noise.cross {
        phi_lambda *= 1.0 - rho;
        let mut start = 0;
        while start < n {
            let b = block_size.min(n - start);
            let s = lambda.rows(start, b).row_sum().transpose();
            phi_lambda += &s * s.transpose() * rho;
            start += b;
        }
    }
    let n_alpha = truth.n_alpha();
    phi_lambda *= var / n_alpha;
    let phi_f = &desc.factor_cov * var;
    let g_ref = oracle_svd_of_truth(truth).and_then(|tsvd| theta_eigenvectors(truth, &tsvd)).ok();
    AsymptoticObjects::from_parts(
        desc.loading_scheme.sigma_lambda.clone(),
        desc.factor_cov.clone(),
        phi_lambda,
        phi_f,
        g_ref.as_ref(),
        n_alpha,
        len,
    )
}

/// 𝒬^{−ᵀ}Φ_{F,i}𝒬^{−1}; divide by T for the covariance of λ̂_i − H^{−1}λ_i⁰.
pub fn avar_loading(obj: &AsymptoticObjects) -> Result<DMatrix<f64>> {
    let q_inv = invert(&obj.q_cal).ok_or(Error::SingularQ)?;
    Ok(symmetrize(&(q_inv.transpose() * &obj.phi_f_i * q_inv)))
}

/// 𝒟^{−2}𝒬Φ_{Λ,t}𝒬ᵀ𝒟^{−2}; divide by N^α for the covariance of
/// f̂_t − Hᵀf_t⁰.
pub fn avar_factor(obj: &AsymptoticObjects) -> Result<DMatrix<f64>> {
    invert(&obj.q_cal).ok_or(Error::SingularQ)?;
    let d2 = DMatrix::from_diagonal(&obj.d_cal.map(|d| 1.0 / (d * d)));
    Ok(symmetrize(&(&d2 * &obj.q_cal * &obj.phi_lambda_t * obj.q_cal.transpose() * &d2)))
}

/// 𝒱_it = N^{−α}λ_iᵀΣ_Λ^{−1}Φ_{Λ,t}Σ_Λ^{−1}λ_i + T^{−1}f_tᵀΣ_F^{−1}Φ_{F,i}Σ_F^{−1}f_t.
pub fn var_common(truth: &FactorStructure, obj: &AsymptoticObjects, i: usize, t: usize) -> Result<f64> {
    if i >= truth.n_units() {
        return Err(Error::IndexOutOfRange { index: i, len: truth.n_units() });
    }
    if t >= truth.n_periods() {
        return Err(Error::IndexOutOfRange { index: t, len: truth.n_periods() });
    }
    let lambda = truth.loadings.row(i).transpose();
    let f = truth.factors.row(t).transpose();
    if lambda.norm() < DEGENERATE_NORM_TOL {
        return Err(Error::DegenerateVariance(format!("loading of unit {i} is zero")));
    }
    if f.norm() < DEGENERATE_NORM_TOL {
        return Err(Error::DegenerateVariance(format!("factor at period {t} is zero")));
    }
    let sl_inv = invert(&obj.sigma_lambda).ok_or_else(|| Error::NotSpd("sigma_lambda".into()))?;
    let sf_inv = invert(&obj.sigma_f).ok_or_else(|| Error::NotSpd("sigma_f".into()))?;
    let a = (lambda.transpose() * &sl_inv * &obj.phi_lambda_t * &sl_inv * &lambda)[(0, 0)];
    let b = (f.transpose() * &sf_inv * &obj.phi_f_i * &sf_inv * &f)[(0, 0)];
    Ok(a / obj.n_alpha + b / obj.n_periods as f64)
}

/// Residuals `X − Λ̂F̂ᵀ`.
pub fn residuals(fit: &PcFit, x: &DMatrix<f64>) -> DMatrix<f64> {
    x - fit.common_hat()
}

/// Bartlett weight `1 − h/(bw+1)`.
pub fn bartlett_weight(h: usize, bandwidth: usize) -> f64 {
    if h > bandwidth {
        0.0
    } else {
        1.0 - h as f64 / (bandwidth as f64 + 1.0)
    }
}

/// `⌈T^{1/3}⌉` under temporal dependence, 0 otherwise.
pub fn default_bandwidth(temporal: &TemporalDependence, t: usize) -> usize {
    match temporal {
        TemporalDependence::Independent => 0,
        _ => (t as f64).cbrt().ceil() as usize,
    }
}

/// Long-run variance of `T^{−1/2}Σ_t f̂_t ε̂_it` with a Bartlett kernel. Under
/// the normalisation F̂ᵀF̂/T = I this is the covariance of λ̂_i before the
/// division by T.
pub fn plugin_avar_loading(fit: &PcFit, x: &DMatrix<f64>, i: usize, bandwidth: usize) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let f = &fit.factors_hat;
    let (t, r) = f.shape();
    let resid: Vec<f64> = (0..t).map(|s| x[(i, s)] - fit.loadings_hat.row(i).dot(&f.row(s))).collect();
    // v_s = f̂_s ε̂_is
    let v = DMatrix::from_fn(t, r, |s, k| f[(s, k)] * resid[s]);
    let mut out = v.transpose() * &v / t as f64;
    for h in 1..=bandwidth.min(t.saturating_sub(1)) {
        let w = bartlett_weight(h, bandwidth);
        let lead = v.rows(h, t - h);
        let lag = v.rows(0, t - h);
        let gamma = lag.transpose() * lead / t as f64;
        out += (&gamma + gamma.transpose()) * w;
    }
    Ok(symmetrize(&out))
}

/// Plug-in covariance of f̂_t − Hᵀf_t⁰,
/// `(Λ̂ᵀΛ̂)^{−1} [Σ_b (Σ_{i∈b} λ̂_i ε̂_it)(·)ᵀ] (Λ̂ᵀΛ̂)^{−1}` over contiguous blocks of
/// `block_size` units (1 for cross-sectional independence).
pub fn plugin_cov_factor(fit: &PcFit, x: &DMatrix<f64>, t: usize, block_size: usize) -> Result<DMatrix<f64>> {
    let len = x.ncols();
    if t >= len {
        return Err(Error::IndexOutOfRange { index: t, len });
    }
    let lam = &fit.loadings_hat;
    let (n, r) = lam.shape();
    let bs = block_size.max(1);
    let mut meat = DMatrix::zeros(r, r);
    let mut start = 0;
    while start < n {
        let b = bs.min(n - start);
        let mut s = DVector::zeros(r);
        for i in start..start + b {
            let e = x[(i, t)] - lam.row(i).dot(&fit.factors_hat.row(t));
            s += lam.row(i).transpose() * e;
        }
        meat += &s * s.transpose();
        start += b;
    }
    let bread = invert(&(lam.transpose() * lam)).ok_or(Error::SingularQ)?;
    Ok(symmetrize(&(&bread * meat * &bread)))
}

/// Plug-in variance of m̂_it, `λ̂_iᵀ V_f λ̂_i + f̂_tᵀ (Φ̂/T) f̂_t`.
pub fn plugin_var_common(
    fit: &PcFit,
    x: &DMatrix<f64>,
    i: usize,
    t: usize,
    bandwidth: usize,
    block_size: usize,
) -> Result<f64> {
    let vf = plugin_cov_factor(fit, x, t, block_size)?;
    let vl = plugin_avar_loading(fit, x, i, bandwidth)? / fit.n_periods() as f64;
    let lam = fit.loadings_hat.row(i).transpose();
    let f = fit.factors_hat.row(t).transpose();
    Ok((lam.transpose() * vf * &lam)[(0, 0)] + (f.transpose() * vl * &f)[(0, 0)])
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    pub center: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub level: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub interval_hits: Vec<bool>,
    /// cov^{−1/2}(center − truth)
    pub studentized: DVector<f64>,
}

/// Per-coordinate Wald intervals `center ± z_{(1+level)/2} √cov_kk`.
pub fn confidence_interval(
    center: &DVector<f64>,
    covariance: &DMatrix<f64>,
    truth: &DVector<f64>,
    level: f64,
) -> Result<ConfidenceReport> {
    let r = center.len();
    if covariance.shape() != (r, r) || truth.len() != r {
        return Err(Error::ShapeMismatch(format!("center {r}, covariance {:?}, truth {}", covariance.shape(), truth.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidDescriptor(format!("level {level} outside (0, 1)")));
    }
    let (vals, vecs) = sym_eigen_desc(covariance);
    let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_eig = vals[r - 1];
    if min_eig < -1e-12 * scale.max(1.0) {
        return Err(Error::NotSpd(format!("covariance eigenvalue {min_eig:e}")));
    }
    if min_eig < SINGULAR_COV_TOL {
        return Err(Error::SingularCovariance { min_eig });
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let half = DVector::from_fn(r, |k, _| z * covariance[(k, k)].sqrt());
    let lower = center - &half;
    let upper = center + &half;
    let interval_hits = (0..r).map(|k| lower[k] <= truth[k] && truth[k] <= upper[k]).collect();
    let inv_root = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();
    let studentized = inv_root * (center - truth);
    Ok(ConfidenceReport {
        center: center.clone(),
        covariance: covariance.clone(),
        level,
        lower,
        upper,
        interval_hits,
        studentized,
    })
}
