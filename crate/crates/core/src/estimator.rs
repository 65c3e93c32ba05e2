//! Principal-components fit, the truth-side rotation H⁰, Procrustes
//! alignment and the matching matrices H, H_BN,0, H_BN,1.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{invert, sym_eigen_desc, sym_inv_sqrt, sym_sqrt, vstack};
use crate::model::{
    apply_sign_convention, balanced_vectors, truncated_svd_dense, BalancedFactors, FactorStructure, PanelMatrix,
    TruncatedSvd,
};

pub const TRUTH_RANK_TOL: f64 = 1e-8;
pub const THETA_GAP_TOL: f64 = 1e-8;
pub const PROCRUSTES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcFit {
    pub svd: TruncatedSvd,
    /// Λ̂ = T^{−1/2} U_r D_r
    pub loadings_hat: DMatrix<f64>,
    /// F̂ = √T V_r
    pub factors_hat: DMatrix<f64>,
    pub balanced: BalancedFactors,
}

impl PcFit {
    /// Fit any finite matrix; [`pc_fit`] is the panel entry point.
    pub fn from_matrix(x: &DMatrix<f64>, r: usize) -> Result<Self> {
        let svd = truncated_svd_dense(x, r)?;
        let t = x.ncols() as f64;
        let loadings_hat = &svd.left * DMatrix::from_diagonal(&svd.singular) / t.sqrt();
        let factors_hat = &svd.right * t.sqrt();
        let balanced = balanced_vectors(&svd);
        Ok(Self { svd, loadings_hat, factors_hat, balanced })
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn n_periods(&self) -> usize {
        self.factors_hat.nrows()
    }

    pub fn common_hat(&self) -> DMatrix<f64> {
        &self.loadings_hat * self.factors_hat.transpose()
    }
}

pub fn pc_fit(x: &PanelMatrix, r: usize) -> Result<PcFit> {
    PcFit::from_matrix(x.values(), r)
}

/// Reduced SVD of the noiseless common component with its conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSvd {
    pub svd: TruncatedSvd,
    pub balanced: BalancedFactors,
    /// σ_r(M⁰)
    pub psi_min: f64,
    /// σ_1(M⁰)
    pub psi_max: f64,
    pub kappa: f64,
}

/// SVD of `M⁰ = Λ⁰F⁰ᵀ` through thin QR of both factors and an r×r SVD.
pub fn oracle_svd_of_truth(truth: &FactorStructure) -> Result<TruthSvd> {
    let r = truth.rank;
    let qa = truth.loadings.clone().qr();
    let qb = truth.factors.clone().qr();
    let core = qa.r() * qb.r().transpose();
    let svd = core.svd(true, true);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let (p, wt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut pu = DMatrix::zeros(r, r);
    let mut pv = DMatrix::zeros(r, r);
    let mut s = DVector::zeros(r);
    for (k, &j) in order.iter().enumerate() {
        pu.set_column(k, &p.column(j));
        pv.set_column(k, &wt.row(j).transpose());
        s[k] = svd.singular_values[j];
    }
    let psi_max = s[0];
    let psi_min = s[r - 1];
    let ratio = if psi_max > 0.0 { psi_min / psi_max } else { 0.0 };
    if !(ratio > TRUTH_RANK_TOL) {
        return Err(Error::RankDeficientTruth { ratio });
    }
    let mut left = qa.q() * pu;
    let mut right = qb.q() * pv;
    apply_sign_convention(&mut left, &mut right);
    let svd = TruncatedSvd { left, singular: s, right };
    let balanced = balanced_vectors(&svd);
    Ok(TruthSvd { svd, balanced, psi_min, psi_max, kappa: psi_max / psi_min })
}

/// `Θ = (Λ⁰ᵀΛ⁰)^{1/2} F⁰ᵀF⁰ (Λ⁰ᵀΛ⁰)^{1/2}` without the N^α, T scalings,
/// which leave its eigenvectors unchanged.
pub fn theta_matrix(loadings: &DMatrix<f64>, factors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let root = sym_sqrt(&(loadings.transpose() * loadings))?;
    Ok(&root * (factors.transpose() * factors) * &root)
}

/// H⁰ with `Λ⁰ = T^{−1/2} Y⁰ H⁰^{−ᵀ}` and `F⁰ = √T Z⁰ H⁰`.
pub fn oracle_rotation_h0(truth: &FactorStructure) -> Result<DMatrix<f64>> {
    let tsvd = oracle_svd_of_truth(truth)?;
    let g = theta_eigenvectors(truth, &tsvd)?;
    rotation_h0_from(truth, &tsvd, &g)
}

/// Eigenvectors G of Θ in descending order, each column signed so that
/// `Λ⁰(Λ⁰ᵀΛ⁰)^{−1/2} g_k` points along the k-th left singular vector of M⁰.
pub fn theta_eigenvectors(truth: &FactorStructure, tsvd: &TruthSvd) -> Result<DMatrix<f64>> {
    let r = truth.rank;
    let gram = truth.loadings.transpose() * &truth.loadings;
    let inv_root = sym_inv_sqrt(&gram)?;
    let theta = theta_matrix(&truth.loadings, &truth.factors)?;
    let (vals, mut g) = sym_eigen_desc(&theta);
    let top = vals[0].abs().max(f64::MIN_POSITIVE);
    for k in 1..r {
        let gap = (vals[k - 1] - vals[k]) / top;
        if !(gap >= THETA_GAP_TOL) {
            return Err(Error::DegenerateTheta { gap });
        }
    }
    let basis = &truth.loadings * &inv_root;
    for k in 0..r {
        let u = &basis * g.column(k);
        if u.dot(&tsvd.svd.left.column(k)) < 0.0 {
            g.column_mut(k).neg_mut();
        }
    }
    Ok(g)
}

fn rotation_h0_from(truth: &FactorStructure, tsvd: &TruthSvd, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let root = sym_sqrt(&(truth.loadings.transpose() * &truth.loadings))?;
    let d_inv_root = DMatrix::from_diagonal(&tsvd.svd.singular.map(|s| 1.0 / s.sqrt()));
    let inner = root * g * d_inv_root;
    let inv = invert(&inner).ok_or(Error::RankDeficientTruth { ratio: 0.0 })?;
    Ok(inv / (truth.n_periods() as f64).sqrt())
}

/// Everything about the truth the alignment needs; depends only on M⁰, so
/// leave-out fits share it.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthOracle {
    pub svd: TruthSvd,
    pub g: DMatrix<f64>,
    pub h0: DMatrix<f64>,
}

impl TruthOracle {
    pub fn new(truth: &FactorStructure) -> Result<Self> {
        let svd = oracle_svd_of_truth(truth)?;
        let g = theta_eigenvectors(truth, &svd)?;
        let h0 = rotation_h0_from(truth, &svd, &g)?;
        Ok(Self { svd, g, h0 })
    }

    pub fn y0(&self) -> &DMatrix<f64> {
        &self.svd.balanced.y
    }

    pub fn z0(&self) -> &DMatrix<f64> {
        &self.svd.balanced.z
    }

    /// `[Y⁰; Z⁰]`
    pub fn stacked(&self) -> DMatrix<f64> {
        vstack(self.y0(), self.z0())
    }
}

/// Orthogonal-Procrustes minimiser of `‖aR − b‖_F` over all orthogonal R,
/// reflections included.
pub fn procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let c = a.transpose() * b;
    let svd = c.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > PROCRUSTES_TOL) {
        return Err(Error::DegenerateCrossProduct { ratio });
    }
    Ok(svd.u.unwrap() * svd.v_t.unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub o: DMatrix<f64>,
    pub h0: DMatrix<f64>,
    /// H = (D_r^{1/2} O H⁰)^{−1}
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// H_BN,0 = Λ⁰ᵀΛ⁰ F⁰ᵀF̂ D_r^{−2}
    pub h_bn0: DMatrix<f64>,
    /// H_BN,1 = (F⁰ᵀF̂/T)^{−1}
    pub h_bn1: DMatrix<f64>,
    /// diag(sign(diag O)), the nearest signed identity to O
    pub sign_estimate: DMatrix<f64>,
}

pub fn align(fit: &PcFit, truth: &FactorStructure) -> Result<Alignment> {
    let oracle = TruthOracle::new(truth)?;
    align_to(fit, truth, &oracle)
}

pub fn align_to(fit: &PcFit, truth: &FactorStructure, oracle: &TruthOracle) -> Result<Alignment> {
    let (n, t, r) = (truth.n_units(), truth.n_periods(), truth.rank);
    if fit.loadings_hat.shape() != (n, r) || fit.factors_hat.shape() != (t, r) {
        return Err(Error::ShapeMismatch(format!(
            "fit is {}x{} rank {}, truth {n}x{t} rank {r}",
            fit.loadings_hat.nrows(),
            fit.factors_hat.nrows(),
            fit.rank()
        )));
    }
    let a = vstack(&fit.balanced.y, &fit.balanced.z);
    let o = procrustes(&a, &oracle.stacked())?;
    let d = &fit.svd.singular;
    let h_inv = DMatrix::from_diagonal(&d.map(f64::sqrt)) * &o * &oracle.h0;
    let h = invert(&h_inv).ok_or(Error::DegenerateCrossProduct { ratio: 0.0 })?;
    let cross = truth.factors.transpose() * &fit.factors_hat;
    let h_bn0 = truth.loadings.transpose() * &truth.loadings
        * &cross
        * DMatrix::from_diagonal(&d.map(|s| 1.0 / (s * s)));
    let h_bn1 = invert(&(&cross / t as f64)).ok_or(Error::DegenerateCrossProduct { ratio: 0.0 })?;
    let sign_estimate = DMatrix::from_diagonal(&DVector::from_fn(r, |k, _| if o[(k, k)] < 0.0 { -1.0 } else { 1.0 }));
    Ok(Alignment { o, h0: oracle.h0.clone(), h, h_inv, h_bn0, h_bn1, sign_estimate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// ‖λ̂_i − H^{−1}λ_i⁰‖
    pub per_unit_loading: Vec<f64>,
    /// ‖f̂_t − Hᵀf_t⁰‖
    pub per_period_factor: Vec<f64>,
    /// |m̂_it − m_it⁰|
    pub common_abs: DMatrix<f64>,
    /// Row norms of Λ̂ − Λ⁰H_BN,1^{−1}
    pub bn_loading: Vec<f64>,
}

impl ErrorReport {
    /// One line per unit then one per period:
    /// `kind,index,error,bn_error` with `bn_error` empty for periods.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "index", "error", "bn_error"])?;
        for (i, (e, b)) in self.per_unit_loading.iter().zip(&self.bn_loading).enumerate() {
            w.write_record(["unit", &i.to_string(), &format!("{e:?}"), &format!("{b:?}")])?;
        }
        for (t, e) in self.per_period_factor.iter().enumerate() {
            w.write_record(["period", &t.to_string(), &format!("{e:?}"), ""])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Λ̂ − Λ⁰H^{−ᵀ}`
pub fn loading_error_matrix(fit: &PcFit, truth: &FactorStructure, al: &Alignment) -> DMatrix<f64> {
    &fit.loadings_hat - &truth.loadings * al.h_inv.transpose()
}

/// `F̂ − F⁰H`
pub fn factor_error_matrix(fit: &PcFit, truth: &FactorStructure, al: &Alignment) -> DMatrix<f64> {
    &fit.factors_hat - &truth.factors * &al.h
}

pub fn rotated_errors(fit: &PcFit, truth: &FactorStructure, al: &Alignment) -> ErrorReport {
    let row_norms = |m: DMatrix<f64>| m.row_iter().map(|r| r.norm()).collect::<Vec<_>>();
    let bn_inv = invert(&al.h_bn1).unwrap_or_else(|| DMatrix::from_element(truth.rank, truth.rank, f64::NAN));
    ErrorReport {
        per_unit_loading: row_norms(loading_error_matrix(fit, truth, al)),
        per_period_factor: row_norms(factor_error_matrix(fit, truth, al)),
        common_abs: (fit.common_hat() - &truth.common).abs(),
        bn_loading: row_norms(&fit.loadings_hat - &truth.loadings * bn_inv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_panel() {
        let fit = PcFit::from_matrix(&DMatrix::from_element(1, 1, 2.0), 1).unwrap();
        assert!((fit.loadings_hat[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((fit.factors_hat[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_truth_svd() {
        let truth = FactorStructure::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            1.0,
            vec![1.0; 2],
            1.0,
        )
        .unwrap();
        let o = oracle_svd_of_truth(&truth).unwrap();
        assert!((o.svd.singular[0] - 2f64.sqrt()).abs() < 1e-14);
        let q = 2f64.powf(0.25);
        assert!((o.balanced.y[(0, 0)] - q).abs() < 1e-14 && o.balanced.y[(1, 0)].abs() < 1e-14);
        for j in 0..2 {
            assert!((o.balanced.z[(j, 0)] - 1.0 / q).abs() < 1e-14);
        }
    }

    #[test]
    fn procrustes_identity_and_planted() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, -0.3, 2.0, 0.5, 0.5, 1.5, -1.0]);
        let o = procrustes(&a, &a).unwrap();
        assert!((o - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        let th = 0.7f64;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let refl = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]) * &rot;
        for r0 in [rot, refl] {
            let o = procrustes(&a, &(&a * &r0)).unwrap();
            assert!((o - r0).abs().max() < 1e-10);
        }
    }

    #[test]
    fn procrustes_degenerate() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(procrustes(&a, &a), Err(Error::DegenerateCrossProduct { .. })));
    }
}
