//! Leave-one-out and leave-neighbour-out panels, the decomposition of
//! `Y_rO − Y_r⁰` into a first-order term and the residuals R₁, R₂, and the
//! Δ₁/Δ₂ matrices that split R₁.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimator::{align_to, Alignment, PcFit, TruthOracle};
use crate::linalg::right_pinv_factor;
use crate::model::{FactorStructure, PanelMatrix};

/// Gram matrices with a larger condition number are rejected.
pub const GRAM_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Exclusion {
    Unit(usize),
    /// Columns `lo..=hi`, the window `t−δ..=t+δ` clipped to the panel.
    PeriodNeighborhood { t: usize, delta: usize, lo: usize, hi: usize, clipped: bool },
    UnitNeighborhood { i: usize, neighbors: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOutPanel {
    pub panel: PanelMatrix,
    pub excluded: Exclusion,
    pub fit: PcFit,
    pub alignment: Alignment,
}

fn check_dims(x: &PanelMatrix, truth: &FactorStructure) -> Result<()> {
    if x.values().shape() != truth.common.shape() {
        return Err(Error::ShapeMismatch(format!(
            "panel {:?} vs truth {:?}",
            x.values().shape(),
            truth.common.shape()
        )));
    }
    Ok(())
}

fn finish(
    values: DMatrix<f64>,
    excluded: Exclusion,
    truth: &FactorStructure,
    oracle: &TruthOracle,
    r: usize,
) -> Result<LeaveOutPanel> {
    let panel = PanelMatrix::new(values)?;
    let fit = PcFit::from_matrix(panel.values(), r)?;
    let alignment = align_to(&fit, truth, oracle)?;
    Ok(LeaveOutPanel { panel, excluded, fit, alignment })
}

pub fn leave_one_out(x: &PanelMatrix, truth: &FactorStructure, i: usize, r: usize) -> Result<LeaveOutPanel> {
    leave_one_out_with(x, truth, &TruthOracle::new(truth)?, i, r)
}

/// Row i of `x` replaced by row i of M⁰.
pub fn leave_one_out_with(
    x: &PanelMatrix,
    truth: &FactorStructure,
    oracle: &TruthOracle,
    i: usize,
    r: usize,
) -> Result<LeaveOutPanel> {
    check_dims(x, truth)?;
    let n = x.n_units();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let mut values = x.values().clone();
    values.set_row(i, &truth.common.row(i));
    finish(values, Exclusion::Unit(i), truth, oracle, r)
}

pub fn leave_neighbor_out(
    x: &PanelMatrix,
    truth: &FactorStructure,
    t: usize,
    delta: usize,
    r: usize,
) -> Result<LeaveOutPanel> {
    leave_neighbor_out_with(x, truth, &TruthOracle::new(truth)?, t, delta, r)
}

/// Columns `t−δ..=t+δ` (clipped to `[0, T)`) replaced by M⁰.
pub fn leave_neighbor_out_with(
    x: &PanelMatrix,
    truth: &FactorStructure,
    oracle: &TruthOracle,
    t: usize,
    delta: usize,
    r: usize,
) -> Result<LeaveOutPanel> {
    check_dims(x, truth)?;
    let len = x.n_periods();
    if t >= len {
        return Err(Error::IndexOutOfRange { index: t, len });
    }
    let lo = t.saturating_sub(delta);
    let hi = t.saturating_add(delta).min(len - 1);
    let clipped = delta > t || t + delta >= len;
    let mut values = x.values().clone();
    for s in lo..=hi {
        values.set_column(s, &truth.common.column(s));
    }
    finish(values, Exclusion::PeriodNeighborhood { t, delta, lo, hi, clipped }, truth, oracle, r)
}

pub fn leave_unit_neighbor_out(
    x: &PanelMatrix,
    truth: &FactorStructure,
    i: usize,
    neighbor_set: &[usize],
    r: usize,
) -> Result<LeaveOutPanel> {
    leave_unit_neighbor_out_with(x, truth, &TruthOracle::new(truth)?, i, neighbor_set, r)
}

/// Rows in `neighbor_set` (which must contain `i`) replaced by M⁰.
pub fn leave_unit_neighbor_out_with(
    x: &PanelMatrix,
    truth: &FactorStructure,
    oracle: &TruthOracle,
    i: usize,
    neighbor_set: &[usize],
    r: usize,
) -> Result<LeaveOutPanel> {
    check_dims(x, truth)?;
    let n = x.n_units();
    if let Some(&bad) = neighbor_set.iter().chain(std::iter::once(&i)).find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    if !neighbor_set.contains(&i) {
        return Err(Error::InvalidDescriptor(format!("neighbour set does not contain unit {i}")));
    }
    let mut values = x.values().clone();
    for &j in neighbor_set {
        values.set_row(j, &truth.common.row(j));
    }
    let mut neighbors = neighbor_set.to_vec();
    neighbors.sort_unstable();
    neighbors.dedup();
    finish(values, Exclusion::UnitNeighborhood { i, neighbors }, truth, oracle, r)
}

/// `Y_rO − Y_r⁰ = E Z⁰(Z⁰ᵀZ⁰)^{−1} + R₁ + R₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResiduals {
    pub first_order: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub identity_gap: f64,
}

pub fn decomposition_residuals(
    fit: &PcFit,
    oracle: &TruthOracle,
    al: &Alignment,
    noise: &DMatrix<f64>,
) -> Result<DecompositionResiduals> {
    let (y0, z0) = (oracle.y0(), oracle.z0());
    if noise.shape() != (y0.nrows(), z0.nrows()) {
        return Err(Error::ShapeMismatch(format!("noise {:?}", noise.shape())));
    }
    let z_tilde = &fit.balanced.z * &al.o;
    let p0 = right_pinv_factor(z0, GRAM_COND_MAX)?;
    let pt = right_pinv_factor(&z_tilde, GRAM_COND_MAX)?;
    let r = fit.rank();
    let first_order = noise * &p0;
    let r1 = noise * (&pt - &p0);
    let r2 = y0 * (z0.transpose() * &pt - DMatrix::identity(r, r));
    let lhs = &fit.balanced.y * &al.o - y0;
    let identity_gap = (lhs - &first_order - &r1 - &r2).norm();
    Ok(DecompositionResiduals { first_order, r1, r2, identity_gap })
}

/// Which side of the panel the Δ matrices live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSide {
    /// Unit exclusions: T×r matrices built from Z̃.
    Periods,
    /// Period exclusions: N×r matrices built from Ỹ.
    Units,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrices {
    pub side: DeltaSide,
    pub delta1: DMatrix<f64>,
    pub delta2: DMatrix<f64>,
    /// |R₁ row − Σ ε(δ₁ + δ₂)| for the excluded index (max over coordinates)
    pub reconstruction_gap: f64,
}

/// Δ₁ = W̃^{(−·)} pinv − W⁰ pinv, Δ₂ = W̃ pinv − W̃^{(−·)} pinv with `W = Z` for
/// unit exclusions and `W = Y` for period exclusions, where `A pinv` is
/// `A(AᵀA)^{−1}`.
pub fn delta_matrices(
    full_fit: &PcFit,
    full_al: &Alignment,
    loo: &LeaveOutPanel,
    oracle: &TruthOracle,
    noise: &DMatrix<f64>,
) -> Result<DeltaMatrices> {
    let (side, index) = match &loo.excluded {
        Exclusion::Unit(i) => (DeltaSide::Periods, *i),
        Exclusion::UnitNeighborhood { i, .. } => (DeltaSide::Periods, *i),
        Exclusion::PeriodNeighborhood { t, .. } => (DeltaSide::Units, *t),
    };
    let (w_full, w_loo, w0) = match side {
        DeltaSide::Periods => (&full_fit.balanced.z, &loo.fit.balanced.z, oracle.z0()),
        DeltaSide::Units => (&full_fit.balanced.y, &loo.fit.balanced.y, oracle.y0()),
    };
    let p_full = right_pinv_factor(&(w_full * &full_al.o), GRAM_COND_MAX)?;
    let p_loo = right_pinv_factor(&(w_loo * &loo.alignment.o), GRAM_COND_MAX)?;
    let p0 = right_pinv_factor(w0, GRAM_COND_MAX)?;
    let delta1 = &p_loo - &p0;
    let delta2 = &p_full - &p_loo;

    // R₁ row from its definition, then the sum over the Δ's term by term
    let eps: Vec<f64> = match side {
        DeltaSide::Periods => noise.row(index).iter().copied().collect(),
        DeltaSide::Units => noise.column(index).iter().copied().collect(),
    };
    let r = delta1.ncols();
    let mut gap = 0.0_f64;
    for k in 0..r {
        let r1_entry: f64 = eps.iter().enumerate().map(|(s, e)| e * (p_full[(s, k)] - p0[(s, k)])).sum();
        let mut recon = 0.0;
        for (s, e) in eps.iter().enumerate() {
            recon += e * (delta1[(s, k)] + delta2[(s, k)]);
        }
        gap = gap.max((r1_entry - recon).abs());
    }
    Ok(DeltaMatrices { side, delta1, delta2, reconstruction_gap: gap })
}

/// `‖Y_rO − Y_r^{(−·)}O^{(−·)}‖_F / ‖Y_r‖_F`.
pub fn loo_proximity(full_fit: &PcFit, full_al: &Alignment, loo: &LeaveOutPanel) -> f64 {
    let a = &full_fit.balanced.y * &full_al.o;
    let b = &loo.fit.balanced.y * &loo.alignment.o;
    (a - b).norm() / full_fit.balanced.y.norm()
}
