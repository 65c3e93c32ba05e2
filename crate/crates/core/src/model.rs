//! Panel and factor-structure types plus the truncated SVD they rest on.
//!
//! Panels are stored N×T (units as rows, periods as columns), column-major,
//! so that the common component is `Λ⁰ F⁰ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative gap `(σ_r − σ_{r+1}) / σ_1` below which the rank-r subspace is
/// considered ill-defined.
pub const SPECTRUM_GAP_TOL: f64 = 1e-10;

/// Observed N×T panel `X = (x_it)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix {
    values: DMatrix<f64>,
}

impl PanelMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::InvalidPanel(format!(
                "panel must be at least 2x2, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, t) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidPanel(format!("non-finite entry at ({i}, {t})")));
        }
        Ok(Self { values })
    }

    /// Build from row-major data, one row per unit.
    pub fn from_row_major(n_units: usize, n_periods: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n_units * n_periods {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_units}x{n_periods} panel",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n_units, n_periods, data))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for row in self.values.row_iter() {
            out.extend(row.iter().copied());
        }
        out
    }
}

/// Ground-truth factor structure `M⁰ = Λ⁰ F⁰ᵀ` of a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorStructure {
    pub loadings: DMatrix<f64>,
    pub factors: DMatrix<f64>,
    pub common: DMatrix<f64>,
    pub rank: usize,
    /// Aggregate strength exponent α. Zero only for the fixed-norm boundary
    /// design.
    pub alpha: f64,
    /// Per-unit exponents α_i; `-inf` marks units with a zero loading.
    pub alpha_units: Vec<f64>,
    /// Constant C with `‖λ_i‖ ≤ C · N^((α_i − 1)/2)`.
    pub loading_bound: f64,
}

impl FactorStructure {
    pub fn new(
        loadings: DMatrix<f64>,
        factors: DMatrix<f64>,
        alpha: f64,
        alpha_units: Vec<f64>,
        loading_bound: f64,
    ) -> Result<Self> {
        let rank = loadings.ncols();
        if rank == 0 || factors.ncols() != rank {
            return Err(Error::ShapeMismatch(format!(
                "loadings have {} columns, factors {}",
                loadings.ncols(),
                factors.ncols()
            )));
        }
        if alpha_units.len() != loadings.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} per-unit exponents for {} units",
                alpha_units.len(),
                loadings.nrows()
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidDescriptor(format!("alpha {alpha} outside [0, 1]")));
        }
        let common = &loadings * factors.transpose();
        Ok(Self { loadings, factors, common, rank, alpha, alpha_units, loading_bound })
    }

    pub fn n_units(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.factors.nrows()
    }

    /// `N^α`, the growth rate of `Λ⁰ᵀΛ⁰`.
    pub fn n_alpha(&self) -> f64 {
        (self.n_units() as f64).powf(self.alpha)
    }
}

/// Top-r singular triplets `U_r D_r V_rᵀ` with a deterministic sign.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub left: DMatrix<f64>,
    pub singular: DVector<f64>,
    pub right: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.left * DMatrix::from_diagonal(&self.singular) * self.right.transpose()
    }
}

/// Balanced singular vectors `Y_r = U_r D_r^{1/2}`, `Z_r = V_r D_r^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedFactors {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Flip column signs so that the largest-magnitude entry of each left column
/// is positive; the paired right column follows so `U D Vᵀ` is unchanged.
/// Ties in magnitude resolve to the first index.
pub fn apply_sign_convention(left: &mut DMatrix<f64>, right: &mut DMatrix<f64>) {
    for k in 0..left.ncols() {
        let col = left.column(k);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            left.column_mut(k).neg_mut();
            right.column_mut(k).neg_mut();
        }
    }
}

/// Rank-r truncated SVD of a panel.
pub fn truncated_svd(x: &PanelMatrix, r: usize) -> Result<TruncatedSvd> {
    truncated_svd_dense(x.values(), r)
}

/// Rank-r truncated SVD of any finite dense matrix.
///
/// Fails with `RankTooLarge` when `r > min(N, T)` and with
/// `DegenerateSpectrum` when the boundary singular value is (near-)repeated.
pub fn truncated_svd_dense(x: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, t) = x.shape();
    let max = n.min(t);
    if r == 0 || r > max {
        return Err(Error::RankTooLarge { rank: r, max });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPanel("non-finite entry".into()));
    }

    let (u, s, v) = dense_thin_svd(x);
    let sigma1 = s[0];
    let next = if r < s.len() { s[r] } else { 0.0 };
    let gap = if sigma1 > 0.0 { (s[r - 1] - next) / sigma1 } else { 0.0 };
    if !(gap >= SPECTRUM_GAP_TOL) {
        return Err(Error::DegenerateSpectrum { rank: r, gap });
    }

    let mut left = u.columns(0, r).into_owned();
    let mut right = v.columns(0, r).into_owned();
    apply_sign_convention(&mut left, &mut right);
    Ok(TruncatedSvd { left, singular: s.rows(0, r).into_owned(), right })
}

/// Thin SVD through faer, sequential so results do not depend on the
/// surrounding thread pool. Singular values come back non-increasing.
fn dense_thin_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (n, t) = x.shape();
    faer::set_global_parallelism(faer::Par::Seq);
    let m = faer::Mat::<f64>::from_fn(n, t, |i, j| x[(i, j)]);
    let svd = m.thin_svd().expect("SVD of a finite matrix converges");
    let k = n.min(t);
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(n, k, |i, j| fu[(i, j)]);
    let s = DVector::from_fn(k, |j, _| fs[j]);
    let v = DMatrix::from_fn(t, k, |i, j| fv[(i, j)]);
    (u, s, v)
}

pub fn balanced_vectors(svd: &TruncatedSvd) -> BalancedFactors {
    let root = svd.singular.map(f64::sqrt);
    let d = DMatrix::from_diagonal(&root);
    BalancedFactors { y: &svd.left * &d, z: &svd.right * &d }
}

/// `Λ̂ F̂ᵀ`.
pub fn reconstruct_common(loadings_hat: &DMatrix<f64>, factors_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if loadings_hat.ncols() != factors_hat.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "loadings {}x{} vs factors {}x{}",
            loadings_hat.nrows(),
            loadings_hat.ncols(),
            factors_hat.nrows(),
            factors_hat.ncols()
        )));
    }
    Ok(loadings_hat * factors_hat.transpose())
}
