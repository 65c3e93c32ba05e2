use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, sym_sqrt};

/// Truncation point for the standard normal draws behind every loading.
pub const LOADING_TRUNCATION: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingKind {
    /// `λ_i = N^{(α−1)/2} Σ_Λ^{1/2} z_i`, all units equally weak.
    Homogeneous,
    /// `⌈N^α⌉` units with order-one loadings, the rest zero.
    SparseStrong,
    /// Per-unit exponents spread uniformly around α.
    HeterogeneousExponents,
    /// `ΛᵀΛ = O(1)`: the α = 0 boundary where PC is inconsistent.
    FixedNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingScheme {
    pub kind: LoadingKind,
    pub alpha: f64,
    pub sigma_lambda: DMatrix<f64>,
    pub exponent_spread: f64,
}

impl LoadingScheme {
    pub fn homogeneous(alpha: f64, r: usize) -> Self {
        Self {
            kind: LoadingKind::Homogeneous,
            alpha,
            sigma_lambda: DMatrix::identity(r, r),
            exponent_spread: 0.0,
        }
    }

    /// Aggregate exponent of `ΛᵀΛ`, zero for the fixed-norm design.
    pub fn effective_alpha(&self) -> f64 {
        match self.kind {
            LoadingKind::FixedNorm => 0.0,
            _ => self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        cholesky_lower(&self.sigma_lambda)?;
        if self.kind != LoadingKind::FixedNorm && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidScheme(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.exponent_spread >= 0.0 && self.exponent_spread.is_finite()) {
            return Err(Error::InvalidScheme(format!("exponent spread {}", self.exponent_spread)));
        }
        if self.kind == LoadingKind::HeterogeneousExponents && self.alpha - self.exponent_spread > 1.0 {
            return Err(Error::InvalidScheme("every unit exponent exceeds 1".into()));
        }
        Ok(())
    }
}

/// Standard normal truncated to `[-6, 6]` by rejection.
pub(crate) fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= LOADING_TRUNCATION {
            return z;
        }
    }
}

fn draw_row<R: Rng + ?Sized>(root: &DMatrix<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(root.ncols(), |_, _| truncated_normal(rng));
    root * z * scale
}

/// `E[N^{min(α+u, 1) − 1}]` for `u ~ U(−s, s)`.
fn expected_unit_scale(n: f64, alpha: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return n.powf(alpha.min(1.0) - 1.0);
    }
    let upper = spread.min(1.0 - alpha);
    let ln = n.ln();
    let mut integral = if upper > -spread {
        (n.powf(alpha + upper - 1.0) - n.powf(alpha - spread - 1.0)) / ln
    } else {
        0.0
    };
    // mass clipped at α_i = 1 contributes N^0 = 1
    integral += (spread - upper.max(-spread)).max(0.0);
    integral / (2.0 * spread)
}

/// Draw an N×r loading matrix.
///
/// Returns the loadings, the realised per-unit exponents (`-inf` for zero
/// rows) and the constant C of the bound `‖λ_i‖ ≤ C·N^{(α_i−1)/2}`.
pub fn gen_loadings<R: Rng + ?Sized>(
    scheme: &LoadingScheme,
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    if n < r {
        return Err(Error::InvalidDescriptor(format!("n = {n} < r = {r}")));
    }
    if scheme.sigma_lambda.nrows() != r {
        return Err(Error::ShapeMismatch(format!(
            "sigma_lambda is {}x{}, rank {r}",
            scheme.sigma_lambda.nrows(),
            scheme.sigma_lambda.ncols()
        )));
    }
    scheme.validate()?;
    let root = sym_sqrt(&scheme.sigma_lambda)?;
    let root_norm = root.norm();
    let z_bound = LOADING_TRUNCATION * (r as f64).sqrt();
    let nf = n as f64;
    let alpha = scheme.alpha;
    let mut lambda = DMatrix::zeros(n, r);
    let mut alpha_units = vec![alpha; n];

    let bound = match scheme.kind {
        LoadingKind::Homogeneous | LoadingKind::FixedNorm => {
            let a = scheme.effective_alpha();
            let scale = nf.powf((a - 1.0) / 2.0);
            for i in 0..n {
                lambda.set_row(i, &draw_row(&root, scale, rng).transpose());
            }
            alpha_units.fill(a);
            z_bound * root_norm
        }
        LoadingKind::SparseStrong => {
            // the small offset keeps exact powers such as 100^0.5 from rounding up
            let k = (nf.powf(alpha) - 1e-9).ceil() as usize;
            let k = k.clamp(r, n);
            for i in 0..n {
                if i < k {
                    lambda.set_row(i, &draw_row(&root, 1.0, rng).transpose());
                    alpha_units[i] = 1.0;
                } else {
                    alpha_units[i] = f64::NEG_INFINITY;
                }
            }
            z_bound * root_norm
        }
        LoadingKind::HeterogeneousExponents => {
            let s = scheme.exponent_spread;
            let c_n = (nf.powf(alpha) / (nf * expected_unit_scale(nf, alpha, s))).sqrt();
            for i in 0..n {
                let u: f64 = if s > 0.0 { rng.random_range(-s..s) } else { 0.0 };
                let a_i = (alpha + u).min(1.0);
                alpha_units[i] = a_i;
                let scale = c_n * nf.powf((a_i - 1.0) / 2.0);
                lambda.set_row(i, &draw_row(&root, scale, rng).transpose());
            }
            c_n * z_bound * root_norm
        }
    };
    Ok((lambda, alpha_units, bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_scale_matches_quadrature() {
        let (n, a, s) = (500.0_f64, 0.8, 0.4);
        let m = 200_000;
        let mut acc = 0.0;
        for k in 0..m {
            let u = -s + 2.0 * s * (k as f64 + 0.5) / m as f64;
            acc += n.powf((a + u).min(1.0) - 1.0);
        }
        let quad = acc / m as f64;
        assert!((expected_unit_scale(n, a, s) - quad).abs() < 1e-8 * quad.max(1.0));
    }

    #[test]
    fn expected_scale_without_clipping() {
        let (n, a, s) = (400.0_f64, 0.5, 0.2);
        let exact = (n.powf(a + s - 1.0) - n.powf(a - s - 1.0)) / (2.0 * s * n.ln());
        assert!((expected_unit_scale(n, a, s) - exact).abs() < 1e-15);
    }
}
