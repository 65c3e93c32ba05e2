//! Simulated panels `X = Λ⁰F⁰ᵀ + E` with weak factors and dependent noise.

mod conditional;
mod loadings;
mod noise;

pub use conditional::{
    ar1_conditional_coefficient, ar1_conditional_mean, ar1_covariance_matrix, gaussian_conditional_oracle,
};
pub use loadings::{gen_loadings, LoadingKind, LoadingScheme, LOADING_TRUNCATION};
pub use noise::{
    ar_autocovariances, ar_burn_in, gen_noise, ma_autocovariances, max_ar_root, CrossDependence, NoiseSpec,
    TemporalDependence, STATIONARITY_BOUND,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::model::{FactorStructure, PanelMatrix};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct DgpDescriptor {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    pub loading_scheme: LoadingScheme,
    pub factor_cov: DMatrix<f64>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl DgpDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidDescriptor("r must be positive".into()));
        }
        if self.n < 2 || self.t < 2 {
            return Err(Error::InvalidDescriptor(format!("panel {}x{} is too small", self.n, self.t)));
        }
        if self.r > self.n.min(self.t) {
            return Err(Error::RankTooLarge { rank: self.r, max: self.n.min(self.t) });
        }
        if self.factor_cov.shape() != (self.r, self.r) || self.loading_scheme.sigma_lambda.shape() != (self.r, self.r) {
            return Err(Error::ShapeMismatch(format!("covariances must be {0}x{0}", self.r)));
        }
        cholesky_lower(&self.factor_cov)?;
        self.loading_scheme.validate()?;
        self.noise.validate(self.n)
    }
}

/// A simulated panel together with the pieces it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelInstance {
    pub panel: PanelMatrix,
    pub truth: FactorStructure,
    pub noise: DMatrix<f64>,
}

/// T×r matrix with rows iid `N(0, Σ_F)`.
pub fn gen_factors<R: Rng + ?Sized>(t: usize, r: usize, sigma_f: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    if sigma_f.shape() != (r, r) {
        return Err(Error::ShapeMismatch(format!("sigma_f is {}x{}, rank {r}", sigma_f.nrows(), sigma_f.ncols())));
    }
    if t < r {
        return Err(Error::InvalidDescriptor(format!("t = {t} < r = {r}")));
    }
    let l = cholesky_lower(sigma_f)?;
    let mut f = DMatrix::zeros(t, r);
    for s in 0..t {
        let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        f.set_row(s, &(&l * z).transpose());
    }
    Ok(f)
}

/// Deterministic in `desc.seed`: loadings, factors and noise each read their
/// own stream.
pub fn assemble_panel(desc: &DgpDescriptor) -> Result<PanelInstance> {
    desc.validate()?;
    let (lambda, alpha_units, bound) =
        gen_loadings(&desc.loading_scheme, desc.n, desc.r, &mut stream(desc.seed, Stream::Loadings))?;
    let f = gen_factors(desc.t, desc.r, &desc.factor_cov, &mut stream(desc.seed, Stream::Factors))?;
    let noise = gen_noise(&desc.noise, desc.n, desc.t, &mut stream(desc.seed, Stream::Noise))?;
    let truth = FactorStructure::new(lambda, f, desc.loading_scheme.effective_alpha(), alpha_units, bound)?;
    let panel = PanelMatrix::new(&truth.common + &noise)?;
    Ok(PanelInstance { panel, truth, noise })
}
