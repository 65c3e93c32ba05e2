use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;

/// Largest admissible modulus of an AR characteristic root.
pub const STATIONARITY_BOUND: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum CrossDependence {
    Independent,
    /// Contiguous blocks of `block_size` units, equicorrelated at `rho`
    /// within a block at each date.
    BlockNeighbors { block_size: usize, rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemporalDependence {
    Independent,
    /// `η_t = Σ_k φ_k η_{t−k} + sd·u_t`.
    Ar { coeffs: Vec<f64>, innovation_sd: f64 },
    /// `η_t = sd·(u_t + Σ_k θ_k u_{t−k})`.
    Ma { coeffs: Vec<f64>, innovation_sd: f64 },
}

/// Idiosyncratic noise `ε_it = base_sd · η_it`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub cross: CrossDependence,
    pub temporal: TemporalDependence,
    pub base_sd: f64,
}

impl NoiseSpec {
    pub fn iid(sd: f64) -> Self {
        Self { cross: CrossDependence::Independent, temporal: TemporalDependence::Independent, base_sd: sd }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.base_sd >= 0.0 && self.base_sd.is_finite()) {
            return Err(Error::InvalidDescriptor(format!("base_sd {}", self.base_sd)));
        }
        if let CrossDependence::BlockNeighbors { block_size, rho } = self.cross {
            if block_size == 0 || block_size > n {
                return Err(Error::InvalidBlock { block_size, n });
            }
            block_cholesky(block_size.min(n), rho)?;
        }
        match &self.temporal {
            TemporalDependence::Independent => {}
            TemporalDependence::Ar { coeffs, innovation_sd } => {
                check_sd(*innovation_sd)?;
                let max_root = max_ar_root(coeffs);
                if !(max_root < STATIONARITY_BOUND) {
                    return Err(Error::NonStationary { max_root, bound: STATIONARITY_BOUND });
                }
            }
            TemporalDependence::Ma { coeffs, innovation_sd } => {
                check_sd(*innovation_sd)?;
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidDescriptor("non-finite MA coefficient".into()));
                }
            }
        }
        Ok(())
    }

    /// `Var(ε_it)`.
    pub fn marginal_variance(&self) -> f64 {
        self.base_sd * self.base_sd * self.autocovariances(0)[0]
    }

    /// Autocovariances `γ(0..=max_lag)` of a single row of `η` (before the
    /// `base_sd` scaling).
    pub fn autocovariances(&self, max_lag: usize) -> Vec<f64> {
        match &self.temporal {
            TemporalDependence::Independent => {
                let mut g = vec![0.0; max_lag + 1];
                g[0] = 1.0;
                g
            }
            TemporalDependence::Ar { coeffs, innovation_sd } => ar_autocovariances(coeffs, *innovation_sd, max_lag),
            TemporalDependence::Ma { coeffs, innovation_sd } => ma_autocovariances(coeffs, *innovation_sd, max_lag),
        }
    }

    /// Correlation of `ε_it` and `ε_jt` for `i ≠ j`.
    pub fn cross_correlation(&self, i: usize, j: usize) -> f64 {
        match self.cross {
            CrossDependence::Independent => 0.0,
            CrossDependence::BlockNeighbors { block_size, rho } => {
                if i / block_size == j / block_size {
                    rho
                } else {
                    0.0
                }
            }
        }
    }

    /// Units whose noise is correlated with unit `i`, including `i`.
    pub fn neighbor_set(&self, i: usize, n: usize) -> Vec<usize> {
        match self.cross {
            CrossDependence::Independent => vec![i],
            CrossDependence::BlockNeighbors { block_size, .. } => {
                let start = (i / block_size) * block_size;
                (start..(start + block_size).min(n)).collect()
            }
        }
    }

    /// Default leave-neighbour-out half width: `⌈ln N⌉` for AR, `q` for
    /// MA(q), 0 for serially independent noise.
    pub fn default_delta(&self, n: usize) -> usize {
        match &self.temporal {
            TemporalDependence::Independent => 0,
            TemporalDependence::Ar { .. } => (n as f64).ln().ceil() as usize,
            TemporalDependence::Ma { coeffs, .. } => coeffs.len(),
        }
    }
}

fn check_sd(sd: f64) -> Result<()> {
    if sd > 0.0 && sd.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDescriptor(format!("innovation_sd {sd}")))
    }
}

/// Modulus of the largest eigenvalue of the AR companion matrix.
pub fn max_ar_root(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    if p == 0 {
        return 0.0;
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return f64::INFINITY;
    }
    let mut comp = DMatrix::zeros(p, p);
    for (k, &c) in coeffs.iter().enumerate() {
        comp[(0, k)] = c;
    }
    for k in 1..p {
        comp[(k, k - 1)] = 1.0;
    }
    comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Stationary AR(p) autocovariances from the Yule–Walker equations.
pub fn ar_autocovariances(coeffs: &[f64], sd: f64, max_lag: usize) -> Vec<f64> {
    let p = coeffs.len();
    let m = p + 1;
    // γ(h) − Σ_k φ_k γ(|h − k|) = σ² 1{h = 0}, h = 0..=p
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for h in 0..m {
        a[(h, h)] += 1.0;
        for (k, &phi) in coeffs.iter().enumerate() {
            let lag = (h as isize - (k as isize + 1)).unsigned_abs();
            a[(h, lag)] -= phi;
        }
    }
    b[0] = sd * sd;
    let sol = a.lu().solve(&b).expect("Yule-Walker system of a stationary AR is nonsingular");
    let mut g: Vec<f64> = sol.iter().copied().collect();
    while g.len() <= max_lag {
        let h = g.len();
        g.push(coeffs.iter().enumerate().map(|(k, phi)| phi * g[h - k - 1]).sum());
    }
    g.truncate(max_lag + 1);
    g
}

pub fn ma_autocovariances(coeffs: &[f64], sd: f64, max_lag: usize) -> Vec<f64> {
    let mut theta = vec![1.0];
    theta.extend_from_slice(coeffs);
    (0..=max_lag)
        .map(|h| {
            let s: f64 = (0..theta.len().saturating_sub(h)).map(|k| theta[k] * theta[k + h]).sum();
            sd * sd * s
        })
        .collect()
}

/// Lower Cholesky factor of the b×b equicorrelation matrix.
fn block_cholesky(b: usize, rho: f64) -> Result<DMatrix<f64>> {
    let c = DMatrix::from_fn(b, b, |i, j| if i == j { 1.0 } else { rho });
    cholesky_lower(&c).map_err(|_| Error::NotSpd(format!("equicorrelation {rho} for block size {b}")))
}

/// Cross-sectional innovation sampler: each call fills an N-vector of
/// unit-variance draws with the configured within-block correlation.
struct CrossSampler {
    factors: Vec<(usize, DMatrix<f64>)>,
}

impl CrossSampler {
    fn new(cross: &CrossDependence, n: usize) -> Result<Self> {
        let mut factors = Vec::new();
        match *cross {
            CrossDependence::Independent => {}
            CrossDependence::BlockNeighbors { block_size, rho } => {
                let mut start = 0;
                while start < n {
                    let b = block_size.min(n - start);
                    factors.push((start, block_cholesky(b, rho)?));
                    start += b;
                }
            }
        }
        Ok(Self { factors })
    }

    fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (start, l) in &self.factors {
            let b = l.nrows();
            let z: Vec<f64> = out[*start..start + b].to_vec();
            for i in 0..b {
                out[start + i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            }
        }
    }
}

/// Number of discarded AR steps before the first kept period.
pub fn ar_burn_in(order: usize) -> usize {
    10 * (order + 1) + 50
}

/// Draw an N×T noise matrix.
pub fn gen_noise<R: Rng + ?Sized>(spec: &NoiseSpec, n: usize, t: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    spec.validate(n)?;
    let sampler = CrossSampler::new(&spec.cross, n)?;
    let mut eta = DMatrix::zeros(n, t);
    let mut u = vec![0.0; n];

    match &spec.temporal {
        TemporalDependence::Independent => {
            for s in 0..t {
                sampler.fill(&mut u, rng);
                eta.column_mut(s).copy_from_slice(&u);
            }
        }
        TemporalDependence::Ma { coeffs, innovation_sd } => {
            let q = coeffs.len();
            let mut innov = DMatrix::zeros(n, t + q);
            for s in 0..t + q {
                sampler.fill(&mut u, rng);
                innov.column_mut(s).copy_from_slice(&u);
            }
            for s in 0..t {
                let mut col = innov.column(s + q).clone_owned();
                for (k, &theta) in coeffs.iter().enumerate() {
                    col += innov.column(s + q - k - 1) * theta;
                }
                eta.set_column(s, &(col * *innovation_sd));
            }
        }
        TemporalDependence::Ar { coeffs, innovation_sd } => {
            let p = coeffs.len();
            let burn = ar_burn_in(p);
            let total = burn + t;
            // history[k] holds η_{s−1−k} for every unit
            let mut history = vec![vec![0.0; n]; p];
            if p > 0 {
                // stationary start: the p initial lags have Toeplitz covariance Γ_p,
                // correlated across units exactly as the innovations are
                let g = ar_autocovariances(coeffs, *innovation_sd, p);
                let gamma = DMatrix::from_fn(p, p, |a, b| g[(a as isize - b as isize).unsigned_abs()]);
                let lg = cholesky_lower(&gamma)?;
                let mut w = vec![vec![0.0; n]; p];
                for wk in w.iter_mut() {
                    sampler.fill(wk, rng);
                }
                for (k, hk) in history.iter_mut().enumerate() {
                    for i in 0..n {
                        hk[i] = (0..=k).map(|j| lg[(k, j)] * w[j][i]).sum();
                    }
                }
            }
            for s in 0..total {
                sampler.fill(&mut u, rng);
                let mut cur = vec![0.0; n];
                for i in 0..n {
                    let mut v = innovation_sd * u[i];
                    for k in 0..p {
                        v += coeffs[k] * history[k][i];
                    }
                    cur[i] = v;
                }
                if s >= burn {
                    eta.column_mut(s - burn).copy_from_slice(&cur);
                }
                if p > 0 {
                    history.rotate_right(1);
                    history[0] = cur;
                }
            }
        }
    }
    eta *= spec.base_sd;
    Ok(eta)
}
