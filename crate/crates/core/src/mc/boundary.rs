use serde::Serialize;

use crate::error::Result;

use super::config::{
    Diagnostics, ExperimentConfig, GridPoint, LoadingConfig, LoadingKindConfig, NoiseConfig, TargetKind, TargetSpec,
    VarianceMode, SCHEMA_VERSION,
};
use super::engine::run_experiment;
use super::output::grid_slope;

/// Factor-error slopes across an N = T grid for the fixed-norm (α = 0)
/// design, a weak design and the strong benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BoundarySummary {
    pub ns: Vec<usize>,
    pub fixed_norm_slope: f64,
    pub weak_alpha: f64,
    pub weak_slope: f64,
    pub strong_slope: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryDesign {
    pub ns: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub weak_alpha: f64,
    /// Σ_Λ for the fixed-norm design; a value above 1 keeps the spike above
    /// the noise edge so the error settles at a nonzero constant.
    pub fixed_norm_scale: f64,
}

impl Default for BoundaryDesign {
    fn default() -> Self {
        Self { ns: vec![100, 200, 400, 800], replications: 100, base_seed: 7, weak_alpha: 0.3, fixed_norm_scale: 4.0 }
    }
}

impl BoundaryDesign {
    pub fn config(&self) -> ExperimentConfig {
        let point = |n: usize, kind, alpha: f64, scale: f64| GridPoint {
            n,
            t: n,
            r: 1,
            loadings: LoadingConfig { kind, alpha, sigma_lambda: Some(vec![vec![scale]]), exponent_spread: 0.0 },
            factor_cov: None,
            noise: NoiseConfig::default(),
        };
        let mut grid = Vec::new();
        for &n in &self.ns {
            grid.push(point(n, LoadingKindConfig::FixedNorm, 1.0, self.fixed_norm_scale));
        }
        for &n in &self.ns {
            grid.push(point(n, LoadingKindConfig::Homogeneous, self.weak_alpha, 1.0));
        }
        for &n in &self.ns {
            grid.push(point(n, LoadingKindConfig::Homogeneous, 1.0, 1.0));
        }
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            replications: self.replications,
            base_seed: self.base_seed,
            ci_level: 0.95,
            variance_mode: VarianceMode::Oracle,
            bandwidth: None,
            targets: vec![TargetSpec { kind: TargetKind::Factor, unit: None, period: None }],
            diagnostics: Diagnostics { decomposition: false, ..Diagnostics::default() },
            grid,
            checks: Vec::new(),
        }
    }
}

pub fn boundary_demo(design: &BoundaryDesign) -> Result<BoundarySummary> {
    let cfg = design.config();
    let run = run_experiment(&cfg, &|_| {})?;
    let k = design.ns.len();
    let ids = |block: usize| (block * k..(block + 1) * k).collect::<Vec<_>>();
    let slope = |block| grid_slope(&cfg, &run.records, &ids(block), TargetKind::Factor).map(|f| f.slope);
    Ok(BoundarySummary {
        ns: design.ns.clone(),
        fixed_norm_slope: slope(0)?,
        weak_alpha: design.weak_alpha,
        weak_slope: slope(1)?,
        strong_slope: slope(2)?,
    })
}
