//! Exact algebraic identities tying the estimator to the truth. Every gap
//! should sit at round-off level on any instance; they double as a
//! correctness check of the whole pipeline.

use nalgebra::DMatrix;

use crate::dgp::{
    assemble_panel, CrossDependence, DgpDescriptor, LoadingKind, LoadingScheme, NoiseSpec, PanelInstance,
    TemporalDependence,
};
use crate::error::Result;
use crate::estimator::{
    align_to, factor_error_matrix, loading_error_matrix, pc_fit, Alignment, PcFit, TruthOracle,
};
use crate::leaveout::{decomposition_residuals, delta_matrices, leave_one_out_with};
use crate::rng::replication_seed;

/// Identities are declared to hold when every gap is below this.
pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityGaps {
    /// max(‖Λ⁰ − T^{−1/2}Y⁰H⁰^{−ᵀ}‖, ‖F⁰ − √T Z⁰H⁰‖)
    pub rotation: f64,
    /// Both error translations through O and D_r.
    pub translation: f64,
    /// Δ_zᵀZ⁰ − Y⁰ᵀΔ_y − ½(Δ_yᵀΔ_y − Δ_zᵀΔ_z)
    pub symmetric: f64,
    pub y_decomposition: f64,
    /// R₁ row i against Σ_t ε_it(δ₁,t + δ₂,t) from the leave-one-out fit.
    pub decomp_r1: f64,
    /// Λ̂ − Λ⁰H_BN,1^{−1} against EF⁰H_BN,0/T + E(F̂ − F⁰H_BN,0)/T.
    pub h_bn: f64,
}

impl IdentityGaps {
    pub fn max(&self) -> f64 {
        [self.rotation, self.translation, self.symmetric, self.y_decomposition, self.decomp_r1, self.h_bn]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn all_hold(&self) -> bool {
        self.max() < IDENTITY_TOL
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("rotation", self.rotation),
            ("translation", self.translation),
            ("symmetric", self.symmetric),
            ("y_decomposition", self.y_decomposition),
            ("decomp_r1", self.decomp_r1),
            ("h_bn", self.h_bn),
        ]
    }
}

pub fn rotation_gap(truth_loadings: &DMatrix<f64>, truth_factors: &DMatrix<f64>, oracle: &TruthOracle) -> f64 {
    let t = truth_factors.nrows() as f64;
    let h0_inv = crate::linalg::invert(&oracle.h0).unwrap_or_else(|| DMatrix::from_element(1, 1, f64::NAN));
    let a = (truth_loadings - oracle.y0() * h0_inv.transpose() / t.sqrt()).norm();
    let b = (truth_factors - oracle.z0() * &oracle.h0 * t.sqrt()).norm();
    a.max(b)
}

/// The gaps that need no leave-out refit.
pub fn core_gaps(inst: &PanelInstance, fit: &PcFit, oracle: &TruthOracle, al: &Alignment) -> Result<IdentityGaps> {
    let truth = &inst.truth;
    let t = truth.n_periods() as f64;
    let rotation = rotation_gap(&truth.loadings, &truth.factors, oracle);

    let dy = &fit.balanced.y * &al.o - oracle.y0();
    let dz = &fit.balanced.z * &al.o - oracle.z0();
    let d_root = DMatrix::from_diagonal(&fit.svd.singular.map(f64::sqrt));
    let d_inv_root = DMatrix::from_diagonal(&fit.svd.singular.map(|s| 1.0 / s.sqrt()));
    let lam_gap = (loading_error_matrix(fit, truth, al) - &dy * al.o.transpose() * &d_root / t.sqrt()).norm();
    let fac_gap = (factor_error_matrix(fit, truth, al) - &dz * al.o.transpose() * &d_inv_root * t.sqrt()).norm();

    let lhs = dz.transpose() * oracle.z0() - oracle.y0().transpose() * &dy;
    let rhs = (dy.transpose() * &dy - dz.transpose() * &dz) * 0.5;
    let symmetric = (lhs - rhs).norm();

    let y_decomposition = decomposition_residuals(fit, oracle, al, &inst.noise)?.identity_gap;

    let bn_inv = crate::linalg::invert(&al.h_bn1).unwrap_or_else(|| DMatrix::from_element(1, 1, f64::NAN));
    let e = &inst.noise;
    let lhs = &fit.loadings_hat - &truth.loadings * bn_inv;
    let rhs = e * &truth.factors * &al.h_bn0 / t + e * (&fit.factors_hat - &truth.factors * &al.h_bn0) / t;
    let h_bn = (lhs - rhs).norm();

    Ok(IdentityGaps {
        rotation,
        translation: lam_gap.max(fac_gap),
        symmetric,
        y_decomposition,
        decomp_r1: 0.0,
        h_bn,
    })
}

/// All identities, with the R₁ split checked at unit `i`.
pub fn check_instance(inst: &PanelInstance, r: usize, i: usize) -> Result<IdentityGaps> {
    let oracle = TruthOracle::new(&inst.truth)?;
    let fit = pc_fit(&inst.panel, r)?;
    let al = align_to(&fit, &inst.truth, &oracle)?;
    let mut gaps = core_gaps(inst, &fit, &oracle, &al)?;
    let dec = decomposition_residuals(&fit, &oracle, &al, &inst.noise)?;
    let loo = leave_one_out_with(&inst.panel, &inst.truth, &oracle, i, r)?;
    let d = delta_matrices(&fit, &al, &loo, &oracle, &inst.noise)?;
    let eps = inst.noise.row(i);
    let recon = eps * (&d.delta1 + &d.delta2);
    gaps.decomp_r1 = (dec.r1.row(i) - recon).norm().max(d.reconstruction_gap);
    Ok(gaps)
}

/// The k-th instance of the standard suite: N = 60, T = 80, r = 2, cycling
/// through iid, AR(1), block-correlated and block × MA(2) noise.
pub fn suite_descriptor(seed: u64, k: usize) -> DgpDescriptor {
    let noise = match k % 4 {
        0 => NoiseSpec::iid(1.0),
        1 => NoiseSpec {
            cross: CrossDependence::Independent,
            temporal: TemporalDependence::Ar { coeffs: vec![0.5], innovation_sd: 1.0 },
            base_sd: 0.8,
        },
        2 => NoiseSpec {
            cross: CrossDependence::BlockNeighbors { block_size: 5, rho: 0.4 },
            temporal: TemporalDependence::Independent,
            base_sd: 1.0,
        },
        _ => NoiseSpec {
            cross: CrossDependence::BlockNeighbors { block_size: 4, rho: 0.3 },
            temporal: TemporalDependence::Ma { coeffs: vec![0.5, 0.25], innovation_sd: 1.0 },
            base_sd: 1.0,
        },
    };
    let alpha = [0.5, 0.7, 0.9, 1.0][(k / 4) % 4];
    let kind = if k % 5 == 4 { LoadingKind::HeterogeneousExponents } else { LoadingKind::Homogeneous };
    DgpDescriptor {
        n: 60,
        t: 80,
        r: 2,
        loading_scheme: LoadingScheme {
            kind,
            alpha,
            sigma_lambda: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            exponent_spread: if kind == LoadingKind::HeterogeneousExponents { 0.2 } else { 0.0 },
        },
        factor_cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]),
        noise,
        seed: replication_seed(seed, 0xD1, k as u64),
    }
}

/// Run the suite on `count` instances.
pub fn run_suite(seed: u64, count: usize) -> Result<Vec<IdentityGaps>> {
    (0..count)
        .map(|k| {
            let desc = suite_descriptor(seed, k);
            let inst = assemble_panel(&desc)?;
            check_instance(&inst, desc.r, desc.n / 2)
        })
        .collect()
}
