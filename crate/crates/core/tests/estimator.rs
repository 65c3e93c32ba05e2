use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use weakpc::dgp::{assemble_panel, DgpDescriptor, LoadingScheme, NoiseSpec};
use weakpc::estimator::*;
use weakpc::linalg::{invert, sym_eigen_desc};
use weakpc::{Error, FactorStructure};

fn gaussian(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |_, _| rng.sample(StandardNormal))
}

fn truth(seed: u64, n: usize, t: usize, r: usize) -> FactorStructure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = gaussian(&mut rng, n, r);
    let f = gaussian(&mut rng, t, r);
    FactorStructure::new(l, f, 1.0, vec![1.0; n], 10.0).unwrap()
}

fn instance(n: usize, t: usize, r: usize, alpha: f64, sd: f64, seed: u64) -> weakpc::dgp::PanelInstance {
    assemble_panel(&DgpDescriptor {
        n,
        t,
        r,
        loading_scheme: LoadingScheme::homogeneous(alpha, r),
        factor_cov: DMatrix::identity(r, r),
        noise: NoiseSpec::iid(sd),
        seed,
    })
    .unwrap()
}

#[test]
fn fit_normalisations() {
    let inst = instance(50, 40, 3, 0.8, 1.0, 1);
    let fit = pc_fit(&inst.panel, 3).unwrap();
    let t = 40.0;
    let ff = fit.factors_hat.transpose() * &fit.factors_hat / t;
    assert!((ff - DMatrix::identity(3, 3)).amax() < 1e-8);
    let ll = fit.loadings_hat.transpose() * &fit.loadings_hat;
    let off = ll.iter().enumerate().filter(|(k, _)| k % 4 != 0).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    assert!(off < 1e-8 * ll[(0, 0)]);
    assert!((fit.common_hat() - fit.svd.reconstruct()).amax() < 1e-10);
}

#[test]
fn zero_noise_recovers_truth_and_aligns() {
    let inst = instance(40, 30, 2, 0.7, 0.0, 2);
    let fit = pc_fit(&inst.panel, 2).unwrap();
    let m = &inst.truth.common;
    assert!((fit.common_hat() - m).norm() / m.norm() < 1e-8);
    let al = align(&fit, &inst.truth).unwrap();
    assert!((&al.o - &al.sign_estimate).norm() < 1e-8);
    assert!((&fit.loadings_hat - &inst.truth.loadings * al.h_inv.transpose()).norm() < 1e-8);
    let rep = rotated_errors(&fit, &inst.truth, &al);
    let worst = rep
        .per_unit_loading
        .iter()
        .chain(&rep.per_period_factor)
        .chain(&rep.bn_loading)
        .chain(rep.common_abs.iter())
        .fold(0.0_f64, |a, &b| a.max(b));
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn pc_beats_random_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = gaussian(&mut rng, 20, 15);
    let fit = PcFit::from_matrix(&x, 2).unwrap();
    let ours = (&x - fit.common_hat()).norm_squared();
    for _ in 0..100 {
        let a = gaussian(&mut rng, 20, 2);
        let b = gaussian(&mut rng, 15, 2);
        // Best scale for the competitor makes the comparison non-trivial.
        let ab = &a * b.transpose();
        let c = ab.dot(&x) / ab.norm_squared();
        assert!(ours <= (&x - ab * c).norm_squared());
    }
}

#[test]
fn truth_svd_hand_case() {
    let t = FactorStructure::new(
        DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        1.0,
        vec![1.0, f64::NEG_INFINITY],
        1.0,
    )
    .unwrap();
    let s = oracle_svd_of_truth(&t).unwrap();
    assert!((s.svd.singular[0] - 2f64.sqrt()).abs() < 1e-14);
    assert!((s.balanced.y[(0, 0)] - 2f64.powf(0.25)).abs() < 1e-14);
    assert!((s.balanced.z[(0, 0)] - 2f64.powf(-0.25)).abs() < 1e-14);
    assert!((s.balanced.z[(1, 0)] - 2f64.powf(-0.25)).abs() < 1e-14);
}

#[test]
fn truth_svd_matches_panel_svd() {
    for seed in 0..10 {
        let tr = truth(seed, 25, 18, 3);
        let s = oracle_svd_of_truth(&tr).unwrap();
        let direct = weakpc::model::truncated_svd_dense(&tr.common, 3).unwrap();
        assert!((&s.svd.singular - &direct.singular).amax() < 1e-10 * direct.singular[0]);
        assert!((&s.balanced.y * s.balanced.z.transpose() - &tr.common).amax() < 1e-10 * direct.singular[0]);
        assert!((s.kappa - s.psi_max / s.psi_min).abs() < 1e-12 * s.kappa);
    }
}

#[test]
fn rotation_identities() {
    for seed in 0..10 {
        let tr = truth(100 + seed, 40, 50, 2);
        let oracle = TruthOracle::new(&tr).unwrap();
        let h0_inv = invert(&oracle.h0).unwrap();
        let t = 50f64.sqrt();
        let a = (&tr.loadings - oracle.y0() * h0_inv.transpose() / t).norm();
        let b = (&tr.factors - oracle.z0() * &oracle.h0 * t).norm();
        assert!(a.max(b) < 1e-8);
    }
}

#[test]
fn scalar_h0_sign_rule() {
    for seed in 0..20 {
        let tr = truth(200 + seed, 9, 7, 1);
        let h0 = oracle_rotation_h0(&tr).unwrap()[(0, 0)];
        let t = 7f64.sqrt();
        let oracle = TruthOracle::new(&tr).unwrap();
        assert!((&tr.factors - oracle.z0() * h0 * t).amax() < 1e-10);
        // Sign follows the largest-magnitude loading.
        let big = tr.loadings.column(0).iamax();
        assert_eq!(h0 > 0.0, tr.loadings[(big, 0)] > 0.0);
    }
}

#[test]
fn theta_eigenvectors_are_scale_free() {
    let tr = truth(7, 30, 20, 3);
    let theta = theta_matrix(&tr.loadings, &tr.factors).unwrap();
    let (_, g1) = sym_eigen_desc(&theta);
    let (_, g2) = sym_eigen_desc(&(&theta / (30f64.powf(0.6) * 20.0)));
    for k in 0..3 {
        assert!((g1.column(k).dot(&g2.column(k)).abs() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn degenerate_theta() {
    // Equal column norms and orthogonal loadings/factors give tied eigenvalues.
    let l = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let f = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let tr = FactorStructure::new(l, f, 1.0, vec![1.0; 4], 1.0).unwrap();
    assert!(matches!(TruthOracle::new(&tr), Err(Error::DegenerateTheta { .. } | Error::DegenerateSpectrum { .. })));
}

#[test]
fn procrustes_planted_rotation_and_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = gaussian(&mut rng, 10, 3);
    let (s, c) = 0.7f64.sin_cos();
    let r0 = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0]);
    let o = procrustes(&a, &(&a * &r0)).unwrap();
    assert!((o - r0).amax() < 1e-10);
    assert!((procrustes(&a, &a).unwrap() - DMatrix::identity(3, 3)).amax() < 1e-12);
}

#[test]
fn procrustes_rejects_rank_deficiency() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    assert!(matches!(procrustes(&a, &a), Err(Error::DegenerateCrossProduct { .. })));
    assert!(matches!(
        procrustes(&DMatrix::zeros(3, 2), &DMatrix::zeros(4, 2)),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn o_near_sign_matrix_under_moderate_noise() {
    let inst = instance(300, 300, 2, 1.0, 0.5, 11);
    let fit = pc_fit(&inst.panel, 2).unwrap();
    let al = align(&fit, &inst.truth).unwrap();
    assert!((&al.o - &al.sign_estimate).norm() < 0.1);
    assert!((&al.o.transpose() * &al.o - DMatrix::identity(2, 2)).amax() < 1e-10);
    let d_root = DMatrix::from_diagonal(&fit.svd.singular.map(f64::sqrt));
    let recomputed = d_root * &al.o * &al.h0;
    assert!((&al.h * recomputed - DMatrix::identity(2, 2)).amax() < 1e-8);
}

#[test]
fn procrustes_no_worse_than_sign_or_identity() {
    for seed in 0..20 {
        let inst = instance(60, 50, 2, 0.6, 1.0, 300 + seed);
        let fit = pc_fit(&inst.panel, 2).unwrap();
        let oracle = TruthOracle::new(&inst.truth).unwrap();
        let al = align_to(&fit, &inst.truth, &oracle).unwrap();
        let a = weakpc::linalg::vstack(&fit.balanced.y, &fit.balanced.z);
        let b = oracle.stacked();
        let obj = |m: &DMatrix<f64>| (&a * m - &b).norm();
        assert!(obj(&al.o) <= obj(&al.sign_estimate) + 1e-12);
        assert!(obj(&al.o) <= obj(&DMatrix::identity(2, 2)) + 1e-12);
    }
}

#[test]
fn error_report_csv() {
    let inst = instance(6, 5, 1, 0.9, 0.3, 12);
    let fit = pc_fit(&inst.panel, 1).unwrap();
    let rep = rotated_errors(&fit, &inst.truth, &align(&fit, &inst.truth).unwrap());
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 + 5);
    assert!(text.starts_with("kind,index,error,bn_error\nunit,0,"));
    assert!(text.lines().last().unwrap().ends_with(','));
}

#[test]
fn align_shape_guard() {
    let inst = instance(10, 8, 1, 0.9, 1.0, 13);
    let other = instance(11, 8, 1, 0.9, 1.0, 13);
    let fit = pc_fit(&inst.panel, 1).unwrap();
    assert!(matches!(align(&fit, &other.truth), Err(Error::ShapeMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn procrustes_is_orthogonal_and_optimal(seed in any::<u64>(), theta in 0.0f64..6.3, reflect in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, 8, 2);
        let b = gaussian(&mut rng, 8, 2);
        let o = procrustes(&a, &b).unwrap();
        prop_assert!((o.transpose() * &o - DMatrix::identity(2, 2)).amax() < 1e-12);
        let (s, c) = theta.sin_cos();
        let m = if reflect {
            DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
        } else {
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        };
        prop_assert!((&a * &o - &b).norm() <= (&a * m - &b).norm() + 1e-12);
    }

    #[test]
    fn common_error_ignores_rotation(seed in 0u64..1000, angle in 0.0f64..6.3) {
        let inst = instance(20, 15, 2, 0.8, 1.0, seed);
        let fit = pc_fit(&inst.panel, 2).unwrap();
        let (s, c) = angle.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let r_inv_t = invert(&r).unwrap().transpose();
        let rotated = weakpc::model::reconstruct_common(&(&fit.loadings_hat * r_inv_t), &(&fit.factors_hat * r)).unwrap();
        let a = (fit.common_hat() - &inst.truth.common).abs();
        let b = (rotated - &inst.truth.common).abs();
        prop_assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn alignment_inverse_contract(seed in 0u64..1000) {
        let inst = instance(25, 20, 2, 0.7, 1.0, seed);
        let fit = pc_fit(&inst.panel, 2).unwrap();
        let al = align(&fit, &inst.truth).unwrap();
        prop_assert!((&al.h * &al.h_inv - DMatrix::identity(2, 2)).amax() < 1e-8);
        let sign_diag: DVector<f64> = al.sign_estimate.diagonal();
        prop_assert!(sign_diag.iter().all(|v| v.abs() == 1.0));
    }
}
