use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use weakpc::dgp::{assemble_panel, DgpDescriptor, LoadingScheme, NoiseSpec, TemporalDependence};
use weakpc::estimator::pc_fit;
use weakpc::inference::*;
use weakpc::linalg::{invert, sym_inv_sqrt};
use weakpc::{Error, FactorStructure};

fn spd(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, b, c])
}

fn objects(phi_l: DMatrix<f64>, phi_f: DMatrix<f64>, g_ref: Option<&DMatrix<f64>>) -> AsymptoticObjects {
    AsymptoticObjects::from_parts(spd(2.0, 0.3, 1.0), spd(1.5, -0.2, 0.7), phi_l, phi_f, g_ref, 50.0, 40).unwrap()
}

/// Φ(x) by composite Simpson on [0, |x|], then bisection.
fn quadrature_cdf(x: f64) -> f64 {
    let m = 20_000;
    let h = x.abs() / m as f64;
    let pdf = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x.abs());
    for k in 1..m {
        s += pdf(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if x >= 0.0 { 0.5 + half } else { 0.5 - half }
}

fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if quadrature_cdf(mid) < p { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantiles_match_quadrature() {
    assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
    for p in [0.01, 0.05, 0.3, 0.5, 0.8, 0.95, 0.995] {
        let q = normal_quantile(p);
        assert!((q - bisect_quantile(p)).abs() < 1e-8, "{p}");
        assert!((normal_cdf(q) - p).abs() < 1e-10);
    }
}

#[test]
fn q_matrix_recomputes() {
    let obj = objects(DMatrix::identity(2, 2), DMatrix::identity(2, 2), None);
    let root_inv = sym_inv_sqrt(&obj.sigma_lambda).unwrap();
    let q = DMatrix::from_diagonal(&obj.d_cal) * obj.g_cal.transpose() * root_inv;
    assert!((q - &obj.q_cal).amax() < 1e-12);
    assert!((obj.g_cal.transpose() * &obj.g_cal - DMatrix::identity(2, 2)).amax() < 1e-12);
    assert!(obj.d_cal[0] >= obj.d_cal[1]);
    let closed = obj.q_inv_t_closed_form().unwrap();
    assert!((closed - invert(&obj.q_cal).unwrap().transpose()).amax() < 1e-10);
}

#[test]
fn phi_equal_to_q_gram_gives_identity() {
    let first = objects(DMatrix::identity(2, 2), DMatrix::identity(2, 2), None);
    let phi = first.q_cal.transpose() * &first.q_cal;
    let obj = objects(DMatrix::identity(2, 2), phi, None);
    assert!((avar_loading(&obj).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-10);
}

#[test]
fn iid_loading_avar_is_noise_variance() {
    // With Φ_F = σ²Σ_F the loading covariance collapses to σ²I.
    let sf = spd(1.5, -0.2, 0.7);
    let obj = objects(DMatrix::identity(2, 2), &sf * 0.49, None);
    assert!((avar_loading(&obj).unwrap() - DMatrix::identity(2, 2) * 0.49).amax() < 1e-12);
}

#[test]
fn sign_flip_of_g_conjugates_covariances() {
    let base = objects(spd(1.0, 0.4, 2.0), spd(0.5, 0.1, 0.9), None);
    let mut reference = base.g_cal.clone();
    reference.column_mut(1).neg_mut();
    let flipped = objects(spd(1.0, 0.4, 2.0), spd(0.5, 0.1, 0.9), Some(&reference));
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    let a = avar_loading(&base).unwrap();
    let b = avar_loading(&flipped).unwrap();
    assert!((&s * a * &s - b).amax() < 1e-12);
    let a = avar_factor(&base).unwrap();
    let b = avar_factor(&flipped).unwrap();
    assert!((&s * a * &s - b).amax() < 1e-12);
}

#[test]
fn common_variance_scalar_case() {
    let (n, t) = (30, 20);
    let tr = FactorStructure::new(DMatrix::from_element(n, 1, 1.0), DMatrix::from_element(t, 1, 1.0), 1.0, vec![1.0; n], 2.0)
        .unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let obj = AsymptoticObjects::from_parts(one.clone(), one.clone(), one.clone(), one, None, n as f64, t).unwrap();
    let v = var_common(&tr, &obj, 3, 4).unwrap();
    assert!((v - (1.0 / n as f64 + 1.0 / t as f64)).abs() < 1e-15);

    let mut l = DMatrix::from_element(n, 1, 1.0);
    l[(3, 0)] = 0.0;
    let tr = FactorStructure::new(l, DMatrix::from_element(t, 1, 1.0), 1.0, vec![1.0; n], 2.0).unwrap();
    assert!(matches!(var_common(&tr, &obj, 3, 4), Err(Error::DegenerateVariance(_))));
    assert!(matches!(var_common(&tr, &obj, n, 4), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn interval_shapes_and_errors() {
    let c = DVector::from_vec(vec![1.0, -2.0]);
    let rep = confidence_interval(&c, &DMatrix::identity(2, 2), &DVector::from_vec(vec![2.5, -2.0]), 0.95).unwrap();
    assert_eq!(rep.interval_hits, vec![true, true]);
    assert!((rep.upper[0] - 1.0 - normal_quantile(0.975)).abs() < 1e-15);
    assert!((rep.studentized[0] + 1.5).abs() < 1e-12);
    let rep = confidence_interval(&c, &(DMatrix::identity(2, 2) * 0.01), &DVector::from_vec(vec![2.5, -2.0]), 0.95).unwrap();
    assert_eq!(rep.interval_hits, vec![false, true]);
    assert!(matches!(
        confidence_interval(&c, &DMatrix::zeros(2, 2), &c, 0.95),
        Err(Error::SingularCovariance { .. })
    ));
    assert!(matches!(confidence_interval(&c, &spd(1.0, 2.0, 1.0), &c, 0.95), Err(Error::NotSpd(_))));
    assert!(confidence_interval(&c, &DMatrix::identity(2, 2), &c, 1.0).is_err());
}

#[test]
fn zero_residuals_give_zero_plugins() {
    let inst = assemble_panel(&desc(40, 30, 0.0, TemporalDependence::Independent, 1)).unwrap();
    let fit = pc_fit(&inst.panel, 2).unwrap();
    let x = inst.panel.values();
    assert!(plugin_avar_loading(&fit, x, 0, 3).unwrap().amax() < 1e-20);
    assert!(plugin_cov_factor(&fit, x, 0, 5).unwrap().amax() < 1e-20);
    assert!(plugin_var_common(&fit, x, 0, 0, 3, 1).unwrap().abs() < 1e-20);
}

#[test]
fn bandwidth_rule() {
    assert_eq!(default_bandwidth(&TemporalDependence::Independent, 300), 0);
    let ar = TemporalDependence::Ar { coeffs: vec![0.5], innovation_sd: 1.0 };
    assert_eq!(default_bandwidth(&ar, 300), 7);
    assert_eq!(default_bandwidth(&ar, 27), 3);
    assert_eq!(bartlett_weight(0, 4), 1.0);
    assert!((bartlett_weight(2, 4) - 0.6).abs() < 1e-15);
    assert_eq!(bartlett_weight(5, 4), 0.0);
}

fn desc(n: usize, t: usize, sd: f64, temporal: TemporalDependence, seed: u64) -> DgpDescriptor {
    let mut noise = NoiseSpec::iid(sd);
    noise.temporal = temporal;
    DgpDescriptor {
        n,
        t,
        r: 2,
        loading_scheme: LoadingScheme::homogeneous(0.8, 2),
        factor_cov: DMatrix::identity(2, 2),
        noise,
        seed,
    }
}

#[test]
fn plugins_track_oracles_on_average() {
    // Single-index plug-ins scatter by about 12% at this size, so compare means.
    let d = desc(300, 300, 1.0, TemporalDependence::Independent, 2);
    let inst = assemble_panel(&d).unwrap();
    let fit = pc_fit(&inst.panel, 2).unwrap();
    let x = inst.panel.values();
    let obj = oracle_objects(&d, &inst.truth, 0, 0).unwrap();
    let ol = avar_loading(&obj).unwrap().trace();
    let of = avar_factor(&obj).unwrap().trace() / inst.truth.n_alpha();
    let pl = (0..300).map(|i| plugin_avar_loading(&fit, x, i, 0).unwrap().trace()).sum::<f64>() / 300.0;
    let pf = (0..300).map(|t| plugin_cov_factor(&fit, x, t, 1).unwrap().trace()).sum::<f64>() / 300.0;
    assert!((0.9..=1.1).contains(&(pl / ol)), "loading {pl} vs {ol}");
    assert!((0.9..=1.1).contains(&(pf / of)), "factor {pf} vs {of}");
}

#[test]
fn hac_plugin_tracks_ar_long_run_variance() {
    // Φ_F under AR(1) noise with serially independent factors is still Var(ε)Σ_F,
    // so a HAC plug-in averaged across units should land near the oracle.
    let phi = 0.5;
    let d = desc(300, 300, 1.0, TemporalDependence::Ar { coeffs: vec![phi], innovation_sd: (1.0 - phi * phi).sqrt() }, 3);
    let inst = assemble_panel(&d).unwrap();
    let fit = pc_fit(&inst.panel, 2).unwrap();
    let bw = default_bandwidth(&d.noise.temporal, 300);
    let obj = oracle_objects(&d, &inst.truth, 0, 0).unwrap();
    let oracle = avar_loading(&obj).unwrap().trace();
    let mean: f64 = (0..300).map(|i| plugin_avar_loading(&fit, inst.panel.values(), i, bw).unwrap().trace()).sum::<f64>() / 300.0;
    assert!((0.85..=1.15).contains(&(mean / oracle)), "{mean} vs {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariances_are_symmetric_psd(a in 0.5f64..3.0, b in -0.4f64..0.4, c in 0.5f64..3.0, d in 0.2f64..2.0) {
        let obj = objects(spd(a, b, c), spd(d, 0.1, 1.0), None);
        for m in [avar_loading(&obj).unwrap(), avar_factor(&obj).unwrap()] {
            prop_assert!((&m - m.transpose()).amax() == 0.0);
            prop_assert!(m.clone().symmetric_eigen().eigenvalues.min() > -1e-12);
        }
    }

    #[test]
    fn quantile_cdf_round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-10);
    }
}
