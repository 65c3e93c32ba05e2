use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use weakpc::model::{apply_sign_convention, balanced_vectors, reconstruct_common, truncated_svd, truncated_svd_dense};
use weakpc::{Error, PanelMatrix};

fn gaussian(seed: u64, n: usize, t: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, t, |_, _| rng.sample(StandardNormal))
}

/// Top-r triplets from the eigendecomposition of XᵀX: v_k is an eigenvector,
/// σ_k = √λ_k and u_k = X v_k / σ_k. A route that shares nothing with the SVD.
fn gram_oracle(x: &DMatrix<f64>, r: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = (x.transpose() * x).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::zeros(x.nrows(), r);
    let mut s = Vec::new();
    for (k, &j) in order.iter().take(r).enumerate() {
        let sigma = eig.eigenvalues[j].sqrt();
        u.set_column(k, &(x * eig.eigenvectors.column(j) / sigma));
        s.push(sigma);
    }
    (s, u)
}

#[test]
fn six_by_five_matches_gram_route() {
    let x = gaussian(61, 6, 5);
    let svd = truncated_svd_dense(&x, 2).unwrap();
    let (s, u) = gram_oracle(&x, 2);
    for k in 0..2 {
        assert!((svd.singular[k] - s[k]).abs() < 1e-10);
        // Left vectors agree up to sign; the Gram route carries no convention.
        let sign = svd.left.column(k).dot(&u.column(k)).signum();
        assert!((svd.left.column(k) - u.column(k) * sign).amax() < 1e-10);
    }
}

#[test]
fn orthonormal_descending_and_signed() {
    for seed in 0..30 {
        let x = gaussian(seed, 15, 9);
        let svd = truncated_svd_dense(&x, 4).unwrap();
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((svd.left.transpose() * &svd.left - &eye).amax() < 1e-10);
        assert!((svd.right.transpose() * &svd.right - &eye).amax() < 1e-10);
        assert!(svd.singular.iter().all(|&s| s > 0.0));
        assert!(svd.singular.as_slice().windows(2).all(|w| w[0] > w[1]));
        for k in 0..4 {
            let col = svd.left.column(k);
            assert!(col[col.iamax()] > 0.0);
        }
    }
}

#[test]
fn balanced_factors_share_the_spectrum() {
    let x = gaussian(8, 8, 6);
    let svd = truncated_svd_dense(&x, 2).unwrap();
    let b = balanced_vectors(&svd);
    let d = DMatrix::from_diagonal(&svd.singular);
    assert!((b.y.transpose() * &b.y - &d).amax() < 1e-10 * svd.singular[0]);
    assert!((b.z.transpose() * &b.z - &d).amax() < 1e-10 * svd.singular[0]);
    assert!((&b.y * b.z.transpose() - svd.reconstruct()).amax() < 1e-10);
}

#[test]
fn zero_noise_reconstruction() {
    let lambda = gaussian(1, 30, 2);
    let f = gaussian(2, 20, 2);
    let m = &lambda * f.transpose();
    let fit = weakpc::pc_fit(&PanelMatrix::new(m.clone()).unwrap(), 2).unwrap();
    let back = reconstruct_common(&fit.loadings_hat, &fit.factors_hat).unwrap();
    assert!((back - &m).norm() / m.norm() < 1e-8);
}

#[test]
fn panel_guards() {
    assert!(matches!(PanelMatrix::new(DMatrix::zeros(1, 5)), Err(Error::InvalidPanel(_))));
    let mut x = gaussian(3, 4, 4);
    x[(2, 1)] = f64::NAN;
    assert!(matches!(PanelMatrix::new(x), Err(Error::InvalidPanel(_))));
    let p = PanelMatrix::new(gaussian(4, 4, 3)).unwrap();
    assert!(matches!(truncated_svd(&p, 4), Err(Error::RankTooLarge { rank: 4, max: 3 })));
    assert!(matches!(truncated_svd(&p, 0), Err(Error::RankTooLarge { .. })));
}

#[test]
fn row_major_round_trip() {
    let data: Vec<f64> = (0..12).map(|k| k as f64 * 0.5 - 2.0).collect();
    let p = PanelMatrix::from_row_major(3, 4, &data).unwrap();
    assert_eq!(p.values()[(1, 2)], data[6]);
    assert_eq!(p.to_row_major(), data);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_pythagoras(seed in any::<u64>(), n in 2usize..14, t in 2usize..14, r_frac in 0.0f64..1.0) {
        let x = gaussian(seed, n, t);
        let r = 1 + ((n.min(t) - 1) as f64 * r_frac) as usize;
        let svd = truncated_svd_dense(&x, r).unwrap();
        let resid = (&x - svd.reconstruct()).norm_squared();
        let kept: f64 = svd.singular.iter().map(|s| s * s).sum();
        let total = x.norm_squared();
        prop_assert!((resid + kept - total).abs() <= 1e-8 * total);
    }

    #[test]
    fn sign_convention_idempotent(seed in any::<u64>(), n in 2usize..10, r in 1usize..4) {
        let mut left = gaussian(seed, n, r);
        let mut right = gaussian(seed ^ 0x5555, n + 1, r);
        let product = &left * right.transpose();
        apply_sign_convention(&mut left, &mut right);
        let (l1, r1) = (left.clone(), right.clone());
        apply_sign_convention(&mut left, &mut right);
        prop_assert_eq!(&left, &l1);
        prop_assert_eq!(&right, &r1);
        prop_assert!((&left * right.transpose() - product).amax() < 1e-12);
    }

    #[test]
    fn reconstruct_is_rotation_free(seed in any::<u64>(), theta in 0.0f64..6.3) {
        let l = gaussian(seed, 7, 2);
        let f = gaussian(seed.wrapping_add(1), 5, 2);
        let (s, c) = theta.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = reconstruct_common(&l, &f).unwrap();
        let b = reconstruct_common(&(&l * &rot), &(&f * &rot)).unwrap();
        prop_assert!((a - b).amax() < 1e-12);
    }
}
