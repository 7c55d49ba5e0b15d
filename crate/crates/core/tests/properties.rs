use proptest::prelude::*;

use regcomplex::experiments::{gaussian_noise, make_phantom, PhantomKind};
use regcomplex::schedules::{iterated_log, n_of, Schedule};
use regcomplex::vector::{dist, dot, norm, norm_sq};
use regcomplex::{
    bregman_divergence, estimate_norm, make_gaussian_blur, make_grad2d, make_stack, DenseMatrix, Functional, GroupLayout,
    LinearMap, SubgradientChoice,
};

fn functional(kind: u8, w: f64) -> Functional {
    match kind % 5 {
        0 => Functional::l1(w).unwrap(),
        1 => Functional::squared_norm(w).unwrap(),
        2 => Functional::group_l21(w, 2, GroupLayout::Contiguous).unwrap(),
        3 => Functional::isotropic_tv(w).unwrap(),
        _ => Functional::nonneg_indicator(),
    }
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity(w in 2usize..9, h in 2usize..9, std in 0.5..3.0f64, seed in any::<u64>()) {
        let mut rng = regcomplex::rng::NoiseRng::new(seed);
        let op = make_stack(make_gaussian_blur(w, h, std, 5).unwrap(), make_grad2d(w, h).unwrap()).unwrap();
        let x = rng.normal_vec(op.domain_dim());
        let y = rng.normal_vec(op.codomain_dim());
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.adjoint_apply(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn operators_are_linear(x in vec_strategy(12), z in vec_strategy(12), a in -3.0..3.0f64) {
        let op = make_grad2d(4, 3).unwrap();
        let comb: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + q).collect();
        let lhs = op.apply(&comb).unwrap();
        let rhs: Vec<f64> = op.apply(&x).unwrap().iter().zip(op.apply(&z).unwrap()).map(|(p, q)| a * p + q).collect();
        prop_assert!(dist(&lhs, &rhs) <= 1e-10 * (1.0 + norm(&rhs)));
    }

    #[test]
    fn prox_is_optimal(kind in 0u8..5, w in 0.1..3.0f64, tau in 0.01..4.0f64, x in vec_strategy(6), zs in prop::collection::vec(vec_strategy(6), 20)) {
        let f = functional(kind, w);
        let p = f.prox(tau, &x).unwrap();
        let phi = |z: &[f64]| 0.5 * norm_sq(&z.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) + tau * f.value(z).unwrap();
        let at_p = phi(&p);
        for z in &zs {
            prop_assert!(at_p <= phi(z) + 1e-9);
        }
    }

    #[test]
    fn moreau_decomposition(kind in 0u8..5, w in 0.1..3.0f64, tau in 0.01..4.0f64, x in vec_strategy(6)) {
        let f = functional(kind, w);
        let p = f.prox(tau, &x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v / tau).collect();
        let q = f.prox_conjugate(1.0 / tau, &scaled).unwrap();
        let recon: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + tau * b).collect();
        prop_assert!(dist(&recon, &x) <= 1e-10 * (1.0 + norm(&x)));
    }

    #[test]
    fn prox_is_firmly_nonexpansive(kind in 0u8..5, w in 0.1..3.0f64, tau in 0.01..4.0f64, x in vec_strategy(6), z in vec_strategy(6)) {
        let f = functional(kind, w);
        let px = f.prox(tau, &x).unwrap();
        let pz = f.prox(tau, &z).unwrap();
        let dp: Vec<f64> = px.iter().zip(&pz).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        prop_assert!(norm_sq(&dp) <= dot(&dp, &dx) + 1e-10);
    }

    #[test]
    fn bregman_is_nonnegative(xhat in vec_strategy(4), x in vec_strategy(4), t in prop::collection::vec(-1.0..1.0f64, 4)) {
        let l1 = Functional::l1(1.0).unwrap();
        let d: Vec<f64> = xhat.iter().zip(&t).map(|(v, ti)| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { *ti }).collect();
        let b = bregman_divergence(&l1, &SubgradientChoice::new(d), &x, &xhat).unwrap();
        prop_assert!(b >= -1e-12);
        let sq = Functional::squared_norm(1.0).unwrap();
        let b = bregman_divergence(&sq, &SubgradientChoice::new(xhat.clone()), &x, &xhat).unwrap();
        prop_assert!((b - 0.5 * dist(&x, &xhat).powi(2)).abs() <= 1e-10 * (1.0 + b));
    }

    #[test]
    fn norm_estimate_scales(c in 0.1..10.0f64, entries in prop::collection::vec(-2.0..2.0f64, 12)) {
        prop_assume!(norm(&entries) > 0.1);
        let m = DenseMatrix::new(3, 4, entries).unwrap();
        let base = estimate_norm(&LinearMap::dense(m.clone()), 1e-12, 10_000, 0).unwrap().norm;
        let scaled = estimate_norm(&LinearMap::dense(m).scaled(c), 1e-12, 10_000, 0).unwrap().norm;
        prop_assert!((scaled - c * base).abs() <= 1e-6 * c * base);
    }

    #[test]
    fn noise_scales_exactly(std in 0.001..10.0f64, seed in any::<u64>()) {
        let unit = gaussian_noise(64, 1.0, seed).unwrap();
        let s = gaussian_noise(64, std, seed).unwrap();
        for (a, b) in s.iter().zip(&unit) {
            prop_assert_eq!(*a, std * b);
        }
    }

    #[test]
    fn iterated_log_decreases_in_folds(t in 1e-6..1e8f64, k in 1usize..200) {
        let a = iterated_log(t, k);
        let b = iterated_log(t, k + 1);
        prop_assert!(b < a && a <= t && b >= 0.0);
    }

    #[test]
    fn schedule_n_at_least_floor(e in 0.0..8.0f64) {
        let d = 10f64.powf(-e);
        prop_assert!(n_of(&Schedule::iterated_log(), d).unwrap() >= 100);
    }

    #[test]
    fn phantom_values_are_binary(w in 8usize..40, h in 8usize..40) {
        let (img, regions) = make_phantom(&PhantomKind::Disk, w, h).unwrap();
        prop_assert!(img.values.iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert!(regions.validate(img.len()).is_ok());
    }
}
