mod common;

use common::{gaussian_matrix, gle_series, random_asms_pair, random_pd};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slqr::{is_asms, solve_gle_dual, solve_gle_primal, SlqrError, SymMatrix};

fn transposed(cs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    cs.iter().map(|c| c.transpose()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primal_solution_matches_series(seed in any::<u64>(), n in 1usize..=6, channels in 1usize..=3, budget in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, cs) = random_asms_pair(&mut rng, n, channels, budget);
        let q = random_pd(&mut rng, n);
        let s = solve_gle_primal(&a, &cs, &q).unwrap();
        let mut residual = a.transpose() * s.matrix() * &a + q.matrix() - s.matrix();
        for c in &cs {
            residual += c.transpose() * s.matrix() * c;
        }
        prop_assert!(residual.norm() <= 1e-10 * (1.0 + s.matrix().norm()));
        let oracle = gle_series(&a, &cs, q.matrix());
        prop_assert!((s.matrix() - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
        prop_assert!(s.min_eigenvalue() > 0.0);
    }

    #[test]
    fn dual_is_primal_of_transpose(seed in any::<u64>(), n in 1usize..=5, channels in 1usize..=3, budget in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, cs) = random_asms_pair(&mut rng, n, channels, budget);
        let xi = random_pd(&mut rng, n);
        let s = solve_gle_dual(&a, &cs, &xi).unwrap();
        let oracle = gle_series(&a.transpose(), &transposed(&cs), xi.matrix());
        prop_assert!((s.matrix() - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
    }

    #[test]
    fn solution_is_linear_in_forcing(seed in any::<u64>(), n in 1usize..=4, alpha in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, cs) = random_asms_pair(&mut rng, n, 2, 0.7);
        let (q1, q2) = (random_pd(&mut rng, n), random_pd(&mut rng, n));
        let s1 = solve_gle_primal(&a, &cs, &q1).unwrap();
        let s2 = solve_gle_primal(&a, &cs, &q2).unwrap();
        let combined = SymMatrix::symmetrize(q1.matrix() * alpha + q2.matrix());
        let s = solve_gle_primal(&a, &cs, &combined).unwrap();
        let expected = s1.matrix() * alpha + s2.matrix();
        prop_assert!((s.matrix() - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
    }

    #[test]
    fn norm_budget_implies_asms(seed in any::<u64>(), n in 1usize..=6, channels in 0usize..=3, budget in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, cs) = random_asms_pair(&mut rng, n, channels, budget);
        let report = is_asms(&a, &cs).unwrap();
        prop_assert!(report.asms);
        prop_assert!(report.spectral_radius <= budget + 1e-12);
    }
}

#[test]
fn radius_of_scaled_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian_matrix(&mut rng, 3, 3);
    let c = gaussian_matrix(&mut rng, 3, 3);
    let base = is_asms(&a, std::slice::from_ref(&c)).unwrap().spectral_radius;
    for scale in [0.5, 2.0] {
        let scaled = is_asms(&(&a * scale), &[&c * scale]).unwrap().spectral_radius;
        assert!((scaled - base * scale * scale).abs() <= 1e-9 * scaled);
    }
}

#[test]
fn rejects_unstable_operator() {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.5]);
    let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
    match solve_gle_primal(&a, &[c], &SymMatrix::identity(2)) {
        Err(SlqrError::NotAsms { spectral_radius }) => assert!((spectral_radius - 1.06).abs() < 1e-12),
        other => panic!("expected NotAsms, got {other:?}"),
    }
}
