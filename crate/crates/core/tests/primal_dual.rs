mod common;

use common::random_instance;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slqr::primal_dual::certify;
use slqr::{run_model_based, solve_gare_pi, DualIterate, FeedbackGain, SymMatrix};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tracks_policy_iteration(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3, channels in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, n, m, channels);
        let pi = solve_gare_pi(&inst.sys, &inst.w, &inst.f0, 1e-12, 100).unwrap();
        let pd = run_model_based(&inst.sys, &inst.w, &inst.f0, 1e-12, 100).unwrap();
        prop_assert_eq!(pi.log.len(), pd.log.len());
        for (a, b) in pi.log.entries.iter().zip(&pd.log.entries) {
            let x = DualIterate::new(SymMatrix::symmetrize(b.value.clone()), n).unwrap();
            let p = x.pull_back(&FeedbackGain(b.gain.clone()));
            prop_assert!((p.matrix() - &a.value).norm() <= 1e-9 * (1.0 + a.value.norm()));
            prop_assert!((&a.gain - &b.gain).norm() <= 1e-9 * (1.0 + a.gain.norm()));
        }
    }

    #[test]
    fn optimum_is_certified(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, n, m, 2);
        let pd = run_model_based(&inst.sys, &inst.w, &inst.f0, 1e-12, 100).unwrap();
        let xi = common::random_pd(&mut rng, n + m);
        let cert = certify(&inst.sys, &inst.w, &pd.f, &xi).unwrap();
        prop_assert!(cert.kkt.satisfied(1e-8));
        prop_assert!(cert.kkt.s_min > 0.0);
        let scale = 1.0 + xi.trace_product(pd.x.x.matrix()).abs();
        prop_assert!(cert.duality_gap.abs() <= 1e-8 * scale);
    }

    #[test]
    fn suboptimal_gain_breaks_stationarity(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, n, 1, 1);
        let pd = run_model_based(&inst.sys, &inst.w, &inst.f0, 1e-12, 100).unwrap();
        prop_assume!((pd.f.matrix() - inst.f0.matrix()).norm() > 1e-3);
        let cert = certify(&inst.sys, &inst.w, &inst.f0, &SymMatrix::identity(n + 1)).unwrap();
        prop_assert!(cert.kkt.r_station > 1e-6);
    }
}
