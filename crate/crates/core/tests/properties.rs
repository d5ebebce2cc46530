mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use vsg_core::equilibria::{augment_with_signal, correlated_device, SignalScheme};
use vsg_core::game::*;
use vsg_core::mean_field::closed_form_policy;
use vsg_core::oracle::*;
use vsg_core::soft_eval::*;
use vsg_core::vpg::marginal_policy;

fn small_game(seed: u64, n: usize, ns: usize, na: usize) -> GameSpec {
    make_random_general_sum(seed, n, ns, na).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gaps_are_nonnegative_and_best_dominates(seed in any::<u64>(), n in 2usize..4, ns in 1usize..4, na in 2usize..4) {
        let g = small_game(seed, n, ns, na);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let m = random_marginals(&g, &mut rng);
        let rep = exploitability(&g, &m).unwrap();
        for i in 0..n {
            prop_assert!(rep.gaps[i] >= -1e-9);
            prop_assert!(rep.best[i] >= rep.achieved[i] - 1e-9);
        }
        prop_assert_eq!(rep.max_gap, rep.gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn marginal_policies_are_distributions(seed in any::<u64>(), ns in 1usize..4, na in 2usize..5) {
        let g = small_game(seed, 3, ns, na);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_conditioned(&g, 1, &mut rng);
        let rho = OpponentModel::from_marginals(1, &random_marginals(&g, &mut rng));
        for row in marginal_policy(&g, &pi, &rho) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn tilt_ignores_constant_shift(prior in prop::collection::vec(0.01f64..1.0, 2..6), shift in -100.0f64..100.0, seed in any::<u64>()) {
        let z: f64 = prior.iter().sum();
        let prior: Vec<f64> = prior.iter().map(|p| p / z).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_dist(prior.len(), 4.0, &mut rng).iter().map(|p| 5.0 * p.ln()).collect::<Vec<_>>();
        let moved: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        prop_assert!(tv(&tilt(&prior, &logits), &tilt(&prior, &moved)) < 1e-12);
        let u = uniform(prior.len());
        prop_assert!(tv(&tilt(&u, &logits), &softmax(&logits)) < 1e-12);
        let q: Vec<f64> = logits.clone();
        let a = closed_form_policy(&q, &vec![prior.clone()]);
        let b = closed_form_policy(&moved, &vec![prior.clone()]);
        prop_assert!(tv(&a[0], &b[0]) < 1e-12);
    }

    #[test]
    fn entropy_and_divergence_ranges(a in prop::collection::vec(-10.0f64..10.0, 2..8), seed in any::<u64>()) {
        let p = softmax(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_dist(p.len(), 3.0, &mut rng);
        let h = entropy(&p);
        prop_assert!(h >= -1e-15 && h <= (p.len() as f64).ln() + 1e-12);
        prop_assert!(kl(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl(&p, &p).unwrap().abs() < 1e-15);
        let d = tv(&p, &q);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn games_survive_json(seed in any::<u64>(), n in 2usize..4, ns in 1usize..4, na in 2usize..4) {
        let g = small_game(seed, n, ns, na);
        let back = GameSpec::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn augmented_games_validate(seed in any::<u64>(), k in 1usize..4) {
        let g = small_game(seed, 2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scheme = SignalScheme::new(random_dist(k, 2.0, &mut rng)).unwrap();
        let aug = augment_with_signal(&g, &scheme).unwrap();
        prop_assert!(aug.validate().is_empty());
        let m = random_marginals(&aug, &mut rng);
        for row in correlated_device(&g, &scheme, &m) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
