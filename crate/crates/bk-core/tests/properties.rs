//! Property tests for the rate functionals, state caches and likelihood
//! accumulation over randomized laws, states and paths.

use bk_core::likelihood::{stopped_lr, LrMode};
use bk_core::model::{ModelParams, OffspringLaw, ProcessKind, SparseState};
use bk_core::sim::{simulate_path, StopRule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn law_strategy() -> impl Strategy<Value = OffspringLaw> {
    prop_oneof![
        (0.05f64..4.0).prop_map(|t| OffspringLaw::poisson(t).unwrap()),
        (0.05f64..4.0).prop_map(|t| OffspringLaw::geometric(t).unwrap()),
        (1u64..4).prop_map(|t| OffspringLaw::point_mass(t).unwrap()),
    ]
}

fn counts_strategy() -> impl Strategy<Value = Vec<(u64, u64)>> {
    proptest::collection::vec(((1u64..12), (1u64..5)), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_satisfy_order_and_thinning_identity(
        law in law_strategy(),
        counts in counts_strategy(),
        lambda in 0.2f64..3.0,
        mu in 0.2f64..3.0,
    ) {
        let state = SparseState::from_counts(&law, counts).unwrap();
        let n = state.infected_hosts().max(2) * 4;
        let p = ModelParams::new(lambda, mu, n, law).unwrap();

        let lam = p.infection_rate_branching(&state);
        let lam_n = p.infection_rate_epidemic(&state).unwrap();
        let rho = p.jump_rate_branching(&state);
        let rho_n = p.jump_rate_epidemic(&state).unwrap();

        prop_assert!(lam >= 0.0 && lam_n >= 0.0);
        prop_assert!(rho >= lam);
        prop_assert!(rho_n >= lam_n);
        prop_assert!(rho >= mu * state.total_parasites() as f64);

        let s = state.infected_hosts() as f64;
        let n = p.host_count() as f64;
        prop_assert!(((lam - lam_n) - (s / n) * lam).abs() <= 1e-12 * lam.max(1.0));
        // |Lambda_N / Lambda - 1| <= S/N
        prop_assert!((lam_n / lam - 1.0).abs() <= s / n + 1e-12);
    }

    #[test]
    fn paths_replay_and_ratio_stays_positive(
        law in law_strategy(),
        lambda in 0.2f64..2.5,
        mu in 0.2f64..2.5,
        seed in 0u64..1u64 << 48,
    ) {
        let p = ModelParams::new(lambda, mu, 300, law).unwrap();
        let initial = p.state_from_counts([(1, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 40;
        let path = simulate_path(&initial, &p, ProcessKind::Branching,
                                 StopRule::MaxTransitions(m), &mut rng).unwrap();
        prop_assert_eq!(path.events.len() as u64, m);
        let end = path.final_state().unwrap();
        prop_assert!(end.infective_weight() >= 0.0);

        let out = stopped_lr(&path, &p, LrMode::PerTransition, m).unwrap();
        prop_assert!(out.l_tilde > 0.0 && out.l_tilde.is_finite());
        prop_assert!(out.l_final > 0.0 && out.l_final.is_finite());
        prop_assert!(!out.log_l_tilde.is_nan());
        prop_assert_eq!(out.exponentials.len() as u64, m);
        prop_assert!(out.exponentials.iter().all(|e| *e >= 0.0));
    }

    #[test]
    fn state_caches_match_recomputation(
        law in law_strategy(),
        counts in counts_strategy(),
    ) {
        let state = SparseState::from_counts(&law, counts.clone()).unwrap();
        let mut s = 0u64;
        let mut p_total = 0u64;
        for &(level, hosts) in &counts {
            s += hosts;
            p_total += level * hosts;
        }
        prop_assert_eq!(state.infected_hosts(), s);
        prop_assert_eq!(state.total_parasites(), p_total);
        let w = state.recompute_weight();
        prop_assert!((state.infective_weight() - w).abs() <= 1e-12 * w.max(1.0));
        prop_assert!(w <= s as f64 + 1e-12);
    }
}
