use noma_mec::channel::SystemParams;
use noma_mec::dqn::{epsilon_at, forward, select_action, HyperParams, QNetwork, ReplayMemory, Transition};
use noma_mec::grouping::{action_to_pairing, enumerate_pairings, pairing_to_action, ActionIndex};
use noma_mec::harness::{compare_schemes, summarize, Scheme};
use noma_mec::rng;
use noma_mec::solver::{constraint_slack, solve_indicator, solve_pair, DecodeOrder, PairContext};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = PairContext> {
    (-2.0f64..8.0, -2.0f64..8.0, 0.2f64..0.3, 0.2f64..0.3, 0.1f64..10.0).prop_map(|(lg_a, lg_b, ta, tb, p_m)| {
        let params = SystemParams {
            primary_power_w: p_m,
            ..SystemParams::default()
        };
        PairContext::from_users(&params, (10f64.powf(lg_a), ta), (10f64.powf(lg_b), tb)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solution_is_feasible_and_best_of_both_orders(ctx in pair()) {
        let best = solve_pair(&ctx);
        prop_assert!(best.e_tot.is_finite() && best.e_tot >= 0.0);
        prop_assert!((0.0..=1.0).contains(&best.beta));
        for s in constraint_slack(&ctx, &best) {
            prop_assert!(s >= -1e-9, "slack {s}");
        }
        for order in DecodeOrder::ALL {
            if let Some(a) = solve_indicator(&ctx, order) {
                prop_assert!(best.e_tot <= a.e_tot);
            }
        }
    }

    #[test]
    fn hybrid_dominates_every_benchmark(ctx in pair()) {
        let e = compare_schemes(&[ctx]).unwrap()[0];
        let h = e.get(Scheme::HybridSic);
        for s in [Scheme::HybridSicBetaOne, Scheme::FixedOrder, Scheme::Oma] {
            prop_assert!(h <= e.get(s) * (1.0 + 1e-12), "{s:?}");
        }
    }

    #[test]
    fn action_index_round_trips(half in 1usize..=5, seed in any::<u64>()) {
        let k = 2 * half;
        let n = enumerate_pairings(k).unwrap();
        let idx = (seed % n as u64) as usize;
        let p = action_to_pairing(ActionIndex(idx), k).unwrap();
        prop_assert_eq!(pairing_to_action(&p).unwrap(), ActionIndex(idx));
    }

    #[test]
    fn network_outputs_stay_inside_tanh_range(seed in any::<u64>(), scale in 0.1f64..1.0) {
        let mut r = rng::stream(seed, rng::streams::INIT);
        let net = QNetwork::random(&[4, 8, 6, 3], &mut r).unwrap();
        let x = [scale, -scale, 0.5 * scale, 0.0];
        for q in forward(&net, &x).unwrap() {
            prop_assert!(q > -1.0 && q < 1.0, "{q}");
        }
    }

    #[test]
    fn greedy_choice_ignores_constant_shifts(q in prop::collection::vec(-1.0f64..1.0, 1..20), shift in -5.0f64..5.0) {
        let mut r = rng::stream(0, rng::streams::EXPLORATION);
        let shifted: Vec<f64> = q.iter().map(|v| v + shift).collect();
        let a = select_action(&q, 0.0, &mut r);
        let b = select_action(&shifted, 0.0, &mut r);
        prop_assert!((q[a.0] - q[b.0]).abs() <= 1e-9 * (1.0 + shift.abs()));
    }

    #[test]
    fn epsilon_is_monotone_and_bounded(a in 0u64..5000, b in 0u64..5000) {
        let hp = HyperParams::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(epsilon_at(hi, &hp) <= epsilon_at(lo, &hp));
        prop_assert!((hp.eps_lo..=hp.eps_hi).contains(&epsilon_at(a, &hp)));
    }

    #[test]
    fn replay_never_exceeds_capacity(capacity in 1usize..50, pushes in 0usize..200) {
        let mut mem = ReplayMemory::new(capacity);
        for i in 0..pushes {
            mem.push(Transition { s: vec![i as f64], a: 0, r: 0.0, s_next: vec![] });
            prop_assert!(mem.len() <= capacity);
        }
        let first_kept = pushes.saturating_sub(capacity) as f64;
        prop_assert!(mem.iter().all(|t| t.s[0] >= first_kept));
    }

    #[test]
    fn standard_error_is_non_negative(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let (mean, se) = summarize(&v);
        prop_assert!(se >= 0.0 && mean.is_finite());
    }
}
