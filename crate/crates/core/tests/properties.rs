use proptest::prelude::*;
use psl_core::gridworld::{load_map, Action, EnvState};
use psl_core::learner::{boltzmann_probs, td_update, Transition};
use psl_core::safeguard::generate::random_safeguard;
use psl_core::{parse_safeguard, LabelSet, QBank, Safeguard, StateId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn machine(seed: u64, states: usize, labels: usize) -> Safeguard {
    random_safeguard(&mut ChaCha8Rng::seed_from_u64(seed), states, labels)
}

fn label_sets(n: usize) -> Vec<LabelSet> {
    LabelSet::all(n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_machines_are_deterministic_and_complete(seed in any::<u64>(), states in 1usize..=10, labels in 0usize..=4) {
        let g = machine(seed, states, labels);
        prop_assert!(g.validate_determinism().is_ok());
        for q in g.states() {
            for l in label_sets(labels) {
                prop_assert!(g.step(q, l).is_ok());
            }
        }
    }

    #[test]
    fn text_round_trip_keeps_transitions(seed in any::<u64>(), states in 1usize..=8, labels in 0usize..=4) {
        let g = machine(seed, states, labels);
        let h = parse_safeguard(&g.to_text()).unwrap();
        prop_assert_eq!(g.rejecting_sinks(), h.rejecting_sinks());
        for q in g.states() {
            for l in label_sets(labels) {
                prop_assert_eq!(g.next(q, l), h.next(q, l));
            }
        }
    }

    #[test]
    fn sinks_are_closed_and_rejecting(seed in any::<u64>(), states in 1usize..=10, labels in 0usize..=4) {
        let g = machine(seed, states, labels);
        let sinks = g.rejecting_sinks();
        for &q in &sinks {
            prop_assert!(!g.is_accepting(q));
            for l in label_sets(labels) {
                prop_assert!(sinks.contains(&g.next(q, l)));
            }
        }
    }

    #[test]
    fn unsafety_is_monotone_in_prefixes(
        seed in any::<u64>(),
        states in 1usize..=10,
        labels in 0usize..=4,
        raw in prop::collection::vec(any::<u32>(), 0..50),
    ) {
        let g = machine(seed, states, labels);
        let mask = (1u32 << labels) - 1;
        let trace: Vec<LabelSet> = raw.iter().map(|b| LabelSet::from_bits(b & mask)).collect();
        let mut seen_unsafe = false;
        for t in 0..=trace.len() {
            let unsafe_now = g.is_unsafe_run(&trace[..t]).unwrap();
            prop_assert!(!seen_unsafe || unsafe_now);
            seen_unsafe = unsafe_now;
        }
    }

    #[test]
    fn ancestor_levels_are_disjoint(seed in any::<u64>(), states in 1usize..=10, labels in 0usize..=3, depth in 1usize..=4) {
        let g = machine(seed, states, labels);
        let sinks = g.rejecting_sinks();
        for q in g.states() {
            let levels = g.ancestors(q, depth);
            prop_assert!(levels.len() <= depth);
            let mut seen = vec![q];
            for level in &levels {
                prop_assert!(!level.is_empty());
                for p in level {
                    prop_assert!(!seen.contains(p));
                    prop_assert!(!sinks.contains(p));
                    seen.push(*p);
                }
            }
        }
    }

    #[test]
    fn kernel_rows_sum_to_one(
        width in 1usize..=6,
        height in 1usize..=6,
        slip in 0.0f64..=1.0,
        col in 0usize..6,
        row in 0usize..6,
        a in 0usize..Action::COUNT,
    ) {
        let map = load_map(&format!("grid {width} {height}\nslip {slip}\nagent 0 0\n")).unwrap();
        let s = EnvState::new(col % width, row % height);
        let dist = map.transition_distribution(s, Action::from_index(a));
        let sum: f64 = dist.iter().map(|(_, p)| p).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(dist.iter().all(|(t, p)| *p > 0.0 && map.in_bounds(*t)));
    }

    #[test]
    fn boltzmann_is_a_distribution(values in prop::array::uniform5(-1e6f64..1e6), tau in 0.01f64..100.0) {
        let p = boltzmann_probs(&values, tau);
        prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let best = (0..5).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
        prop_assert!(p.iter().all(|x| *x <= p[best] + 1e-15));
    }

    #[test]
    fn td_update_touches_only_batch_entries(
        entries in prop::collection::vec((0usize..3, 0usize..4, 0usize..5, -5.0f64..5.0, any::<bool>()), 1..20),
    ) {
        let map = load_map("grid 2 2\nagent 0 0\n").unwrap();
        let g = parse_safeguard(
            "state a initial accepting\nstate b accepting\nstate c accepting\n\
             trans a -> a on true\ntrans b -> b on true\ntrans c -> c on true\n",
        ).unwrap();
        let mut bank = QBank::new(&map, &g);
        for q in 0..3 {
            for (i, v) in bank.table_mut(StateId(q)).iter_mut().enumerate() {
                *v = (q * 100 + i) as f64 * 0.01;
            }
        }
        let before = bank.clone();
        let batch: Vec<Transition> = entries
            .iter()
            .map(|&(q, cell, a, r, terminal)| Transition {
                s: EnvState::new(cell % 2, cell / 2),
                q: StateId(q),
                action: Action::from_index(a),
                reward: r,
                next_s: EnvState::new((cell + 1) % 2, 0),
                next_q: StateId(q),
                terminal,
            })
            .collect();
        td_update(&mut bank, &batch, 0.1, 0.9);
        for q in 0..3 {
            for cell in 0..4 {
                let s = EnvState::new(cell % 2, cell / 2);
                for a in Action::ALL {
                    let touched = batch.iter().any(|t| t.q.0 == q && t.s == s && t.action == a);
                    if !touched {
                        prop_assert_eq!(bank.get(StateId(q), s, a), before.get(StateId(q), s, a));
                    }
                }
            }
        }
    }
}
