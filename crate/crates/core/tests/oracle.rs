//! Cross-checks of the exact solvers against brute force and simulation.

use psl_core::gridworld::{load_map, Action};
use psl_core::oracle::{
    build_explicit, evaluate_finite, max_safety_probability, policy_safety_probability, value_iteration,
    ExplicitProduct, Policy,
};
use psl_core::rng::EnvRng;
use psl_core::runtime::run_episode;
use psl_core::{fixtures, RewardSpec, Synced};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn product(map: &str, guard: &str) -> ExplicitProduct {
    build_explicit(&load_map(map).unwrap(), &fixtures::safeguard(guard), RewardSpec::new(-5.0)).unwrap()
}

/// Every deterministic stationary policy over the non-sink states.
fn all_policies(p: &ExplicitProduct) -> Vec<Vec<Action>> {
    let live: Vec<usize> = (0..p.num_states()).filter(|&x| !p.is_sink(x)).collect();
    let total = Action::COUNT.pow(live.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut actions = vec![Action::Stay; p.num_states()];
            for &x in &live {
                actions[x] = Action::from_index(code % Action::COUNT);
                code /= Action::COUNT;
            }
            actions
        })
        .collect()
}

/// Probability of never entering a sink: the row sums of `M^(2^64)`, where
/// `M` is the policy's kernel restricted to non-sink states.
fn survival(p: &ExplicitProduct, actions: &[Action]) -> Vec<f64> {
    let n = p.num_states();
    let mut m = vec![vec![0.0; n]; n];
    for x in (0..n).filter(|&x| !p.is_sink(x)) {
        for o in p.outcomes(x, actions[x]) {
            if !p.is_sink(o.next) {
                m[x][o.next] += o.prob;
            }
        }
    }
    for _ in 0..64 {
        let mut sq = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if m[i][k] != 0.0 {
                    for j in 0..n {
                        sq[i][j] += m[i][k] * m[k][j];
                    }
                }
            }
        }
        m = sq;
    }
    m.iter().map(|row| row.iter().sum()).collect()
}

fn discounted(p: &ExplicitProduct, actions: &[Action], gamma: f64, steps: usize) -> Vec<f64> {
    let n = p.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..steps {
        v = (0..n)
            .map(|x| {
                if p.is_sink(x) {
                    0.0
                } else {
                    p.outcomes(x, actions[x])
                        .iter()
                        .map(|o| o.prob * (o.reward + if p.is_sink(o.next) { 0.0 } else { gamma * v[o.next] }))
                        .sum()
                }
            })
            .collect();
    }
    v
}

const TINY: [(&str, &str); 3] = [
    (
        "grid 2 2\nslip 0.1\nagent 0 0\ncell 1 0 label lava p 0.5\ncell 0 1 label creeper p 0.3 reward 2\ncell 1 1 reward 1\n",
        "basic-lava",
    ),
    (
        "grid 2 2\nslip 0.2\nagent 0 0\ncell 1 0 label lava p 0.4 reward 3\ncell 0 1 label creeper p 0.3\ncell 1 1 reward 1\n",
        "basic-creeper",
    ),
    (
        "grid 2 1\nslip 0.3\nagent 0 0\ncell 1 0 label lava p 0.6 reward 1\ncell 0 0 label workbench p 0.5\n",
        "safeguard-1",
    ),
];

#[test]
fn max_safety_matches_policy_enumeration() {
    for (map, guard) in TINY {
        let p = product(map, guard);
        let solved = max_safety_probability(&p);
        let mut best = vec![0.0f64; p.num_states()];
        for actions in all_policies(&p) {
            for (b, v) in best.iter_mut().zip(survival(&p, &actions)) {
                *b = b.max(v);
            }
        }
        for x in 0..p.num_states() {
            assert!(
                (solved.probabilities[x] - best[x]).abs() < 1e-6,
                "{guard} state {x}: {} vs {}",
                solved.probabilities[x],
                best[x]
            );
        }
    }
}

#[test]
fn policy_safety_matches_matrix_powers() {
    for (map, guard) in TINY {
        let p = product(map, guard);
        for (i, actions) in all_policies(&p).iter().enumerate() {
            let exact = policy_safety_probability(&p, &Policy::from_actions(actions));
            for (x, (e, v)) in exact.iter().zip(survival(&p, actions)).enumerate() {
                assert!((e - v).abs() < 1e-6, "{guard} policy {i} state {x}: {e} vs {v}");
            }
        }
    }
}

#[test]
fn value_iteration_matches_best_deterministic_policy() {
    let gamma = 0.9;
    for (map, guard) in TINY {
        let p = product(map, guard);
        let vi = value_iteration(&p, gamma, 1e-12);
        let mut best = vec![f64::NEG_INFINITY; p.num_states()];
        for actions in all_policies(&p) {
            for (b, v) in best.iter_mut().zip(discounted(&p, &actions, gamma, 600)) {
                *b = b.max(v);
            }
        }
        for x in (0..p.num_states()).filter(|&x| !p.is_sink(x)) {
            assert!((vi.values[x] - best[x]).abs() < 1e-6, "{guard} state {x}: {} vs {}", vi.values[x], best[x]);
        }
        let greedy = discounted(&p, &vi.policy, gamma, 600);
        assert!((p.at_start(&greedy) - p.at_start(&best)).abs() < 1e-6);
    }
}

#[test]
fn random_policy_simulation_matches_finite_evaluation() {
    let map = fixtures::map("crafting");
    let g = fixtures::safeguard("safeguard-1");
    let spec = RewardSpec::default();
    let p = build_explicit(&map, &g, spec).unwrap();
    let exact = evaluate_finite(&p, &Policy::uniform(p.num_states()), map.horizon());
    let synced = Synced::new(&map, &g, spec).unwrap();
    let mut env = EnvRng::new(9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let episodes = 20_000;
    let mut violations = 0usize;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let trace = run_episode(
            &synced,
            |_, r: &mut ChaCha8Rng| Action::from_index(r.gen_range(0..Action::COUNT)),
            map.horizon(),
            &mut env,
            &mut rng,
        );
        violations += usize::from(trace.violated());
        returns.push(trace.steps.iter().map(|t| map.arrival_reward(t.to.s)).sum::<f64>());
    }
    let rate = violations as f64 / episodes as f64;
    assert!((rate - exact.violation).abs() <= 0.02, "{rate} vs {}", exact.violation);
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / episodes as f64).sqrt();
    let se = sd / (episodes as f64).sqrt();
    assert!((mean - exact.env_return).abs() <= 4.0 * se + 1e-9, "{mean} vs {} (se {se})", exact.env_return);
}

#[test]
fn optimal_policy_is_safest_on_graded_map() {
    let map = fixtures::map("graded-hazards");
    let g = fixtures::safeguard("safeguard-1");
    for r_n in [-1.0, -10.0, -100.0] {
        let report = psl_core::oracle::safety_optimality_check(&map, &g, RewardSpec::new(r_n), 0.95).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.pr_max < 1.0 && report.pr_max > 0.5);
    }
}
