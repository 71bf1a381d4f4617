//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own line, and exits non-zero when any of them fails.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use psl_core::gridworld::{load_map, Action, GridMap};
use psl_core::harness::{self, median, ExperimentConfig, Inputs, Method, RunSummary};
use psl_core::learner::{self, boltzmann_probs, Curriculum, Task};
use psl_core::oracle::{build_explicit, safety_optimality_check, value_iteration};
use psl_core::rng::{EnvRng, Streams};
use psl_core::safeguard::generate::random_safeguard;
use psl_core::{fixtures, baselines};
use psl_core::{EnvState, LabelSet, RewardSpec, Safeguard, StateId, Synced};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MACHINES: usize = 100;
const TRACES_PER_MACHINE: usize = 1000;
const MAX_TRACE_LEN: usize = 50;
const SAFETY_TOL: f64 = 1e-6;
const RETURN_RATIO: f64 = 0.9;
const VIOLATION_FACTOR: f64 = 10.0;
const SEED_MAJORITY: usize = 8;
const WARM_WINDOW: usize = 200;
const SWEEP_SPREAD: f64 = 0.05;
const SUM_TOL: f64 = 1e-12;
const CHI2_SAMPLES: usize = 100_000;

type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn random_machines() -> Vec<Safeguard> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..MACHINES)
        .map(|_| {
            let states = rng.gen_range(1..=10);
            let labels = rng.gen_range(0..=4);
            random_safeguard(&mut rng, states, labels)
        })
        .collect()
}

/// A 1-row corridor with no slip whose cell `t` shows `trace[t]` with
/// certainty, so walking east replays the trace through the runtime.
fn trace_corridor(g: &Safeguard, trace: &[LabelSet]) -> GridMap {
    let mut text = format!("grid {} 1\nslip 0\nhorizon {}\nagent 0 0\n", trace.len(), trace.len());
    for (t, l) in trace.iter().enumerate() {
        if !l.is_empty() {
            let names: Vec<&str> = l.indices().map(|i| g.labels()[i].as_str()).collect();
            text.push_str(&format!("cell {t} 0 label {} p 1\n", names.join("+")));
        }
    }
    load_map(&text).expect("corridor map")
}

fn monitor_equivalence() -> Outcome {
    let machines = random_machines();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for g in &machines {
        let n = g.labels().len();
        for _ in 0..TRACES_PER_MACHINE {
            let len = rng.gen_range(1..=MAX_TRACE_LEN);
            let trace: Vec<LabelSet> = (0..len)
                .map(|_| LabelSet::from_bits(rng.gen::<u32>() & ((1u32 << n) - 1)))
                .collect();
            let map = trace_corridor(g, &trace);
            let synced = Synced::monitor(&map, g).expect("random machines are deterministic");
            let mut env = EnvRng::new(0);
            let (mut x, l0) = synced.initial(&mut env);
            assert_eq!(l0, trace[0]);
            let mut violated = g.is_sink(x.q);
            for t in 0..len {
                if t > 0 {
                    if violated {
                        break;
                    }
                    let step = synced.sync_step(x, Action::East, &mut env).unwrap();
                    assert_eq!(step.labels, trace[t]);
                    violated = step.violated;
                    x = step.next;
                }
                checked += 1;
                if violated != g.is_unsafe_run(&trace[..=t]).unwrap() {
                    mismatches += 1;
                }
            }
            if !violated {
                // Full trace replayed without a sink: offline must agree.
                if g.is_unsafe_run(&trace).unwrap() {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over {checked} prefixes of {} traces", MACHINES * TRACES_PER_MACHINE),
    }
}

/// States with no path to an accepting state, by breadth-first search over
/// every label set from every state.
fn brute_force_sinks(g: &Safeguard) -> BTreeSet<StateId> {
    let n = g.labels().len();
    g.states()
        .filter(|&q| {
            let mut seen = vec![false; g.num_states()];
            let mut queue = VecDeque::from([q]);
            seen[q.0] = true;
            while let Some(p) = queue.pop_front() {
                if g.is_accepting(p) {
                    return false;
                }
                for l in LabelSet::all(n) {
                    let r = g.step(p, l).unwrap();
                    if !seen[r.0] {
                        seen[r.0] = true;
                        queue.push_back(r);
                    }
                }
            }
            true
        })
        .collect()
}

fn sink_equivalence() -> Outcome {
    let machines = random_machines();
    let random_bad = machines.iter().filter(|g| g.rejecting_sinks() != brute_force_sinks(g)).count();
    let mut fixture_bad = Vec::new();
    for name in fixtures::SAFEGUARDS {
        let g = fixtures::safeguard(name);
        let sinks = g.rejecting_sinks();
        if sinks != brute_force_sinks(&g) || sinks != g.rejecting_components() {
            fixture_bad.push(*name);
        }
    }
    Outcome {
        pass: random_bad == 0 && fixture_bad.is_empty(),
        detail: format!(
            "{random_bad}/{MACHINES} random machines differ; {} shipped safeguards checked against components{}",
            fixtures::SAFEGUARDS.len(),
            if fixture_bad.is_empty() { String::new() } else { format!(", mismatched: {fixture_bad:?}") }
        ),
    }
}

fn optimal_policy_is_safest() -> Outcome {
    let map = fixtures::map("graded-hazards");
    let g = fixtures::safeguard("safeguard-1");
    let mut worst: f64 = 0.0;
    let mut pr_max = f64::NAN;
    for r_n in [-1.0, -10.0, -100.0] {
        let report = safety_optimality_check(&map, &g, RewardSpec::new(r_n), 0.95).expect("preconditions hold");
        worst = worst.max((report.pr_pi_star - report.pr_max).abs());
        pr_max = report.pr_max;
    }
    Outcome {
        pass: worst <= SAFETY_TOL && pr_max < 1.0,
        detail: format!("Pr_max {pr_max:.9}, largest gap {worst:.2e} (tol {SAFETY_TOL:.0e})"),
    }
}

fn load_experiment(name: &str) -> (ExperimentConfig, Inputs) {
    let cfg = ExperimentConfig::load(&fixture_dir().join("experiments").join(name)).expect("shipped config");
    let inputs = Inputs::load(&cfg).expect("shipped inputs");
    (cfg, inputs)
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn of(rows: &[RunSummary], m: Method) -> Vec<&RunSummary> {
    let mut v: Vec<&RunSummary> = rows.iter().filter(|r| r.method == m).collect();
    v.sort_by_key(|r| r.seed);
    v
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = v.collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn method_ordering() -> Outcome {
    let (cfg, inputs) = load_experiment("crafting.cfg");
    let out = tempfile::tempdir().unwrap();
    let results = harness::run_experiment(&cfg, &inputs, out.path(), jobs()).expect("experiment runs");
    let rows: Vec<RunSummary> = results.into_iter().map(|r| r.summary).collect();
    let (psl, vanilla, zero) = (of(&rows, Method::Psl), of(&rows, Method::Vanilla), of(&rows, Method::ZeroShot));
    let ret = |v: &[&RunSummary]| mean(v.iter().map(|r| r.final_return));
    let (r_psl, r_van, r_zero) = (ret(&psl), ret(&vanilla), ret(&zero));
    let a = r_psl >= RETURN_RATIO * r_van;
    let b = r_zero < r_psl;
    let fewer = psl
        .iter()
        .zip(&zero)
        .filter(|(p, z)| p.final_task_violations < z.total_violations)
        .count();
    let tenfold = psl
        .iter()
        .zip(&vanilla)
        .filter(|(p, v)| v.total_violations as f64 >= VIOLATION_FACTOR * p.final_task_violations as f64)
        .count();
    let c = fewer >= SEED_MAJORITY && tenfold >= SEED_MAJORITY;
    Outcome {
        pass: a && b && c,
        detail: format!(
            "final return psl {r_psl:.2} vanilla {r_van:.2} zero-shot {r_zero:.2}; \
             psl < zero-shot violations in {fewer}/{n} seeds, vanilla >= {VIOLATION_FACTOR}x psl in {tenfold}/{n}",
            n = psl.len()
        ),
    }
}

fn transfer_benefit() -> Outcome {
    let (cfg, _) = load_experiment("crafting.cfg");
    let map = fixtures::map("crafting");
    let first = fixtures::safeguard("safeguard-1");
    let second = fixtures::safeguard("safeguard-2");
    let spec = cfg.spec;
    let mut diffs = Vec::new();
    let mut pairs = Vec::new();
    for &seed in &cfg.seeds {
        let curriculum = Curriculum::new(vec![
            Task { guard: first.clone(), episodes: cfg.learner.episodes },
            Task { guard: second.clone(), episodes: WARM_WINDOW },
        ])
        .unwrap();
        let (_, warm) = learner::run_curriculum(&map, &curriculum, spec, &cfg.learner, &mut Streams::new(seed)).unwrap();
        let warm_v = warm.task_violations_first(1, WARM_WINDOW);
        let cold_cfg = psl_core::LearnerConfig { episodes: WARM_WINDOW, ..cfg.learner.clone() };
        let (_, cold) = baselines::zero_shot_train(&map, &second, spec, &cold_cfg, &mut Streams::new(seed)).unwrap();
        let cold_v = cold.total_violations();
        diffs.push(warm_v as f64 - cold_v as f64);
        pairs.push((warm_v, cold_v));
    }
    let med = median(&diffs);
    let warm_med = median(&pairs.iter().map(|p| p.0 as f64).collect::<Vec<_>>());
    let cold_med = median(&pairs.iter().map(|p| p.1 as f64).collect::<Vec<_>>());
    Outcome {
        pass: med <= 0.0,
        detail: format!(
            "first {WARM_WINDOW} episodes: median warm {warm_med} cold {cold_med}, median paired difference {med}"
        ),
    }
}

fn penalty_sweep() -> Outcome {
    let (cfg, inputs) = load_experiment("penalty-sweep.cfg");
    let out = tempfile::tempdir().unwrap();
    let values = [-1.0, -10.0, -100.0];
    let result = harness::sweep(&cfg, &inputs, &values, out.path(), jobs()).expect("sweep runs");
    let points: Vec<_> = values
        .iter()
        .map(|v| result.points.iter().find(|p| p.r_n == *v && p.method == Method::Psl).expect("sweep point"))
        .collect();
    let violations: Vec<f64> = points.iter().map(|p| p.median_violations).collect();
    let returns: Vec<f64> = points.iter().map(|p| p.median_greedy_return).collect();
    let monotone = violations.windows(2).all(|w| w[1] <= w[0]);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi.abs();
    Outcome {
        pass: monotone && lo > 0.0 && spread <= SWEEP_SPREAD,
        detail: format!(
            "median violations {violations:?}, median greedy return {:?}, spread {:.3} (max {SWEEP_SPREAD})",
            returns.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
            spread
        ),
    }
}

/// Upper 0.1% points of the chi-squared distribution, by degrees of freedom.
const CHI2_CRITICAL: [f64; 5] = [f64::NAN, 10.828, 13.816, 16.266, 18.467];

fn numerical_hygiene() -> Outcome {
    let mut failures = Vec::new();

    let mut worst_row: f64 = 0.0;
    for name in fixtures::MAPS {
        let map = fixtures::map(name);
        for s in map.states() {
            for a in Action::ALL {
                let sum: f64 = map.transition_distribution(s, a).iter().map(|(_, p)| p).sum();
                worst_row = worst_row.max((sum - 1.0).abs());
            }
        }
    }
    if worst_row > SUM_TOL {
        failures.push(format!("kernel row off by {worst_row:e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_soft: f64 = 0.0;
    for _ in 0..10_000 {
        let values: Vec<f64> = (0..Action::COUNT).map(|_| rng.gen_range(-1e6..=1e6)).collect();
        let tau = [0.05, 0.1, 1.0, 10.0, 1e3][rng.gen_range(0..5)];
        let p = boltzmann_probs(&values, tau);
        if p.iter().any(|x| !x.is_finite()) {
            failures.push(format!("non-finite Boltzmann probabilities for {values:?}"));
            break;
        }
        worst_soft = worst_soft.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    if worst_soft > SUM_TOL {
        failures.push(format!("Boltzmann sum off by {worst_soft:e}"));
    }

    let tol = 1e-8;
    let mut worst_residual: f64 = 0.0;
    for (m, g) in [("crafting", "safeguard-3"), ("graded-hazards", "safeguard-1"), ("layout-ring", "safeguard-2")] {
        let p = build_explicit(&fixtures::map(m), &fixtures::safeguard(g), RewardSpec::default()).unwrap();
        let vi = value_iteration(&p, 0.95, tol);
        worst_residual = worst_residual.max(vi.residual());
    }
    if worst_residual >= tol {
        failures.push(format!("value iteration residual {worst_residual:e}"));
    }

    let map = fixtures::map("crafting");
    let mut worst_chi2 = 0.0f64;
    let cases = [
        (EnvState::new(0, 0), Action::North),
        (EnvState::new(4, 4), Action::East),
        (EnvState::new(9, 5), Action::East),
        (EnvState::new(3, 9), Action::West),
    ];
    for (i, (s, a)) in cases.into_iter().enumerate() {
        let dist = map.transition_distribution(s, a);
        let mut counts = vec![0usize; dist.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..CHI2_SAMPLES {
            let next = map.sample_move(s, a, &mut rng);
            counts[dist.iter().position(|(t, _)| *t == next).expect("sample inside support")] += 1;
        }
        let chi2: f64 = dist
            .iter()
            .zip(&counts)
            .map(|((_, p), &c)| {
                let e = p * CHI2_SAMPLES as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let critical = CHI2_CRITICAL[dist.len() - 1];
        worst_chi2 = worst_chi2.max(chi2 / critical);
        if chi2 > critical {
            failures.push(format!("chi2 {chi2:.2} > {critical} at {s:?} {a:?}"));
        }
    }

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "row sums within {worst_row:.1e}, softmax within {worst_soft:.1e}, \
                 VI residual {worst_residual:.1e}, worst chi2/critical {worst_chi2:.2}"
            )
        } else {
            failures.join("; ")
        },
    }
}

fn output_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "timing.csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let (mut cfg, inputs) = load_experiment("crafting.cfg");
    cfg.learner.episodes = 100;
    cfg.final_window = 50;
    cfg.seeds = vec![0, 1, 2];
    let dir = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for (i, jobs) in [1, 4, 1].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        harness::run_experiment(&cfg, &inputs, &out, jobs).expect("experiment runs");
        snapshots.push(output_files(&out));
    }
    let same = snapshots.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        pass: same && !snapshots[0].is_empty(),
        detail: format!("{} output files compared across --jobs 1, 4, 1", snapshots[0].len()),
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("monitor equivalence", Duration::from_secs(10), monitor_equivalence),
        ("sink oracle equivalence", Duration::from_secs(5), sink_equivalence),
        ("optimal policy is maximally safe", Duration::from_secs(30), optimal_policy_is_safest),
        ("method ordering on the crafting map", Duration::from_secs(15 * 60), method_ordering),
        ("warm start beats cold start", Duration::from_secs(5 * 60), transfer_benefit),
        ("penalty sweep", Duration::from_secs(20 * 60), penalty_sweep),
        ("numerical hygiene", Duration::from_secs(60), numerical_hygiene),
        ("determinism across job counts", Duration::from_secs(10 * 60), determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed < budget;
        failed += usize::from(!pass);
        println!(
            "{} {}. {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
