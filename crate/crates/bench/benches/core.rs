use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use psl_core::fixtures;
use psl_core::gridworld::Action;
use psl_core::learner::Transition;
use psl_core::learner::{self, LearnerConfig};
use psl_core::oracle::{build_explicit, max_safety_probability, value_iteration};
use psl_core::rng::{EnvRng, Streams};
use psl_core::{LabelSet, QBank, RewardSpec, Synced};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn safeguard_step(c: &mut Criterion) {
    let g = fixtures::safeguard("safeguard-3");
    let n = g.labels().len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trace: Vec<LabelSet> = (0..1024)
        .map(|_| LabelSet::from_bits(rng.gen::<u32>() & ((1 << n) - 1)))
        .collect();
    c.bench_function("safeguard_run_1024", |b| {
        b.iter(|| {
            let mut q = g.initial();
            for &l in &trace {
                q = g.next(q, black_box(l));
            }
            q
        })
    });
}

fn sync_step(c: &mut Criterion) {
    let map = fixtures::map("crafting");
    let g = fixtures::safeguard("safeguard-3");
    let synced = Synced::new(&map, &g, RewardSpec::default()).unwrap();
    let mut rng = EnvRng::new(1);
    let (start, _) = synced.initial(&mut rng);
    let mut x = start;
    let mut i = 0usize;
    c.bench_function("sync_step", |b| {
        b.iter(|| {
            let step = synced.sync_step(x, Action::from_index(i % 4), &mut rng).unwrap();
            i += 1;
            x = if step.violated || i.is_multiple_of(100) { start } else { step.next };
            black_box(step.reward)
        })
    });
}

fn td_update(c: &mut Criterion) {
    let map = fixtures::map("crafting");
    let g = fixtures::safeguard("safeguard-2");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<Transition> = (0..32)
        .map(|_| {
            let q = psl_core::StateId(rng.gen_range(0..g.num_states()));
            Transition {
                s: psl_core::EnvState::new(rng.gen_range(0..10), rng.gen_range(0..10)),
                q,
                action: Action::from_index(rng.gen_range(0..Action::COUNT)),
                reward: rng.gen_range(-1.0..1.0),
                next_s: psl_core::EnvState::new(rng.gen_range(0..10), rng.gen_range(0..10)),
                next_q: q,
                terminal: rng.gen_bool(0.1),
            }
        })
        .collect();
    c.bench_function("td_update_batch32", |b| {
        b.iter_batched(
            || QBank::new(&map, &g),
            |mut bank| {
                learner::td_update(&mut bank, &batch, 0.1, 0.95);
                bank
            },
            BatchSize::SmallInput,
        )
    });
}

fn training(c: &mut Criterion) {
    let map = fixtures::map("crafting");
    let g = fixtures::safeguard("safeguard-1");
    let cfg = LearnerConfig {
        episodes: 20,
        ..LearnerConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("safeguard-1_20_episodes", |b| {
        b.iter(|| {
            let mut bank = QBank::new(&map, &g);
            learner::train_task(&map, &g, RewardSpec::default(), &cfg, &mut bank, &mut Streams::new(0)).unwrap()
        })
    });
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let map = fixtures::map("crafting");
    let g = fixtures::safeguard("safeguard-3");
    let p = build_explicit(&map, &g, RewardSpec::default()).unwrap();
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("build_explicit_safeguard-3", |b| {
        b.iter(|| build_explicit(&map, &g, RewardSpec::default()).unwrap())
    });
    group.bench_function("value_iteration_safeguard-3", |b| b.iter(|| value_iteration(&p, 0.95, 1e-9)));
    group.bench_function("max_safety_probability_safeguard-3", |b| b.iter(|| max_safety_probability(&p)));
    group.finish();
}

criterion_group!(benches, safeguard_step, sync_step, td_update, training, oracle);
criterion_main!(benches);
