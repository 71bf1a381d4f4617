//! Progressive safeguarded Q-learning.
//!
//! Each safeguard state owns a value table over `(cell, action)`. Experience
//! is appended to the replay buffer of the current safeguard state and a
//! mini-batch from that buffer is replayed after every step. The first time a
//! safeguard state is reached, its table is seeded from the tables of its
//! ancestors in the safeguard graph, which carries safety knowledge from
//! simpler states (and, across a curriculum, from simpler safeguards) into new
//! ones.

mod bank;
mod explore;
mod replay;

use thiserror::Error;

pub use bank::{CheckpointError, QBank};
pub use explore::{boltzmann_action, boltzmann_probs};
pub use replay::{ReplayBuffer, Transition};

use crate::gridworld::{EnvState, GridMap};
use crate::metrics::{EpisodeRecord, RunMetrics};
use crate::rng::Streams;
use crate::runtime::{RewardSpec, RuntimeError, Step, Synced};
use crate::safeguard::{Safeguard, StateId};

/// How a newly visited table is seeded from its ancestors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferForm {
    /// `(1/k') * sum_i factor^(i-1) * mean(level i)` over the populated levels.
    #[default]
    Average,
    /// `theta += factor * (mean(nearest populated level) - theta)`.
    Interpolate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Learning rate.
    pub beta: f64,
    /// Geometric weight of deeper ancestor levels in the transfer.
    pub transfer_factor: f64,
    /// Number of ancestor levels consulted.
    pub depth: usize,
    pub transfer: TransferForm,
    pub transfer_enabled: bool,
    pub tau0: f64,
    /// Per-episode multiplicative temperature decay.
    pub tau_decay: f64,
    pub tau_min: f64,
    /// Restart the temperature schedule at each curriculum task.
    pub tau_reset_per_task: bool,
    pub batch: usize,
    pub capacity: usize,
    /// Episodes per task.
    pub episodes: usize,
    /// Overrides the map's horizon when set.
    pub horizon: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.95,
            beta: 0.1,
            transfer_factor: 0.5,
            depth: 1,
            transfer: TransferForm::Average,
            transfer_enabled: true,
            tau0: 1.0,
            tau_decay: 0.999,
            tau_min: 0.05,
            tau_reset_per_task: true,
            batch: 32,
            capacity: 100_000,
            episodes: 5000,
            horizon: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.transfer_factor > 0.0 && self.transfer_factor <= 1.0) {
            return bad("transfer factor must lie in (0, 1]");
        }
        if self.depth == 0 {
            return bad("ancestor depth must be at least 1");
        }
        if !(self.tau0 > 0.0 && self.tau_min > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("temperature decay must lie in (0, 1]");
        }
        if self.batch == 0 || self.capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive");
        }
        Ok(())
    }

    /// Temperature for the `e`-th episode of a schedule.
    pub fn temperature(&self, e: usize) -> f64 {
        (self.tau0 * self.tau_decay.powi(e.min(i32::MAX as usize) as i32)).max(self.tau_min)
    }

    pub fn horizon_for(&self, map: &GridMap) -> usize {
        self.horizon.unwrap_or(map.horizon())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("value bank is not keyed to safeguard '{0}'")]
    BankMismatch(String),
    #[error("incompatible alphabets: '{first}' and '{other}' declare different labels")]
    IncompatibleAlphabets { first: String, other: String },
    #[error("empty curriculum")]
    EmptyCurriculum,
}

/// Replays `batch` in order with
/// `Q(x,a) += beta * (r + gamma * max Q(x') - Q(x,a))`; terminal transitions
/// drop the bootstrap term.
pub fn td_update(bank: &mut QBank, batch: &[Transition], beta: f64, gamma: f64) {
    for t in batch {
        td_apply(bank, t, beta, gamma, 0.0);
    }
}

/// Single TD step with an extra `penalty` subtracted from the target.
#[inline]
pub(crate) fn td_apply(bank: &mut QBank, t: &Transition, beta: f64, gamma: f64, penalty: f64) {
    let bootstrap = if t.terminal { 0.0 } else { gamma * bank.max(t.next_q, t.next_s) };
    let target = t.reward + bootstrap - penalty;
    let old = bank.get(t.q, t.s, t.action);
    bank.set(t.q, t.s, t.action, old + beta * (target - old));
}

/// Seeds the table of `q` from its ancestor levels and marks it visited.
/// Only visited ancestor tables count; a level with none is unpopulated.
/// With no populated level the table keeps its current values.
pub fn transfer_init(bank: &mut QBank, g: &Safeguard, q: StateId, cfg: &LearnerConfig) {
    bank.mark_visited(q);
    let levels: Vec<(usize, Vec<StateId>)> = g
        .ancestors(q, cfg.depth)
        .into_iter()
        .enumerate()
        .map(|(i, level)| (i, level.into_iter().filter(|p| bank.is_visited(*p)).collect::<Vec<_>>()))
        .filter(|(_, level)| !level.is_empty())
        .collect();
    if levels.is_empty() {
        return;
    }
    let n = bank.table(q).len();
    let level_mean = |bank: &QBank, level: &[StateId], j: usize| {
        level.iter().map(|p| bank.table(*p)[j]).sum::<f64>() / level.len() as f64
    };
    match cfg.transfer {
        TransferForm::Average => {
            let k = levels.len() as f64;
            let seeded: Vec<f64> = (0..n)
                .map(|j| {
                    levels
                        .iter()
                        .map(|(i, level)| cfg.transfer_factor.powi(*i as i32) * level_mean(bank, level, j))
                        .sum::<f64>()
                        / k
                })
                .collect();
            bank.table_mut(q).copy_from_slice(&seeded);
        }
        TransferForm::Interpolate => {
            let nearest = &levels[0].1;
            let means: Vec<f64> = (0..n).map(|j| level_mean(bank, nearest, j)).collect();
            for (v, m) in bank.table_mut(q).iter_mut().zip(means) {
                *v += cfg.transfer_factor * (m - *v);
            }
        }
    }
}

/// Method-specific parts of the shared training loop.
pub(crate) trait Variant {
    /// Table that stores values for safeguard state `q`.
    fn key(&self, q: StateId) -> StateId;
    /// Reward the learner is trained on.
    fn reward(&self, step: &Step) -> f64;
    /// Subtracted from the TD target of a transition arriving in `next`.
    fn penalty(&self, _next: EnvState) -> f64 {
        0.0
    }
    /// Called the first time table `key` is reached during a task.
    fn on_first_visit(&self, bank: &mut QBank, key: StateId, cfg: &LearnerConfig);
    fn end_episode(&mut self, _positions: &[EnvState], _violated: bool) {}
}

struct Psl<'g> {
    guard: &'g Safeguard,
}

impl Variant for Psl<'_> {
    fn key(&self, q: StateId) -> StateId {
        q
    }

    fn reward(&self, step: &Step) -> f64 {
        step.reward
    }

    fn on_first_visit(&self, bank: &mut QBank, key: StateId, cfg: &LearnerConfig) {
        if cfg.transfer_enabled {
            transfer_init(bank, self.guard, key, cfg);
        } else {
            bank.mark_visited(key);
        }
    }
}

/// Where a task sits within a longer run.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TaskContext {
    pub task_index: usize,
    /// Episodes already recorded in the run.
    pub episode_offset: usize,
    /// Violations already recorded in the run.
    pub violation_offset: u64,
    /// Position in the temperature schedule of the task's first episode.
    pub tau_offset: usize,
}

pub(crate) fn train_loop<V: Variant>(
    synced: &Synced<'_>,
    cfg: &LearnerConfig,
    bank: &mut QBank,
    streams: &mut Streams,
    variant: &mut V,
    ctx: TaskContext,
) -> RunMetrics {
    let guard = synced.guard();
    let horizon = cfg.horizon_for(synced.map());
    let mut replay = ReplayBuffer::new(bank.num_tables(), cfg.capacity);
    let mut metrics = RunMetrics {
        records: Vec::with_capacity(cfg.episodes),
    };
    let mut violations = ctx.violation_offset;
    let mut positions = Vec::with_capacity(horizon + 1);
    let mut visited_this_task = vec![false; bank.num_tables()];
    let mut touch = |bank: &mut QBank, variant: &V, key: StateId| {
        if !visited_this_task[key.0] {
            visited_this_task[key.0] = true;
            if !bank.is_visited(key) {
                variant.on_first_visit(bank, key, cfg);
            }
        }
    };

    for e in 0..cfg.episodes {
        let tau = cfg.temperature(ctx.tau_offset + e);
        let (mut x, _) = synced.initial(&mut streams.env);
        positions.clear();
        positions.push(x.s);
        let mut ret = 0.0;
        let mut violated = guard.is_sink(x.q);
        let mut length = 0;
        if !violated {
            touch(bank, variant, variant.key(x.q));
            for _ in 0..horizon {
                let key = variant.key(x.q);
                let action = boltzmann_action(bank.row(key, x.s), tau, &mut streams.policy);
                let step = synced
                    .sync_step(x, action, &mut streams.env)
                    .expect("episodes stop at the first violation");
                length += 1;
                ret += step.env_reward;
                positions.push(step.next.s);
                let next_key = variant.key(step.next.q);
                if !step.violated {
                    touch(bank, variant, next_key);
                }
                replay.push(
                    key,
                    Transition {
                        s: x.s,
                        q: key,
                        action,
                        reward: variant.reward(&step),
                        next_s: step.next.s,
                        next_q: next_key,
                        terminal: step.violated,
                    },
                );
                for _ in 0..cfg.batch {
                    let t = *replay.sample(key, &mut streams.replay).expect("buffer was just filled");
                    let penalty = variant.penalty(t.next_s);
                    td_apply(bank, &t, cfg.beta, cfg.gamma, penalty);
                }
                x = step.next;
                if step.violated {
                    violated = true;
                    break;
                }
            }
        }
        violations += u64::from(violated);
        variant.end_episode(&positions, violated);
        metrics.records.push(EpisodeRecord {
            task_index: ctx.task_index,
            episode: ctx.episode_offset + e,
            ret,
            cum_violations: violations,
            length,
        });
    }
    metrics
}

/// Trains on one safeguard. `bank` must be keyed to `g`
/// (see [`QBank::new`] and [`QBank::rekey`]).
pub fn train_task(
    map: &GridMap,
    g: &Safeguard,
    spec: RewardSpec,
    cfg: &LearnerConfig,
    bank: &mut QBank,
    streams: &mut Streams,
) -> Result<RunMetrics, LearnError> {
    train_task_in(map, g, spec, cfg, bank, streams, TaskContext::default())
}

pub(crate) fn train_task_in(
    map: &GridMap,
    g: &Safeguard,
    spec: RewardSpec,
    cfg: &LearnerConfig,
    bank: &mut QBank,
    streams: &mut Streams,
    ctx: TaskContext,
) -> Result<RunMetrics, LearnError> {
    cfg.validate()?;
    if !bank.is_keyed_to(g) {
        return Err(LearnError::BankMismatch(g.name().to_string()));
    }
    let synced = Synced::new(map, g, spec)?;
    Ok(train_loop(&synced, cfg, bank, streams, &mut Psl { guard: g }, ctx))
}

#[derive(Debug, Clone)]
pub struct Task {
    pub guard: Safeguard,
    pub episodes: usize,
}

/// Safeguards trained in order over one shared label alphabet. Tables are
/// matched across tasks by state name.
#[derive(Debug, Clone)]
pub struct Curriculum {
    tasks: Vec<Task>,
}

impl Curriculum {
    pub fn new(tasks: Vec<Task>) -> Result<Self, LearnError> {
        let first = tasks.first().ok_or(LearnError::EmptyCurriculum)?;
        for t in &tasks[1..] {
            if t.guard.labels() != first.guard.labels() {
                return Err(LearnError::IncompatibleAlphabets {
                    first: first.guard.name().to_string(),
                    other: t.guard.name().to_string(),
                });
            }
        }
        Ok(Curriculum { tasks })
    }

    /// Every safeguard gets the same episode budget.
    pub fn uniform(guards: Vec<Safeguard>, episodes: usize) -> Result<Self, LearnError> {
        Self::new(guards.into_iter().map(|guard| Task { guard, episodes }).collect())
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Trains every task in order, carrying tables across by state name. Replay
/// buffers start empty for each task. Returns the final bank and the metrics
/// of the whole run, with `task_index` marking the task of each episode.
pub fn run_curriculum(
    map: &GridMap,
    curriculum: &Curriculum,
    spec: RewardSpec,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<(QBank, RunMetrics), LearnError> {
    let mut bank: Option<QBank> = None;
    let mut metrics = RunMetrics::default();
    for (i, task) in curriculum.tasks().iter().enumerate() {
        let mut current = match &bank {
            Some(b) => b.rekey(&task.guard),
            None => QBank::new(map, &task.guard),
        };
        let task_cfg = LearnerConfig {
            episodes: task.episodes,
            ..cfg.clone()
        };
        let ctx = TaskContext {
            task_index: i,
            episode_offset: metrics.len(),
            violation_offset: metrics.total_violations(),
            tau_offset: if cfg.tau_reset_per_task { 0 } else { metrics.len() },
        };
        let m = train_task_in(map, &task.guard, spec, &task_cfg, &mut current, streams, ctx)?;
        metrics.records.extend(m.records);
        bank = Some(current);
    }
    Ok((bank.expect("curriculum is non-empty"), metrics))
}
