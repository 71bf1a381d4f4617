//! Lock-step execution of a gridworld and a safeguard.
//!
//! The product of map and safeguard is never built: each step samples the
//! environment, feeds the observed labels to the safeguard and shapes the
//! reward. Entering a rejecting sink pays the penalty `r_n` instead of the
//! environment reward and ends the episode.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::gridworld::{sample_dist, Action, EnvState, GridMap};
use crate::rng::EnvRng;
use crate::safeguard::{LabelSet, Safeguard, StateId};

pub const DEFAULT_PENALTY: f64 = -10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductState {
    pub s: EnvState,
    pub q: StateId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    /// Reward paid on entering a rejecting sink.
    pub r_n: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { r_n: DEFAULT_PENALTY }
    }
}

impl RewardSpec {
    pub fn new(r_n: f64) -> Self {
        RewardSpec { r_n }
    }

    /// The penalty must lie strictly below every arrival reward of the map.
    pub fn validate(&self, map: &GridMap) -> Result<(), RuntimeError> {
        let min_reward = map.min_reward();
        if self.r_n.is_finite() && self.r_n < min_reward {
            Ok(())
        } else {
            Err(RuntimeError::PenaltyTooHigh {
                r_n: self.r_n,
                min_reward,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("penalty r_n = {r_n} is not below the smallest map reward {min_reward}")]
    PenaltyTooHigh { r_n: f64, min_reward: f64 },
    #[error("safeguard '{0}' is not deterministic and complete")]
    Nondeterministic(String),
    #[error("cannot step from rejecting sink state '{0}'")]
    StepFromSink(String),
}

/// A map and a safeguard bound together, with each cell's label distribution
/// projected onto the safeguard's alphabet. Map labels the safeguard does not
/// mention are dropped.
#[derive(Debug, Clone)]
pub struct Synced<'a> {
    map: &'a GridMap,
    guard: &'a Safeguard,
    spec: RewardSpec,
    labels: Vec<Vec<(LabelSet, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: ProductState,
    /// Shaped reward: `r_n` on violation, the environment reward otherwise.
    pub reward: f64,
    pub env_reward: f64,
    pub labels: LabelSet,
    pub violated: bool,
}

impl<'a> Synced<'a> {
    pub fn new(map: &'a GridMap, guard: &'a Safeguard, spec: RewardSpec) -> Result<Self, RuntimeError> {
        spec.validate(map)?;
        let mut synced = Self::monitor(map, guard)?;
        synced.spec = spec;
        Ok(synced)
    }

    /// Binding for methods that only watch the safeguard and never read `r_n`.
    pub fn monitor(map: &'a GridMap, guard: &'a Safeguard) -> Result<Self, RuntimeError> {
        if !guard.validate_determinism().is_ok() {
            return Err(RuntimeError::Nondeterministic(guard.name().to_string()));
        }
        let projection: Vec<Option<usize>> = map.labels().iter().map(|l| guard.label_index(l)).collect();
        let labels = map
            .states()
            .map(|s| project(&map.cell(s).label_dist, &projection))
            .collect();
        Ok(Synced {
            map,
            guard,
            spec: RewardSpec::default(),
            labels,
        })
    }

    pub fn map(&self) -> &'a GridMap {
        self.map
    }

    pub fn guard(&self) -> &'a Safeguard {
        self.guard
    }

    pub fn spec(&self) -> RewardSpec {
        self.spec
    }

    /// Distribution over safeguard label sets observed on arrival in `s`.
    pub fn label_dist(&self, s: EnvState) -> &[(LabelSet, f64)] {
        &self.labels[self.map.index(s)]
    }

    pub fn sample_labels<R: Rng + ?Sized>(&self, s: EnvState, rng: &mut R) -> LabelSet {
        sample_dist(self.label_dist(s), rng)
    }

    /// Draws a start cell and advances the safeguard once on its label.
    pub fn initial(&self, rng: &mut EnvRng) -> (ProductState, LabelSet) {
        let s = self.map.reset(&mut rng.motion);
        let l = self.sample_labels(s, &mut rng.labels);
        let q = self.guard.next(self.guard.initial(), l);
        (ProductState { s, q }, l)
    }

    pub fn sync_step(&self, x: ProductState, a: Action, rng: &mut EnvRng) -> Result<Step, RuntimeError> {
        if self.guard.is_sink(x.q) {
            return Err(RuntimeError::StepFromSink(self.guard.state_name(x.q).to_string()));
        }
        let s = self.map.sample_move(x.s, a, &mut rng.motion);
        let l = self.sample_labels(s, &mut rng.labels);
        let q = self.guard.next(x.q, l);
        let env_reward = self.map.arrival_reward(s);
        let violated = self.guard.is_sink(q);
        Ok(Step {
            next: ProductState { s, q },
            reward: if violated { self.spec.r_n } else { env_reward },
            env_reward,
            labels: l,
            violated,
        })
    }
}

fn project(dist: &[(LabelSet, f64)], projection: &[Option<usize>]) -> Vec<(LabelSet, f64)> {
    let mut out: Vec<(LabelSet, f64)> = Vec::new();
    for &(l, p) in dist {
        let mapped = l
            .indices()
            .filter_map(|i| projection.get(i).copied().flatten())
            .fold(LabelSet::EMPTY, LabelSet::with);
        match out.iter_mut().find(|(m, _)| *m == mapped) {
            Some(entry) => entry.1 += p,
            None => out.push((mapped, p)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub from: ProductState,
    pub action: Action,
    pub reward: f64,
    pub to: ProductState,
    pub labels: LabelSet,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub start: ProductState,
    pub start_labels: LabelSet,
    pub steps: Vec<TraceStep>,
    pub termination: Termination,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn violated(&self) -> bool {
        self.termination == Termination::Violation
    }

    /// Sum of shaped rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }

    /// Observed label sets, the start cell's included.
    pub fn label_trace(&self) -> Vec<LabelSet> {
        std::iter::once(self.start_labels)
            .chain(self.steps.iter().map(|t| t.labels))
            .collect()
    }

    /// Visited environment states `s_0 .. s_T`.
    pub fn positions(&self) -> Vec<EnvState> {
        std::iter::once(self.start.s)
            .chain(self.steps.iter().map(|t| t.to.s))
            .collect()
    }
}

/// Runs one episode of at most `horizon` steps. A start cell whose label
/// already leads into a sink yields an empty, violation-terminated trace.
pub fn run_episode<P, R>(
    synced: &Synced<'_>,
    mut policy: P,
    horizon: usize,
    env_rng: &mut EnvRng,
    policy_rng: &mut R,
) -> EpisodeTrace
where
    P: FnMut(ProductState, &mut R) -> Action,
    R: Rng + ?Sized,
{
    let (start, start_labels) = synced.initial(env_rng);
    let mut trace = EpisodeTrace {
        start,
        start_labels,
        steps: Vec::new(),
        termination: Termination::Horizon,
    };
    if synced.guard().is_sink(start.q) {
        trace.termination = Termination::Violation;
        return trace;
    }
    let mut x = start;
    for _ in 0..horizon {
        let a = policy(x, policy_rng);
        let step = synced.sync_step(x, a, env_rng).expect("episode stops at the first violation");
        trace.steps.push(TraceStep {
            from: x,
            action: a,
            reward: step.reward,
            to: step.next,
            labels: step.labels,
            violated: step.violated,
        });
        x = step.next;
        if step.violated {
            trace.termination = Termination::Violation;
            break;
        }
    }
    trace
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ViolationCounter {
    count: u64,
}

impl ViolationCounter {
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn record(&mut self, trace: &EpisodeTrace) {
        if trace.violated() {
            self.count += 1;
        }
    }

    pub fn record_flag(&mut self, violated: bool) {
        self.count += u64::from(violated);
    }
}

pub const TRACE_HEADER: &str = "episode,t,col,row,q,action,reward,label_set,violated";

/// Writes one CSV row per step. `t` counts from 1 (the state after the first
/// action); `label_set` joins the observed labels with `+`.
pub fn write_trace_csv<W: Write>(
    out: &mut W,
    episode: usize,
    trace: &EpisodeTrace,
    guard: &Safeguard,
) -> io::Result<()> {
    for (i, step) in trace.steps.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            episode,
            i + 1,
            step.to.s.col,
            step.to.s.row,
            guard.state_name(step.to.q),
            step.action,
            step.reward,
            step.labels.names(guard.labels()),
            u8::from(step.violated)
        )?;
    }
    Ok(())
}
