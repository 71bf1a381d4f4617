//! Comparison methods: plain Q-learning, a count-based intrinsic-fear
//! learner, and the safeguarded learner trained directly on the final
//! safeguard without curriculum or transfer.
//!
//! The first two learn one table over environment states from environment
//! reward alone. The safeguard only watches: it decides when an episode ends in
//! a violation, which is also the catastrophe signal for the fear model.

use crate::gridworld::{EnvState, GridMap};
use crate::learner::{self, LearnError, LearnerConfig, QBank, Variant};
use crate::metrics::RunMetrics;
use crate::rng::Streams;
use crate::runtime::{RewardSpec, Step, Synced};
use crate::safeguard::{Safeguard, StateId};

const FLAT: StateId = StateId(0);

fn flat_bank(map: &GridMap) -> QBank {
    QBank::with_names(map, vec!["s".to_string()])
}

struct Vanilla;

impl Variant for Vanilla {
    fn key(&self, _q: StateId) -> StateId {
        FLAT
    }

    fn reward(&self, step: &Step) -> f64 {
        step.env_reward
    }

    fn on_first_visit(&self, bank: &mut QBank, key: StateId, _cfg: &LearnerConfig) {
        bank.mark_visited(key);
    }
}

/// Q-learning on environment reward with `monitor` counting violations.
pub fn vanilla_train(
    map: &GridMap,
    monitor: &Safeguard,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<(QBank, RunMetrics), LearnError> {
    cfg.validate()?;
    let synced = Synced::monitor(map, monitor)?;
    let mut bank = flat_bank(map);
    let m = learner::train_loop(&synced, cfg, &mut bank, streams, &mut Vanilla, Default::default());
    Ok((bank, m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FearConfig {
    /// Number of final states of a violating episode marked dangerous.
    pub radius: usize,
    /// Weight of the fear penalty in the TD target.
    pub weight: f64,
}

impl Default for FearConfig {
    fn default() -> Self {
        FearConfig {
            radius: 5,
            weight: 1.0,
        }
    }
}

/// Per-cell danger and safe counts. The fear of a cell is the fraction of
/// its observations that fell within `radius` steps of a catastrophe.
#[derive(Debug, Clone, PartialEq)]
pub struct FearModel {
    width: usize,
    radius: usize,
    danger: Vec<u64>,
    safe: Vec<u64>,
}

impl FearModel {
    pub fn new(map: &GridMap, radius: usize) -> Self {
        assert!(radius >= 1, "fear radius must be at least 1");
        FearModel {
            width: map.width(),
            radius,
            danger: vec![0; map.num_cells()],
            safe: vec![0; map.num_cells()],
        }
    }

    fn index(&self, s: EnvState) -> usize {
        s.row * self.width + s.col
    }

    pub fn danger(&self, s: EnvState) -> u64 {
        self.danger[self.index(s)]
    }

    pub fn safe(&self, s: EnvState) -> u64 {
        self.safe[self.index(s)]
    }

    /// `danger / (danger + safe)`, zero for unobserved cells.
    pub fn fear(&self, s: EnvState) -> f64 {
        let i = self.index(s);
        let total = self.danger[i] + self.safe[i];
        if total == 0 {
            0.0
        } else {
            self.danger[i] as f64 / total as f64
        }
    }

    /// Updates counts from the visited states `s_0 .. s_T` of one episode.
    /// After a violation the last `radius` states count as dangerous and the
    /// rest as safe; otherwise every state counts as safe.
    pub fn update(&mut self, positions: &[EnvState], violated: bool) {
        let cut = if violated {
            positions.len().saturating_sub(self.radius)
        } else {
            positions.len()
        };
        for (t, &s) in positions.iter().enumerate() {
            let i = self.index(s);
            if t < cut {
                self.safe[i] += 1;
            } else {
                self.danger[i] += 1;
            }
        }
    }
}

struct Fear {
    model: FearModel,
    weight: f64,
}

impl Variant for Fear {
    fn key(&self, _q: StateId) -> StateId {
        FLAT
    }

    fn reward(&self, step: &Step) -> f64 {
        step.env_reward
    }

    fn penalty(&self, next: EnvState) -> f64 {
        self.weight * self.model.fear(next)
    }

    fn on_first_visit(&self, bank: &mut QBank, key: StateId, _cfg: &LearnerConfig) {
        bank.mark_visited(key);
    }

    fn end_episode(&mut self, positions: &[EnvState], violated: bool) {
        self.model.update(positions, violated);
    }
}

/// Q-learning with target `r + gamma * max Q(s') - weight * F(s')`, the fear
/// model refreshed after every episode.
pub fn fear_train(
    map: &GridMap,
    monitor: &Safeguard,
    fear: FearConfig,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<(QBank, FearModel, RunMetrics), LearnError> {
    cfg.validate()?;
    if fear.radius == 0 || !(fear.weight >= 0.0 && fear.weight.is_finite()) {
        return Err(LearnError::Config("fear radius must be >= 1 and weight >= 0".into()));
    }
    let synced = Synced::monitor(map, monitor)?;
    let mut bank = flat_bank(map);
    let mut variant = Fear {
        model: FearModel::new(map, fear.radius),
        weight: fear.weight,
    };
    let m = learner::train_loop(&synced, cfg, &mut bank, streams, &mut variant, Default::default());
    Ok((bank, variant.model, m))
}

/// The safeguarded learner on `final_guard` alone: cold tables, no transfer.
pub fn zero_shot_train(
    map: &GridMap,
    final_guard: &Safeguard,
    spec: RewardSpec,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<(QBank, RunMetrics), LearnError> {
    let cfg = LearnerConfig {
        transfer_enabled: false,
        ..cfg.clone()
    };
    let mut bank = QBank::new(map, final_guard);
    let m = learner::train_task(map, final_guard, spec, &cfg, &mut bank, streams)?;
    Ok((bank, m))
}
