//! Safeguarded reinforcement learning on labelled gridworlds.
//!
//! A [`Safeguard`] is a deterministic monitor over label sets. It runs in lock
//! step with a [`GridMap`] episode, and entering one of its rejecting sinks
//! replaces the environment reward with a penalty. The [`learner`] keeps one
//! value table per safeguard state and seeds new tables from their ancestors
//! when a curriculum moves to a richer safeguard. The [`oracle`] solves the
//! explicit product exactly and is used to check learners and the
//! optimal-policy safety property.

pub mod baselines;
pub mod fixtures;
pub mod gridworld;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod runtime;
pub mod safeguard;

pub use gridworld::{load_map, Action, EnvState, GridMap, MapError};
pub use safeguard::{parse_safeguard, LabelSet, Safeguard, SafeguardError, StateId, StepError};
pub use learner::{Curriculum, LearnerConfig, QBank};
pub use harness::{ExperimentConfig, HarnessError, Method};
pub use metrics::{AggregateStats, RunMetrics};
pub use runtime::{ProductState, RewardSpec, Synced};
