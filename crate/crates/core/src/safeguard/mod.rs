//! Safeguards: deterministic finite-state monitors over sets of abstract labels.
//!
//! A safeguard reads one [`LabelSet`] per environment step. States from which no
//! accepting state is reachable form the rejecting sink set; entering it is a
//! safety violation and can never be undone.

mod analysis;
pub mod generate;
pub mod guard;
mod parse;

use std::fmt;

use thiserror::Error;

pub use analysis::{DeterminismIssue, DeterminismReport};
pub use guard::{Guard, GuardSpec};
pub use parse::parse_safeguard;

/// Alphabets are enumerated exhaustively, so they are capped.
pub const MAX_LABELS: usize = 16;

/// A set of labels, stored as a bitmask over some alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn from_bits(bits: u32) -> Self {
        LabelSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, index: usize) -> bool {
        index < 32 && self.0 & (1 << index) != 0
    }

    pub fn with(self, index: usize) -> Self {
        LabelSet(self.0 | (1 << index))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: LabelSet) -> Self {
        LabelSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |i| self.contains(*i))
    }

    /// Every subset of an alphabet of size `n`, in numeric order.
    pub fn all(n: usize) -> impl Iterator<Item = LabelSet> {
        (0..1u32 << n).map(LabelSet)
    }

    /// Joins member names with `+`; the empty set renders as an empty string.
    pub fn names(self, alphabet: &[String]) -> String {
        self.indices()
            .filter_map(|i| alphabet.get(i).map(String::as_str))
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub source: StateId,
    pub target: StateId,
    /// The expanded guard; `else` has already been rewritten.
    pub guard: Guard,
    /// Whether the guard was written as `else`.
    pub is_else: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SafeguardError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: undeclared label '{label}'")]
    UndeclaredLabel {
        line: usize,
        column: usize,
        label: String,
    },
    #[error("line {line}: duplicate state '{name}'")]
    DuplicateState { line: usize, name: String },
    #[error("line {line}: duplicate label '{name}'")]
    DuplicateLabel { line: usize, name: String },
    #[error("line {line}: unknown state '{name}'")]
    UnknownState { line: usize, name: String },
    #[error("no initial state declared")]
    MissingInitial,
    #[error("line {line}: second initial state '{name}'")]
    MultipleInitial { line: usize, name: String },
    #[error("line {line}: state '{state}' has more than one else guard")]
    MultipleElse { line: usize, state: String },
    #[error("{count} labels declared; at most {MAX_LABELS} are supported")]
    TooManyLabels { count: usize },
    #[error("safeguard declares no states")]
    NoStates,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("unknown safeguard state {0}")]
    UnknownState(StateId),
    #[error("label set {0:#b} is not a subset of the declared alphabet")]
    LabelOutsideAlphabet(u32),
    #[error("no transition fires from '{state}' on {{{labels}}}")]
    Incomplete { state: String, labels: String },
    #[error("several transitions fire from '{state}' on {{{labels}}}")]
    Nondeterministic { state: String, labels: String },
}

const NO_TARGET: u32 = u32::MAX;
const MANY_TARGETS: u32 = u32::MAX - 1;

/// A parsed safeguard machine. Immutable once built.
#[derive(Debug, Clone)]
pub struct Safeguard {
    name: String,
    labels: Vec<String>,
    states: Vec<String>,
    initial: StateId,
    accepting: Vec<bool>,
    transitions: Vec<Transition>,
    /// `states.len() << labels.len()` entries: the unique firing target, or a sentinel.
    table: Vec<u32>,
    sinks: Vec<bool>,
}

impl Safeguard {
    /// Assembles a machine from resolved parts. Targets of overlapping or
    /// missing guards are recorded and surface through [`Safeguard::validate_determinism`].
    pub fn from_parts(
        name: impl Into<String>,
        labels: Vec<String>,
        states: Vec<String>,
        initial: StateId,
        accepting: Vec<bool>,
        transitions: Vec<Transition>,
    ) -> Result<Self, SafeguardError> {
        if states.is_empty() {
            return Err(SafeguardError::NoStates);
        }
        if labels.len() > MAX_LABELS {
            return Err(SafeguardError::TooManyLabels {
                count: labels.len(),
            });
        }
        assert_eq!(accepting.len(), states.len(), "one accepting flag per state");
        assert!(initial.0 < states.len(), "initial state out of range");
        for t in &transitions {
            assert!(t.source.0 < states.len() && t.target.0 < states.len());
        }

        let width = 1usize << labels.len();
        let mut table = vec![NO_TARGET; states.len() * width];
        for t in &transitions {
            for l in LabelSet::all(labels.len()) {
                if t.guard.eval(l) {
                    let slot = &mut table[t.source.0 * width + l.0 as usize];
                    *slot = match *slot {
                        NO_TARGET => t.target.0 as u32,
                        _ => MANY_TARGETS,
                    };
                }
            }
        }

        let mut g = Safeguard {
            name: name.into(),
            labels,
            states,
            initial,
            accepting,
            transitions,
            table,
            sinks: Vec::new(),
        };
        g.sinks = analysis::co_unreachable(&g);
        Ok(g)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Builds a label set from names; `None` if any name is outside the alphabet.
    pub fn label_set<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Option<LabelSet> {
        names
            .into_iter()
            .try_fold(LabelSet::EMPTY, |acc, n| Some(acc.with(self.label_index(n)?)))
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn is_accepting(&self, q: StateId) -> bool {
        self.accepting[q.0]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Whether `q` lies in the rejecting sink set.
    pub fn is_sink(&self, q: StateId) -> bool {
        self.sinks[q.0]
    }

    /// Full label set of the alphabet.
    pub fn alphabet_set(&self) -> LabelSet {
        LabelSet((1u32 << self.labels.len()) - 1)
    }

    /// The transition function. Fails on unknown states, foreign labels, and
    /// (state, label) pairs where the guards are not a partition.
    pub fn step(&self, q: StateId, l: LabelSet) -> Result<StateId, StepError> {
        if q.0 >= self.states.len() {
            return Err(StepError::UnknownState(q));
        }
        if !l.is_subset_of(self.alphabet_set()) {
            return Err(StepError::LabelOutsideAlphabet(l.0));
        }
        match self.table[(q.0 << self.labels.len()) | l.0 as usize] {
            NO_TARGET => Err(StepError::Incomplete {
                state: self.states[q.0].clone(),
                labels: l.names(&self.labels),
            }),
            MANY_TARGETS => Err(StepError::Nondeterministic {
                state: self.states[q.0].clone(),
                labels: l.names(&self.labels),
            }),
            t => Ok(StateId(t as usize)),
        }
    }

    /// Unchecked transition for hot loops. Callers must have established
    /// determinism via [`Safeguard::validate_determinism`].
    #[inline]
    pub fn next(&self, q: StateId, l: LabelSet) -> StateId {
        let t = self.table[(q.0 << self.labels.len()) | l.0 as usize];
        debug_assert!(t < MANY_TARGETS, "safeguard is not deterministic");
        StateId(t as usize)
    }

    /// The run θ induced by a trace, starting from the initial state.
    pub fn run(&self, trace: &[LabelSet]) -> Result<Vec<StateId>, StepError> {
        let mut run = Vec::with_capacity(trace.len() + 1);
        let mut q = self.initial;
        run.push(q);
        for &l in trace {
            q = self.step(q, l)?;
            run.push(q);
        }
        Ok(run)
    }

    /// True iff the run over `trace` ends in an accepting state.
    pub fn accepts_trace(&self, trace: &[LabelSet]) -> Result<bool, StepError> {
        let run = self.run(trace)?;
        Ok(self.accepting[run.last().expect("run is never empty").0])
    }

    /// True iff the run over `trace` visits the rejecting sink set at any point,
    /// the initial state included.
    pub fn is_unsafe_run(&self, trace: &[LabelSet]) -> Result<bool, StepError> {
        Ok(self.run(trace)?.iter().any(|q| self.sinks[q.0]))
    }

    /// Renders the machine back to the text format. `else` guards are
    /// written in their expanded form.
    pub fn to_text(&self) -> String {
        let mut out = format!("safeguard {}\n", self.name);
        if !self.labels.is_empty() {
            out.push_str(&format!("labels {}\n", self.labels.join(" ")));
        }
        for q in self.states() {
            out.push_str(&format!("state {}", self.state_name(q)));
            if q == self.initial {
                out.push_str(" initial");
            }
            if self.is_accepting(q) {
                out.push_str(" accepting");
            }
            out.push('\n');
        }
        for t in &self.transitions {
            out.push_str(&format!(
                "trans {} -> {} on {}\n",
                self.state_name(t.source),
                self.state_name(t.target),
                t.guard.display(&self.labels)
            ));
        }
        out
    }
}
