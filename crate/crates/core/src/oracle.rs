//! Exact solvers over the explicit product of a map and a safeguard.
//!
//! Unlike the learners, the oracle reads the map's kernel and label
//! distributions directly. Product state `(s, q)` has index `cell * |Q| + q`.
//! Sink states are absorbing with zero reward.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gridworld::{Action, EnvState, GridMap};
use crate::runtime::{RewardSpec, RuntimeError, Synced};
use crate::safeguard::{Safeguard, StateId};

pub const MAX_PRODUCT_STATES: usize = 100_000;

const A: usize = Action::COUNT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("product has {states} states, above the limit of {MAX_PRODUCT_STATES}")]
    TooLarge { states: usize },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no safe policy exists: maximal safety probability from the start is 0")]
    NoSafePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    /// Shaped reward: the penalty when `next` is a sink.
    pub reward: f64,
    /// Arrival reward of the map, paid even when `next` is a sink.
    pub env_reward: f64,
}

#[derive(Debug, Clone)]
pub struct ExplicitProduct {
    width: usize,
    num_q: usize,
    sink: Vec<bool>,
    /// CSR offsets into `outcomes`, one row per `(state, action)`.
    offsets: Vec<usize>,
    outcomes: Vec<Outcome>,
    initial: Vec<(usize, f64)>,
}

/// Enumerates the product kernel, marginalizing label observations into
/// safeguard transitions.
pub fn build_explicit(map: &GridMap, g: &Safeguard, spec: RewardSpec) -> Result<ExplicitProduct, OracleError> {
    let num_q = g.num_states();
    let n = map.num_cells() * num_q;
    if n > MAX_PRODUCT_STATES {
        return Err(OracleError::TooLarge { states: n });
    }
    let synced = Synced::monitor(map, g)?;
    let index = |s: EnvState, q: StateId| map.index(s) * num_q + q.0;

    let mut sink = vec![false; n];
    let mut offsets = Vec::with_capacity(n * A + 1);
    let mut outcomes = Vec::new();
    offsets.push(0);
    let mut row: Vec<Outcome> = Vec::new();
    for s in map.states() {
        for q in g.states() {
            sink[index(s, q)] = g.is_sink(q);
            for a in Action::ALL {
                row.clear();
                if g.is_sink(q) {
                    row.push(Outcome {
                        next: index(s, q),
                        prob: 1.0,
                        reward: 0.0,
                        env_reward: 0.0,
                    });
                } else {
                    for (s2, ps) in map.transition_distribution(s, a) {
                        for &(l, pl) in synced.label_dist(s2) {
                            let q2 = g.next(q, l);
                            let next = index(s2, q2);
                            let env_reward = map.arrival_reward(s2);
                            let reward = if g.is_sink(q2) { spec.r_n } else { env_reward };
                            match row.iter_mut().find(|o| o.next == next) {
                                Some(o) => o.prob += ps * pl,
                                None => row.push(Outcome {
                                    next,
                                    prob: ps * pl,
                                    reward,
                                    env_reward,
                                }),
                            }
                        }
                    }
                    row.sort_by_key(|o| o.next);
                }
                outcomes.extend_from_slice(&row);
                offsets.push(outcomes.len());
            }
        }
    }

    let starts = map.start_cells();
    let mut initial: Vec<(usize, f64)> = Vec::new();
    for &s in starts {
        for &(l, pl) in synced.label_dist(s) {
            let x = index(s, g.next(g.initial(), l));
            let p = pl / starts.len() as f64;
            match initial.iter_mut().find(|(y, _)| *y == x) {
                Some(e) => e.1 += p,
                None => initial.push((x, p)),
            }
        }
    }
    initial.sort_by_key(|e| e.0);

    Ok(ExplicitProduct {
        width: map.width(),
        num_q,
        sink,
        offsets,
        outcomes,
        initial,
    })
}

impl ExplicitProduct {
    pub fn num_states(&self) -> usize {
        self.sink.len()
    }

    pub fn num_q(&self) -> usize {
        self.num_q
    }

    pub fn index(&self, s: EnvState, q: StateId) -> usize {
        (s.row * self.width + s.col) * self.num_q + q.0
    }

    pub fn state(&self, x: usize) -> (EnvState, StateId) {
        let cell = x / self.num_q;
        (EnvState::new(cell % self.width, cell / self.width), StateId(x % self.num_q))
    }

    pub fn is_sink(&self, x: usize) -> bool {
        self.sink[x]
    }

    pub fn outcomes(&self, x: usize, a: Action) -> &[Outcome] {
        let r = x * A + a.index();
        &self.outcomes[self.offsets[r]..self.offsets[r + 1]]
    }

    /// Distribution of the first product state: a uniform start cell, with
    /// the safeguard advanced on that cell's label.
    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    /// Expectation of `values` under the initial distribution.
    pub fn at_start(&self, values: &[f64]) -> f64 {
        self.initial.iter().map(|&(x, p)| p * values[x]).sum()
    }

    fn q_value(&self, x: usize, a: Action, v: &[f64], gamma: f64) -> f64 {
        self.outcomes(x, a)
            .iter()
            .map(|o| o.prob * (o.reward + gamma * v[o.next]))
            .sum()
    }

    fn expect(&self, x: usize, a: Action, v: &[f64]) -> f64 {
        self.outcomes(x, a).iter().map(|o| o.prob * v[o.next]).sum()
    }
}

/// A stationary policy as per-state action distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    dist: Vec<[f64; A]>,
}

impl Policy {
    pub fn from_actions(actions: &[Action]) -> Self {
        Policy {
            dist: actions
                .iter()
                .map(|a| {
                    let mut d = [0.0; A];
                    d[a.index()] = 1.0;
                    d
                })
                .collect(),
        }
    }

    pub fn from_fn(p: &ExplicitProduct, mut f: impl FnMut(EnvState, StateId) -> Action) -> Self {
        let actions: Vec<Action> = (0..p.num_states())
            .map(|x| {
                let (s, q) = p.state(x);
                f(s, q)
            })
            .collect();
        Self::from_actions(&actions)
    }

    pub fn uniform(n: usize) -> Self {
        Policy {
            dist: vec![[1.0 / A as f64; A]; n],
        }
    }

    pub fn from_distributions(dist: Vec<[f64; A]>) -> Self {
        Policy { dist }
    }

    pub fn distribution(&self, x: usize) -> &[f64; A] {
        &self.dist[x]
    }

    fn actions(&self, x: usize) -> impl Iterator<Item = (Action, f64)> + '_ {
        self.dist[x]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (Action::from_index(i), *p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub policy: Vec<Action>,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl ValueSolution {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// First action whose value is within a relative 1e-12 of the best.
fn argmax_first(values: [f64; A]) -> Action {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * best.abs().max(1.0);
    let i = values.iter().position(|&v| v >= best - slack).unwrap_or(0);
    Action::from_index(i)
}

/// Synchronous value iteration until a sweep changes no value by `tol` or more.
pub fn value_iteration(p: &ExplicitProduct, gamma: f64, tol: f64) -> ValueSolution {
    assert!((0.0..1.0).contains(&gamma) && tol > 0.0);
    let n = p.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residuals = Vec::new();
    loop {
        let mut delta: f64 = 0.0;
        for x in 0..n {
            next[x] = if p.is_sink(x) {
                0.0
            } else {
                Action::ALL
                    .iter()
                    .map(|&a| p.q_value(x, a, &v, gamma))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            delta = delta.max((next[x] - v[x]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        residuals.push(delta);
        if delta < tol {
            break;
        }
    }
    let policy = (0..n)
        .map(|x| {
            if p.is_sink(x) {
                Action::Stay
            } else {
                argmax_first(Action::ALL.map(|a| p.q_value(x, a, &v, gamma)))
            }
        })
        .collect();
    ValueSolution {
        values: v,
        policy,
        residuals,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetySolution {
    pub probabilities: Vec<f64>,
    pub policy: Vec<Action>,
}

/// Maximal probability of never entering a sink, with a maximizing policy.
///
/// States from which some policy stays safe surely get exactly 1 (a graph
/// fixpoint). Elsewhere the avoidance fixpoint is iterated downward from 1 on
/// non-sink states, which converges to the greatest solution.
pub fn max_safety_probability(p: &ExplicitProduct) -> SafetySolution {
    let n = p.num_states();
    let sure = sure_safe(p);
    let mut pr: Vec<f64> = (0..n).map(|x| if p.is_sink(x) { 0.0 } else { 1.0 }).collect();
    let mut next = pr.clone();
    let mut iterations = 0usize;
    loop {
        let mut delta: f64 = 0.0;
        for x in 0..n {
            if p.is_sink(x) || sure[x] {
                continue;
            }
            next[x] = Action::ALL
                .iter()
                .map(|&a| p.expect(x, a, &pr))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((next[x] - pr[x]).abs());
        }
        std::mem::swap(&mut pr, &mut next);
        iterations += 1;
        if delta < 1e-14 || iterations >= 10_000_000 {
            break;
        }
    }
    let policy = (0..n)
        .map(|x| {
            if p.is_sink(x) {
                Action::Stay
            } else if sure[x] {
                // Any action keeping all mass inside the sure region.
                Action::ALL
                    .into_iter()
                    .find(|&a| p.outcomes(x, a).iter().all(|o| sure[o.next]))
                    .expect("sure-safe state has a closed action")
            } else {
                argmax_first(Action::ALL.map(|a| p.expect(x, a, &pr)))
            }
        })
        .collect();
    SafetySolution {
        probabilities: pr,
        policy,
    }
}

/// Largest set of non-sink states with an action whose successors all stay
/// in the set.
fn sure_safe(p: &ExplicitProduct) -> Vec<bool> {
    let n = p.num_states();
    let mut inside: Vec<bool> = (0..n).map(|x| !p.is_sink(x)).collect();
    loop {
        let mut changed = false;
        for x in 0..n {
            if inside[x]
                && !Action::ALL
                    .iter()
                    .any(|&a| p.outcomes(x, a).iter().all(|o| inside[o.next]))
            {
                inside[x] = false;
                changed = true;
            }
        }
        if !changed {
            return inside;
        }
    }
}

/// Probability of never entering a sink under `policy`, per state.
///
/// States that cannot reach a sink get 1. The remaining transient states
/// satisfy a linear system, solved by LU decomposition when it is small enough
/// and by Gauss-Seidel sweeps otherwise.
pub fn policy_safety_probability(p: &ExplicitProduct, policy: &Policy) -> Vec<f64> {
    let n = p.num_states();
    // Reverse reachability from sinks under the policy's support.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        if p.is_sink(x) {
            continue;
        }
        for (a, _) in policy.actions(x) {
            for o in p.outcomes(x, a) {
                if o.prob > 0.0 {
                    preds[o.next].push(x);
                }
            }
        }
    }
    let mut reaches = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&x| p.is_sink(x)).collect();
    for &x in &stack {
        reaches[x] = true;
    }
    while let Some(y) = stack.pop() {
        for &x in &preds[y] {
            if !reaches[x] {
                reaches[x] = true;
                stack.push(x);
            }
        }
    }

    let mut pr: Vec<f64> = (0..n)
        .map(|x| if p.is_sink(x) || reaches[x] { 0.0 } else { 1.0 })
        .collect();
    let transient: Vec<usize> = (0..n).filter(|&x| reaches[x] && !p.is_sink(x)).collect();
    if transient.is_empty() {
        return pr;
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &x) in transient.iter().enumerate() {
        pos[x] = i;
    }
    // v = P_TT v + b, where b collects mass moving straight into safe states.
    let row = |x: usize, mut f: Box<dyn FnMut(usize, f64) + '_>| {
        for (a, pa) in policy.actions(x) {
            for o in p.outcomes(x, a) {
                f(o.next, pa * o.prob);
            }
        }
    };
    let m = transient.len();
    if m <= 4000 {
        let mut lhs = DMatrix::<f64>::identity(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, &x) in transient.iter().enumerate() {
            row(
                x,
                Box::new(|y, w| {
                    if pos[y] != usize::MAX {
                        lhs[(i, pos[y])] -= w;
                    } else if !p.is_sink(y) {
                        rhs[i] += w;
                    }
                }),
            );
        }
        let sol = lhs.lu().solve(&rhs).expect("transient block is nonsingular");
        for (i, &x) in transient.iter().enumerate() {
            pr[x] = sol[i].clamp(0.0, 1.0);
        }
    } else {
        loop {
            let mut delta: f64 = 0.0;
            for &x in &transient {
                let mut acc = 0.0;
                row(x, Box::new(|y, w| acc += w * pr[y]));
                delta = delta.max((acc - pr[x]).abs());
                pr[x] = acc;
            }
            if delta < 1e-13 {
                break;
            }
        }
    }
    pr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteEval {
    /// Expected undiscounted sum of arrival rewards, the violating step included.
    pub env_return: f64,
    /// Expected undiscounted sum of shaped rewards.
    pub shaped_return: f64,
    /// Probability of entering a sink within the horizon.
    pub violation: f64,
}

/// Exact `horizon`-step evaluation of `policy` from the initial distribution.
pub fn evaluate_finite(p: &ExplicitProduct, policy: &Policy, horizon: usize) -> FiniteEval {
    let n = p.num_states();
    let mut mass = vec![0.0; n];
    let mut violation = 0.0;
    for &(x, w) in p.initial() {
        if p.is_sink(x) {
            violation += w;
        } else {
            mass[x] += w;
        }
    }
    let mut next = vec![0.0; n];
    let mut env_return = 0.0;
    let mut shaped_return = 0.0;
    for _ in 0..horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..n {
            let w = mass[x];
            if w == 0.0 {
                continue;
            }
            for (a, pa) in policy.actions(x) {
                for o in p.outcomes(x, a) {
                    let m = w * pa * o.prob;
                    env_return += m * o.env_reward;
                    shaped_return += m * o.reward;
                    if p.is_sink(o.next) {
                        violation += m;
                    } else {
                        next[o.next] += m;
                    }
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    FiniteEval {
        env_return,
        shaped_return,
        violation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyOptimalityReport {
    pub r_n: f64,
    pub gamma: f64,
    /// Optimal discounted shaped value at the start.
    pub v_star: f64,
    /// Safety probability of the optimal shaped-reward policy at the start.
    pub pr_pi_star: f64,
    /// Maximal safety probability at the start.
    pub pr_max: f64,
    pub pass: bool,
}

pub const SAFETY_TOLERANCE: f64 = 1e-6;

pub const REPORT_HEADER: &str = "r_n,gamma,v_star,pr_pi_star,pr_max,pass";

impl SafetyOptimalityReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.9},{:.12},{:.12},{}",
            self.r_n, self.gamma, self.v_star, self.pr_pi_star, self.pr_max, self.pass
        )
    }
}

/// Checks that the optimal policy for the shaped reward is also a maximally
/// safe policy from the start distribution.
pub fn safety_optimality_check(map: &GridMap, g: &Safeguard, spec: RewardSpec, gamma: f64) -> Result<SafetyOptimalityReport, OracleError> {
    if let Err(e) = spec.validate(map) {
        return Err(OracleError::Precondition(e.to_string()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::Precondition(format!("discount {gamma} outside [0, 1)")));
    }
    let p = build_explicit(map, g, spec)?;
    let safety = max_safety_probability(&p);
    let pr_max = p.at_start(&safety.probabilities);
    if pr_max <= 0.0 {
        return Err(OracleError::NoSafePolicy);
    }
    let vi = value_iteration(&p, gamma, 1e-10);
    let pr_pi = policy_safety_probability(&p, &Policy::from_actions(&vi.policy));
    let pr_pi_star = p.at_start(&pr_pi);
    Ok(SafetyOptimalityReport {
        r_n: spec.r_n,
        gamma,
        v_star: p.at_start(&vi.values),
        pr_pi_star,
        pr_max,
        pass: (pr_pi_star - pr_max).abs() <= SAFETY_TOLERANCE,
    })
}
