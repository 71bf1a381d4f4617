use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use super::{LabelSet, Safeguard, StateId};

/// One (state, label set) pair where the number of firing guards is not exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterminismIssue {
    pub state: StateId,
    pub labels: LabelSet,
    pub firing: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeterminismReport {
    pub issues: Vec<DeterminismIssue>,
}

impl DeterminismReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn gaps(&self) -> impl Iterator<Item = &DeterminismIssue> {
        self.issues.iter().filter(|i| i.firing == 0)
    }

    pub fn overlaps(&self) -> impl Iterator<Item = &DeterminismIssue> {
        self.issues.iter().filter(|i| i.firing > 1)
    }

    pub fn describe<'a>(&'a self, g: &'a Safeguard) -> impl fmt::Display + 'a {
        ReportDisplay { report: self, g }
    }
}

struct ReportDisplay<'a> {
    report: &'a DeterminismReport,
    g: &'a Safeguard,
}

impl fmt::Display for ReportDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.report.is_ok() {
            return write!(f, "deterministic and complete");
        }
        for (n, issue) in self.report.issues.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            let kind = if issue.firing == 0 { "no guard fires" } else { "guards overlap" };
            write!(
                f,
                "{kind}: state {} on {{{}}} ({} firing)",
                self.g.state_name(issue.state),
                issue.labels.names(self.g.labels()),
                issue.firing
            )?;
        }
        Ok(())
    }
}

impl Safeguard {
    /// Enumerates every (state, label set) pair and reports those where zero or
    /// several guards fire.
    pub fn validate_determinism(&self) -> DeterminismReport {
        let mut issues = Vec::new();
        for q in self.states() {
            for l in LabelSet::all(self.labels.len()) {
                let firing = self
                    .transitions
                    .iter()
                    .filter(|t| t.source == q && t.guard.eval(l))
                    .count();
                if firing != 1 {
                    issues.push(DeterminismIssue { state: q, labels: l, firing });
                }
            }
        }
        DeterminismReport { issues }
    }

    /// Successor sets: `succ[q]` holds every state some firing guard leads to.
    pub fn successors(&self) -> Vec<BTreeSet<StateId>> {
        let mut succ = vec![BTreeSet::new(); self.num_states()];
        for t in &self.transitions {
            if LabelSet::all(self.labels.len()).any(|l| t.guard.eval(l)) {
                succ[t.source.0].insert(t.target);
            }
        }
        succ
    }

    /// The rejecting sink set: states with no path to an accepting state.
    pub fn rejecting_sinks(&self) -> BTreeSet<StateId> {
        self.states().filter(|q| self.sinks[q.0]).collect()
    }

    /// Union of strongly connected components that contain no accepting
    /// state. Diagnostic only; it coincides with [`Safeguard::rejecting_sinks`]
    /// whenever every non-sink state is accepting or can reach one.
    pub fn rejecting_components(&self) -> BTreeSet<StateId> {
        let comps = tarjan(&self.successors());
        comps
            .into_iter()
            .filter(|c| c.iter().all(|q| !self.accepting[q.0]))
            .flatten()
            .collect()
    }

    /// Ancestor levels of `q`, walking parent edges up to `depth` times.
    ///
    /// Level `i` holds states with a non-self-loop edge into level `i - 1`
    /// that are not `q`, not in a shallower level, and not sinks. The list stops
    /// at the first empty level.
    pub fn ancestors(&self, q: StateId, depth: usize) -> Vec<Vec<StateId>> {
        let succ = self.successors();
        let mut seen = vec![false; self.num_states()];
        seen[q.0] = true;
        let mut frontier = vec![q];
        let mut levels = Vec::new();
        for _ in 0..depth {
            let level: Vec<StateId> = self
                .states()
                .filter(|p| !seen[p.0] && !self.sinks[p.0])
                .filter(|p| succ[p.0].iter().any(|c| c != p && frontier.contains(c)))
                .collect();
            if level.is_empty() {
                break;
            }
            for p in &level {
                seen[p.0] = true;
            }
            frontier = level.clone();
            levels.push(level);
        }
        levels
    }
}

/// Marks states that cannot reach an accepting state (reverse BFS from the accepting set).
pub(super) fn co_unreachable(g: &Safeguard) -> Vec<bool> {
    let succ = g.successors();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); g.num_states()];
    for (p, targets) in succ.iter().enumerate() {
        for t in targets {
            pred[t.0].push(p);
        }
    }
    let mut reaches = g.accepting.clone();
    let mut queue: VecDeque<usize> = (0..g.num_states()).filter(|&q| reaches[q]).collect();
    while let Some(q) = queue.pop_front() {
        for &p in &pred[q] {
            if !reaches[p] {
                reaches[p] = true;
                queue.push_back(p);
            }
        }
    }
    reaches.into_iter().map(|r| !r).collect()
}

/// Iterative Tarjan SCC decomposition.
fn tarjan(succ: &[BTreeSet<StateId>]) -> Vec<Vec<StateId>> {
    const UNVISITED: usize = usize::MAX;
    let n = succ.len();
    let adj: Vec<Vec<usize>> = succ.iter().map(|s| s.iter().map(|q| q.0).collect()).collect();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (node, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, child)) = call.last() {
            if let Some(&w) = adj[v].get(child) {
                call.last_mut().expect("non-empty call stack").1 += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(StateId(w));
                        if w == v {
                            break;
                        }
                    }
                    comp.sort();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}
