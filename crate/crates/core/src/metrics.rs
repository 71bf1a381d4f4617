//! Per-episode run metrics and their aggregation across seeds.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Curriculum position of the task this episode belongs to.
    pub task_index: usize,
    /// Dense episode index over the whole run.
    pub episode: usize,
    /// Sum of environment rewards; the violation penalty is not included, so
    /// returns are comparable across methods.
    pub ret: f64,
    /// Violation-terminated episodes so far in the run, this one included.
    pub cum_violations: u64,
    pub length: usize,
}

impl EpisodeRecord {
    pub fn violated(&self, previous: Option<&EpisodeRecord>) -> bool {
        self.cum_violations > previous.map_or(0, |p| p.cum_violations)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<EpisodeRecord>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_violations(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cum_violations)
    }

    /// Records of one curriculum task.
    pub fn task(&self, task_index: usize) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.task_index == task_index)
    }

    /// Violations that happened during one task.
    pub fn task_violations(&self, task_index: usize) -> u64 {
        let mut before = 0;
        let mut last = None;
        for r in &self.records {
            if r.task_index < task_index {
                before = r.cum_violations;
            } else if r.task_index == task_index {
                last = Some(r.cum_violations);
            }
        }
        last.map_or(0, |l| l - before)
    }

    /// Violations over the first `n` episodes of one task.
    pub fn task_violations_first(&self, task_index: usize, n: usize) -> u64 {
        let mut prev = 0;
        let mut count = 0;
        let mut seen = 0;
        for r in &self.records {
            if r.task_index == task_index && seen < n {
                count += r.cum_violations - prev;
                seen += 1;
            }
            prev = r.cum_violations;
        }
        count
    }

    /// Mean return over the last `n` episodes of the run.
    pub fn final_mean_return(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|r| r.ret).sum::<f64>() / tail.len() as f64
    }

    /// Appends another run's records, renumbering episodes and carrying the
    /// violation count forward.
    pub fn extend(&mut self, other: &RunMetrics) {
        let offset = self.records.len();
        let base = self.total_violations();
        self.records.extend(other.records.iter().map(|r| EpisodeRecord {
            episode: r.episode + offset,
            cum_violations: r.cum_violations + base,
            ..*r
        }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub episode: usize,
    pub ret: Summary,
    pub cum_violations: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub runs: usize,
    pub points: Vec<AggregatePoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no runs to aggregate")]
    Empty,
}

/// Pointwise statistics across runs. Shorter runs are padded with their final
/// return and cumulative violation count; empty runs contribute zeros.
pub fn aggregate_stats(runs: &[RunMetrics]) -> Result<AggregateStats, AggregateError> {
    if runs.is_empty() {
        return Err(AggregateError::Empty);
    }
    let len = runs.iter().map(RunMetrics::len).max().unwrap_or(0);
    let points = (0..len)
        .map(|e| {
            let at = |r: &RunMetrics| r.records.get(e).or(r.records.last()).copied();
            let rets: Vec<f64> = runs.iter().map(|r| at(r).map_or(0.0, |x| x.ret)).collect();
            let viols: Vec<f64> = runs
                .iter()
                .map(|r| at(r).map_or(0.0, |x| x.cum_violations as f64))
                .collect();
            AggregatePoint {
                episode: e,
                ret: Summary::of(&rets),
                cum_violations: Summary::of(&viols),
            }
        })
        .collect();
    Ok(AggregateStats {
        runs: runs.len(),
        points,
    })
}
