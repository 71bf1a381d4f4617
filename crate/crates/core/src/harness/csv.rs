//! CSV emission and parsing for run metrics, aggregates and summaries.
//! Each file starts with a `#` schema line followed by a header row. Floats
//! use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::{AggregateStats, EpisodeRecord, RunMetrics};

use super::{HarnessError, Method, RunSummary};

pub const METRICS_SCHEMA: &str = "# psl-metrics v1";
pub const METRICS_HEADER: &str = "run_id,seed,method,task_index,episode,return,cum_violations,length";
pub const AGGREGATE_SCHEMA: &str = "# psl-aggregate v1; std is the population standard deviation over runs";
pub const AGGREGATE_HEADER: &str = "method,runs,episode,return_mean,return_std,return_min,return_max,\
violations_mean,violations_std,violations_min,violations_max";
pub const SUMMARY_SCHEMA: &str = "# psl-summary v1";
pub const SUMMARY_HEADER: &str = "run_id,seed,method,final_return,total_violations,final_task_violations,\
greedy_return,greedy_violation";

pub fn metrics_csv(run_id: &str, seed: u64, method: Method, m: &RunMetrics) -> String {
    let mut out = format!("{METRICS_SCHEMA}\n{METRICS_HEADER}\n");
    for r in &m.records {
        let _ = writeln!(
            out,
            "{run_id},{seed},{method},{},{},{},{},{}",
            r.task_index, r.episode, r.ret, r.cum_violations, r.length
        );
    }
    out
}

pub fn aggregate_csv(method: &str, stats: &AggregateStats) -> String {
    let mut out = format!("{AGGREGATE_SCHEMA}\n{AGGREGATE_HEADER}\n");
    for p in &stats.points {
        let (r, v) = (&p.ret, &p.cum_violations);
        let _ = writeln!(
            out,
            "{method},{},{},{},{},{},{},{},{},{},{}",
            stats.runs, p.episode, r.mean, r.std, r.min, r.max, v.mean, v.std, v.min, v.max
        );
    }
    out
}

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = format!("{SUMMARY_SCHEMA}\n{SUMMARY_HEADER}\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.run_id(),
            s.seed,
            s.method,
            s.final_return,
            s.total_violations,
            s.final_task_violations,
            s.greedy_return,
            s.greedy_violation
        );
    }
    out
}

/// One run read back from a metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRun {
    pub run_id: String,
    pub seed: u64,
    pub method: String,
    pub metrics: RunMetrics,
}

/// Parses a metrics file. Rows of several runs may be concatenated; they are
/// returned in order of first appearance.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRun>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))?;
    let schema = |message: String| HarnessError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Err(schema("empty file".into())),
        Some((_, l)) if l.trim() != METRICS_SCHEMA => {
            return Err(schema(format!("expected schema line '{METRICS_SCHEMA}', found '{l}'")))
        }
        _ => {}
    }
    match lines.next() {
        Some((_, l)) if l.trim() == METRICS_HEADER => {}
        other => {
            return Err(schema(format!(
                "expected header '{METRICS_HEADER}', found '{}'",
                other.map_or("", |(_, l)| l)
            )))
        }
    }
    let mut runs: Vec<MetricsRun> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| schema(format!("line {}: bad {what}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(schema(format!("line {}: expected 8 fields, found {}", n + 1, f.len())));
        }
        let seed: u64 = f[1].parse().map_err(|_| bad("seed"))?;
        let record = EpisodeRecord {
            task_index: f[3].parse().map_err(|_| bad("task_index"))?,
            episode: f[4].parse().map_err(|_| bad("episode"))?,
            ret: f[5].parse().map_err(|_| bad("return"))?,
            cum_violations: f[6].parse().map_err(|_| bad("cum_violations"))?,
            length: f[7].parse().map_err(|_| bad("length"))?,
        };
        match runs.iter_mut().find(|r| r.run_id == f[0]) {
            Some(run) => run.metrics.records.push(record),
            None => runs.push(MetricsRun {
                run_id: f[0].to_string(),
                seed,
                method: f[2].to_string(),
                metrics: RunMetrics { records: vec![record] },
            }),
        }
    }
    if runs.is_empty() {
        return Err(schema("no data rows".into()));
    }
    Ok(runs)
}
