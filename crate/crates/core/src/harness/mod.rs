//! Seeded experiment orchestration: configuration, multi-run execution on a
//! bounded worker pool, CSV metrics, aggregation, penalty sweeps, the exact
//! optimality report and SVG charts.
//!
//! Every output except `timing.csv` is a pure function of the configuration
//! and the seeds, independent of the number of workers.

mod config;
mod csv;
mod plot;

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{fear_train, vanilla_train, zero_shot_train};
use crate::gridworld::{load_map, GridMap, MapError};
use crate::learner::{run_curriculum, Curriculum, LearnError, QBank};
use crate::metrics::{aggregate_stats, RunMetrics};
use crate::oracle::{self, build_explicit, evaluate_finite, ExplicitProduct, OracleError, Policy};
use crate::rng::Streams;
use crate::runtime::RewardSpec;
use crate::safeguard::{parse_safeguard, Safeguard, SafeguardError, StateId};

pub use config::{parse_config, parse_seeds, ExperimentConfig, Method};
pub use csv::{
    aggregate_csv, metrics_csv, read_metrics_csv, summary_csv, MetricsRun, AGGREGATE_HEADER, AGGREGATE_SCHEMA,
    METRICS_HEADER, METRICS_SCHEMA, SUMMARY_HEADER, SUMMARY_SCHEMA,
};
pub use plot::{line_chart, plot_metrics, Series};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", describe_config(path, *line, message))]
    Config { path: PathBuf, line: usize, message: String },
    /// An input file could not be read.
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    /// An output could not be written.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Map { path: PathBuf, source: MapError },
    #[error("{}: {source}", path.display())]
    Safeguard { path: PathBuf, source: SafeguardError },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn describe_config(path: &Path, line: usize, message: &str) -> String {
    match (path.as_os_str().is_empty(), line) {
        (true, 0) => message.to_string(),
        (true, l) => format!("line {l}: {message}"),
        (false, 0) => format!("{}: {message}", path.display()),
        (false, l) => format!("{}: line {l}: {message}", path.display()),
    }
}

impl HarnessError {
    pub(crate) fn read(path: &Path, source: io::Error) -> Self {
        HarnessError::Read {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Bad inputs, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Oracle(e) => matches!(e, OracleError::Precondition(_) | OracleError::NoSafePolicy),
            HarnessError::Io { .. } | HarnessError::Learn(_) | HarnessError::Pool(_) => false,
            _ => true,
        }
    }
}

pub fn read_map(path: &Path) -> Result<GridMap, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))?;
    load_map(&text).map_err(|source| HarnessError::Map {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a safeguard file and rejects machines that are not deterministic
/// and complete.
pub fn read_safeguard(path: &Path) -> Result<Safeguard, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))?;
    let g = parse_safeguard(&text).map_err(|source| HarnessError::Safeguard {
        path: path.to_path_buf(),
        source,
    })?;
    let report = g.validate_determinism();
    if !report.is_ok() {
        return Err(HarnessError::Invalid(format!(
            "{}: not deterministic and complete\n{}",
            path.display(),
            report.describe(&g)
        )));
    }
    Ok(g)
}

/// The loaded and cross-checked files an experiment refers to.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub map: GridMap,
    pub guards: Vec<Safeguard>,
}

impl Inputs {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let map = read_map(&cfg.map)?;
        let guards = cfg
            .curriculum
            .iter()
            .map(|p| read_safeguard(p))
            .collect::<Result<Vec<_>, _>>()?;
        let inputs = Inputs { map, guards };
        inputs.check(cfg, cfg.spec)?;
        Ok(inputs)
    }

    fn check(&self, cfg: &ExperimentConfig, spec: RewardSpec) -> Result<(), HarnessError> {
        let invalid = |e: &dyn std::fmt::Display| HarnessError::Invalid(e.to_string());
        Curriculum::uniform(self.guards.clone(), cfg.learner.episodes).map_err(|e| invalid(&e))?;
        spec.validate(&self.map).map_err(|e| invalid(&e))?;
        cfg.learner.validate().map_err(|e| invalid(&e))?;
        if cfg.fear.radius == 0 || !(cfg.fear.weight >= 0.0 && cfg.fear.weight.is_finite()) {
            return Err(HarnessError::Invalid("fear radius must be >= 1 and weight >= 0".into()));
        }
        Ok(())
    }

    pub fn final_guard(&self) -> &Safeguard {
        self.guards.last().expect("curriculum is non-empty")
    }
}

/// Per-run figures written to `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    /// Mean return over the last `final_window` episodes.
    pub final_return: f64,
    pub total_violations: u64,
    /// Violations during the last curriculum task (the whole run for the
    /// single-task methods).
    pub final_task_violations: u64,
    /// Exact expected environment return of the learned greedy policy under
    /// the final safeguard, over one horizon.
    pub greedy_return: f64,
    /// Exact violation probability of the greedy policy within the horizon.
    pub greedy_violation: f64,
}

impl RunSummary {
    pub fn run_id(&self) -> String {
        run_id(self.method, self.seed)
    }
}

pub fn run_id(method: Method, seed: u64) -> String {
    format!("{method}-seed{seed}")
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub metrics: RunMetrics,
    pub seconds: f64,
}

/// Trains one method with one seed. All methods draw from `Streams::new(seed)`,
/// so paired runs see the same environment randomness.
pub fn run_single(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    product: &ExplicitProduct,
    method: Method,
    seed: u64,
) -> Result<(QBank, RunMetrics, RunSummary), HarnessError> {
    let map = &inputs.map;
    let last = inputs.final_guard();
    let mut streams = Streams::new(seed);
    let (bank, metrics) = match method {
        Method::Psl => {
            let cur = Curriculum::uniform(inputs.guards.clone(), cfg.learner.episodes)?;
            run_curriculum(map, &cur, cfg.spec, &cfg.learner, &mut streams)?
        }
        Method::ZeroShot => zero_shot_train(map, last, cfg.spec, &cfg.learner, &mut streams)?,
        Method::Vanilla => vanilla_train(map, last, &cfg.learner, &mut streams)?,
        Method::Fear => {
            let (bank, _, m) = fear_train(map, last, cfg.fear, &cfg.learner, &mut streams)?;
            (bank, m)
        }
    };
    let last_task = metrics.records.last().map_or(0, |r| r.task_index);
    let policy = greedy_policy(product, &bank, method.is_flat());
    let eval = evaluate_finite(product, &policy, cfg.learner.horizon_for(map));
    let summary = RunSummary {
        method,
        seed,
        final_return: metrics.final_mean_return(cfg.final_window),
        total_violations: metrics.total_violations(),
        final_task_violations: metrics.task_violations(last_task),
        greedy_return: eval.env_return,
        greedy_violation: eval.violation,
    };
    Ok((bank, metrics, summary))
}

/// The greedy policy of `bank` over the explicit product. Flat banks ignore
/// the safeguard state.
pub fn greedy_policy(product: &ExplicitProduct, bank: &QBank, flat: bool) -> Policy {
    Policy::from_fn(product, |s, q| bank.greedy(if flat { StateId(0) } else { q }, s))
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

/// Runs every (method, seed) pair of `cfg` on `jobs` workers and writes
///
/// - `runs/<method>-seed<seed>.csv`, as each run finishes,
/// - `aggregate-<method>.csv`, `summary.csv` and `timing.csv` at the end.
///
/// Results come back in (method, seed) order regardless of scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    out: &Path,
    jobs: usize,
) -> Result<Vec<RunResult>, HarnessError> {
    inputs.check(cfg, cfg.spec)?;
    let runs_dir = out.join("runs");
    create_dir(&runs_dir)?;
    let product = build_explicit(&inputs.map, inputs.final_guard(), cfg.spec)?;
    let pairs: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(method, seed)| {
                let start = Instant::now();
                let (_, metrics, summary) = run_single(cfg, inputs, &product, method, seed)?;
                let id = run_id(method, seed);
                write_atomic(&runs_dir.join(format!("{id}.csv")), &metrics_csv(&id, seed, method, &metrics))?;
                Ok(RunResult {
                    summary,
                    metrics,
                    seconds: start.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;

    for &method in &cfg.methods {
        let runs: Vec<RunMetrics> = results
            .iter()
            .filter(|r| r.summary.method == method)
            .map(|r| r.metrics.clone())
            .collect();
        let stats = aggregate_stats(&runs).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        write_atomic(&out.join(format!("aggregate-{method}.csv")), &aggregate_csv(method.name(), &stats))?;
    }
    let summaries: Vec<RunSummary> = results.iter().map(|r| r.summary.clone()).collect();
    write_atomic(&out.join("summary.csv"), &summary_csv(&summaries))?;
    let mut timing = String::from("# psl-timing v1; wall-clock seconds, not deterministic\nrun_id,seconds\n");
    for r in &results {
        let _ = writeln!(timing, "{},{:.3}", r.summary.run_id(), r.seconds);
    }
    write_atomic(&out.join("timing.csv"), &timing)?;
    Ok(results)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub r_n: f64,
    pub method: Method,
    pub median_violations: f64,
    pub median_greedy_return: f64,
    pub mean_greedy_return: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub runs: Vec<(f64, RunSummary)>,
}

pub const SWEEP_HEADER: &str = "r_n,run_id,seed,method,total_violations,final_return,greedy_return";
pub const SWEEP_SUMMARY_HEADER: &str = "r_n,method,runs,median_violations,median_greedy_return,mean_greedy_return";

/// Directory name of one sweep value.
pub fn sweep_dir(r_n: f64) -> String {
    format!("r_n{r_n}")
}

/// One `run_experiment` per penalty value, sharing seeds, under
/// `out/r_n<value>/`, plus `sweep.csv` and `sweep-summary.csv`. Every value
/// is checked against the map before anything runs.
pub fn sweep(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    values: &[f64],
    out: &Path,
    jobs: usize,
) -> Result<SweepResult, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("no penalty values given".into()));
    }
    for &v in values {
        RewardSpec::new(v)
            .validate(&inputs.map)
            .map_err(|e| HarnessError::Invalid(format!("r_n = {v}: {e}")))?;
    }
    create_dir(out)?;
    let mut runs = Vec::new();
    let mut points = Vec::new();
    for &v in values {
        let value_cfg = ExperimentConfig {
            spec: RewardSpec::new(v),
            ..cfg.clone()
        };
        let results = run_experiment(&value_cfg, inputs, &out.join(sweep_dir(v)), jobs)?;
        for &method in &cfg.methods {
            let of: Vec<&RunSummary> = results
                .iter()
                .map(|r| &r.summary)
                .filter(|s| s.method == method)
                .collect();
            let viol: Vec<f64> = of.iter().map(|s| s.total_violations as f64).collect();
            let greedy: Vec<f64> = of.iter().map(|s| s.greedy_return).collect();
            points.push(SweepPoint {
                r_n: v,
                method,
                median_violations: median(&viol),
                median_greedy_return: median(&greedy),
                mean_greedy_return: greedy.iter().sum::<f64>() / greedy.len() as f64,
            });
        }
        runs.extend(results.into_iter().map(|r| (v, r.summary)));
    }

    let mut text = format!("# psl-sweep v1\n{SWEEP_HEADER}\n");
    for (v, s) in &runs {
        let _ = writeln!(
            text,
            "{v},{},{},{},{},{},{}",
            s.run_id(),
            s.seed,
            s.method,
            s.total_violations,
            s.final_return,
            s.greedy_return
        );
    }
    write_atomic(&out.join("sweep.csv"), &text)?;
    let mut text = format!("# psl-sweep-summary v1; medians over seeds\n{SWEEP_SUMMARY_HEADER}\n");
    for p in &points {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            p.r_n,
            p.method,
            cfg.seeds.len(),
            p.median_violations,
            p.median_greedy_return,
            p.mean_greedy_return
        );
    }
    write_atomic(&out.join("sweep-summary.csv"), &text)?;
    Ok(SweepResult { points, runs })
}

/// Outcome of checking a list of files.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub text: String,
    pub ok: bool,
}

/// Checks safeguard (`.sg`), map (`.map`) and experiment (`.cfg`) files.
/// Safeguards are reported with their sinks and determinism status.
pub fn validate_paths(paths: &[PathBuf]) -> ValidationReport {
    let mut report = ValidationReport {
        text: String::new(),
        ok: true,
    };
    for path in paths {
        match validate_one(path) {
            Ok(text) => {
                let _ = writeln!(report.text, "ok   {}\n{text}", path.display());
            }
            Err(e) => {
                report.ok = false;
                let _ = writeln!(report.text, "FAIL {}\n  {}", path.display(), e.to_string().replace('\n', "\n  "));
            }
        }
    }
    report
}

fn validate_one(path: &Path) -> Result<String, HarnessError> {
    let mut out = String::new();
    match path.extension().and_then(|e| e.to_str()) {
        Some("sg") => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))?;
            let g = parse_safeguard(&text).map_err(|source| HarnessError::Safeguard {
                path: path.to_path_buf(),
                source,
            })?;
            let names = |set: &std::collections::BTreeSet<StateId>| {
                set.iter().map(|&q| g.state_name(q)).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(out, "  safeguard {} with {} states over {{{}}}", g.name(), g.num_states(), g.labels().join(", "));
            let _ = writeln!(out, "  rejecting sinks: {}", names(&g.rejecting_sinks()));
            let report = g.validate_determinism();
            let _ = writeln!(out, "  determinism: {}", report.describe(&g).to_string().replace('\n', "\n    "));
            if !report.is_ok() {
                return Err(HarnessError::Invalid(format!("not deterministic and complete\n{out}")));
            }
        }
        Some("map") => {
            let m = read_map(path)?;
            let _ = writeln!(
                out,
                "  {}x{} map, slip {}, horizon {}, {} start cell(s), labels {{{}}}",
                m.width(),
                m.height(),
                m.slip(),
                m.horizon(),
                m.start_cells().len(),
                m.labels().join(", ")
            );
        }
        Some("cfg") => {
            let cfg = ExperimentConfig::load(path)?;
            let inputs = Inputs::load(&cfg)?;
            let _ = writeln!(
                out,
                "  {} task(s), methods {}, {} seed(s), r_n {}; map {}x{}",
                inputs.guards.len(),
                cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(" "),
                cfg.seeds.len(),
                cfg.spec.r_n,
                inputs.map.width(),
                inputs.map.height()
            );
        }
        _ => {
            if !path.exists() {
                return Err(HarnessError::read(path, io::Error::new(io::ErrorKind::NotFound, "no such file")));
            }
            return Err(HarnessError::Invalid(format!(
                "{}: unknown file type (expected .sg, .map or .cfg)",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Runs the shaped-optimality check for each penalty. Returns the CSV report
/// and whether every row passed.
pub fn oracle_report(map: &GridMap, g: &Safeguard, penalties: &[f64], gamma: f64) -> Result<(String, bool), HarnessError> {
    let mut text = format!("{}\n", oracle::REPORT_HEADER);
    let mut all = true;
    for &r_n in penalties {
        let rep = oracle::safety_optimality_check(map, g, RewardSpec::new(r_n), gamma)?;
        all &= rep.pass;
        let _ = writeln!(text, "{}", rep.csv_row());
    }
    Ok((text, all))
}
