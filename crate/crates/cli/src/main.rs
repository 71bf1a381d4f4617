use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use psl_core::harness::{self, parse_seeds, ExperimentConfig, HarnessError, Inputs, Method, RunSummary};

/// Safeguarded reinforcement learning experiments on labelled gridworlds.
#[derive(Parser)]
#[command(name = "psl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check safeguard (.sg), map (.map) and experiment (.cfg) files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Train the configured methods over all seeds and write metrics.
    Run(RunArgs),
    /// Repeat a run for several violation penalties.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated penalty values, e.g. -1,-10,-100.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Check that the shaped-reward optimal policy is maximally safe.
    Oracle {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        safeguard: PathBuf,
        /// Comma-separated penalty values.
        #[arg(long = "r-n", allow_hyphen_values = true, value_delimiter = ',', default_value = "-1,-10,-100")]
        r_n: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
    },
    /// Draw return and violation charts from metrics files or run directories.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory (defaults to the first input's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seeds, e.g. 0-9 or 1,4,7.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the configured methods (comma-separated).
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

/// Exit status 1 for bad inputs, 2 for failures while running.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            code: if e.is_validation() { 1 } else { 2 },
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, Inputs, usize), Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)
            .map_err(anyhow::Error::msg)
            .context("--seeds")?;
    }
    if !args.method.is_empty() {
        cfg.methods = args.method.clone();
        cfg.methods.sort_unstable();
        cfg.methods.dedup();
    }
    let inputs = Inputs::load(&cfg)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok((cfg, inputs, jobs))
}

fn print_summary(rows: &[&RunSummary]) {
    println!(
        "{:<10} {:>5} {:>14} {:>12} {:>12} {:>14}",
        "method", "runs", "final return", "violations", "final task", "greedy return"
    );
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.dedup();
    for m in methods {
        let of: Vec<&&RunSummary> = rows.iter().filter(|r| r.method == m).collect();
        let n = of.len() as f64;
        let mean = |f: &dyn Fn(&RunSummary) -> f64| of.iter().map(|r| f(r)).sum::<f64>() / n;
        println!(
            "{:<10} {:>5} {:>14.2} {:>12.1} {:>12.1} {:>14.2}",
            m.name(),
            of.len(),
            mean(&|r| r.final_return),
            mean(&|r| r.total_violations as f64),
            mean(&|r| r.final_task_violations as f64),
            mean(&|r| r.greedy_return)
        );
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { paths } => {
            let report = harness::validate_paths(&paths);
            print!("{}", report.text);
            if !report.ok {
                return Err(anyhow::anyhow!("validation failed").into());
            }
        }
        Command::Run(args) => {
            let (cfg, inputs, jobs) = load(&args)?;
            let results = harness::run_experiment(&cfg, &inputs, &args.out, jobs)?;
            print_summary(&results.iter().map(|r| &r.summary).collect::<Vec<_>>());
            println!("wrote {}", args.out.display());
        }
        Command::Sweep { run, values } => {
            let (cfg, inputs, jobs) = load(&run)?;
            let result = harness::sweep(&cfg, &inputs, &values, &run.out, jobs)?;
            println!(
                "{:>10} {:<10} {:>18} {:>21}",
                "r_n", "method", "median violations", "median greedy return"
            );
            for p in &result.points {
                println!(
                    "{:>10} {:<10} {:>18.1} {:>21.2}",
                    p.r_n,
                    p.method.name(),
                    p.median_violations,
                    p.median_greedy_return
                );
            }
            println!("wrote {}", run.out.display());
        }
        Command::Oracle {
            map,
            safeguard,
            r_n,
            gamma,
        } => {
            let map = harness::read_map(&map)?;
            let g = harness::read_safeguard(&safeguard)?;
            let (report, pass) = harness::oracle_report(&map, &g, &r_n, gamma)?;
            print!("{report}");
            if !pass {
                return Err(anyhow::anyhow!("the optimal policy is not maximally safe for every penalty").into());
            }
        }
        Command::Plot { inputs, out } => {
            let out = out.unwrap_or_else(|| {
                let first = &inputs[0];
                if first.is_dir() {
                    first.clone()
                } else {
                    first.parent().map(PathBuf::from).unwrap_or_default()
                }
            });
            for path in harness::plot_metrics(&inputs, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
