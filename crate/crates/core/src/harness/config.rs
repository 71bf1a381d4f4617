//! Experiment configuration files.
//!
//! A plain line-oriented `key = value` format. Top-level keys come first;
//! `[reward]`, `[learner]` and `[fear]` sections follow. `#` starts a comment.
//! Relative paths resolve against the directory of the config file.
//!
//! ```text
//! map = ../maps/crafting.map
//! curriculum = ../safeguards/basic-lava.sg, ../safeguards/safeguard-1.sg
//! methods = psl, vanilla
//! seeds = 0-9
//!
//! [reward]
//! r_n = -10
//!
//! [learner]
//! episodes = 5000
//! transfer = interpolate
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::FearConfig;
use crate::learner::{LearnerConfig, TransferForm};
use crate::runtime::RewardSpec;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Psl,
    Vanilla,
    Fear,
    ZeroShot,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Psl, Method::Vanilla, Method::Fear, Method::ZeroShot];

    pub fn name(self) -> &'static str {
        match self {
            Method::Psl => "psl",
            Method::Vanilla => "vanilla",
            Method::Fear => "fear",
            Method::ZeroShot => "zero_shot",
        }
    }

    /// Methods that learn one table over environment states only.
    pub fn is_flat(self) -> bool {
        matches!(self, Method::Vanilla | Method::Fear)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psl" => Ok(Method::Psl),
            "vanilla" => Ok(Method::Vanilla),
            "fear" => Ok(Method::Fear),
            "zero_shot" | "zero-shot" => Ok(Method::ZeroShot),
            _ => Err(format!("unknown method '{s}' (expected psl, vanilla, fear or zero_shot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub map: PathBuf,
    /// Safeguard files in training order. Baselines use the last one.
    pub curriculum: Vec<PathBuf>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub spec: RewardSpec,
    pub learner: LearnerConfig,
    pub fear: FearConfig,
    /// Number of trailing episodes averaged into the final return.
    pub final_window: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        parse_config(&text, base).map_err(|e| match e {
            HarnessError::Config { line, message, .. } => HarnessError::Config {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}

/// Parses `a, b-c, d` into an ascending, duplicate-free seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
                let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range '{part}'"))?;
                if a > b {
                    return Err(format!("empty seed range '{part}'"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?),
        }
    }
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value '{value}' for '{key}'"))
}

fn boolean(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value '{value}' for '{key}' (expected true or false)")),
    }
}

pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut map = None;
    let mut curriculum = Vec::new();
    let mut methods = vec![Method::Psl];
    let mut seeds = vec![0];
    let mut spec = RewardSpec::default();
    let mut learner = LearnerConfig::default();
    let mut fear = FearConfig::default();
    let mut final_window = 1000;
    let mut section = String::new();

    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Config {
            path: PathBuf::new(),
            line: n + 1,
            message,
        };
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
            section = name.trim().to_string();
            if !matches!(section.as_str(), "reward" | "learner" | "fear") {
                return Err(err(format!("unknown section [{section}]")));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
        let result: Result<(), String> = match (section.as_str(), key) {
            ("", "map") => {
                map = Some(base.join(value));
                Ok(())
            }
            ("", "curriculum") => {
                curriculum = list(value).map(|p| base.join(p)).collect();
                Ok(())
            }
            ("", "methods" | "method") => list(value)
                .map(str::parse)
                .collect::<Result<Vec<_>, _>>()
                .map(|m| methods = m),
            ("", "seeds") => parse_seeds(value).map(|s| seeds = s),
            ("", "final_window") => num(key, value).map(|v| final_window = v),
            ("reward", "r_n") => num(key, value).map(|v| spec = RewardSpec::new(v)),
            ("learner", "gamma") => num(key, value).map(|v| learner.gamma = v),
            ("learner", "beta") => num(key, value).map(|v| learner.beta = v),
            ("learner", "transfer_factor") => num(key, value).map(|v| learner.transfer_factor = v),
            ("learner", "depth") => num(key, value).map(|v| learner.depth = v),
            ("learner", "transfer") => match value {
                "average" => {
                    learner.transfer = TransferForm::Average;
                    Ok(())
                }
                "interpolate" => {
                    learner.transfer = TransferForm::Interpolate;
                    Ok(())
                }
                _ => Err(format!("bad transfer form '{value}' (expected average or interpolate)")),
            },
            ("learner", "transfer_enabled") => boolean(key, value).map(|v| learner.transfer_enabled = v),
            ("learner", "tau0") => num(key, value).map(|v| learner.tau0 = v),
            ("learner", "tau_decay") => num(key, value).map(|v| learner.tau_decay = v),
            ("learner", "tau_min") => num(key, value).map(|v| learner.tau_min = v),
            ("learner", "tau_reset_per_task") => boolean(key, value).map(|v| learner.tau_reset_per_task = v),
            ("learner", "batch") => num(key, value).map(|v| learner.batch = v),
            ("learner", "capacity") => num(key, value).map(|v| learner.capacity = v),
            ("learner", "episodes") => num(key, value).map(|v| learner.episodes = v),
            ("learner", "horizon") => num(key, value).map(|v| learner.horizon = Some(v)),
            ("fear", "radius") => num(key, value).map(|v| fear.radius = v),
            ("fear", "weight") => num(key, value).map(|v| fear.weight = v),
            (_, _) if section.is_empty() => Err(format!("unknown key '{key}'")),
            (_, _) => Err(format!("unknown key '{key}' in [{section}]")),
        };
        result.map_err(err)?;
    }

    let whole = |message: &str| HarnessError::Config {
        path: PathBuf::new(),
        line: 0,
        message: message.to_string(),
    };
    let map = map.ok_or_else(|| whole("missing 'map'"))?;
    if curriculum.is_empty() {
        return Err(whole("missing 'curriculum'"));
    }
    if methods.is_empty() {
        return Err(whole("no methods given"));
    }
    methods.sort_unstable();
    methods.dedup();
    if final_window == 0 {
        return Err(whole("final_window must be positive"));
    }
    Ok(ExperimentConfig {
        map,
        curriculum,
        methods,
        seeds,
        spec,
        learner,
        fear,
        final_window,
    })
}
