use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::agents::HyperParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read config file {path}: {msg}")]
    Read { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ddpg,
    DdpgDistributed,
    DdpgAsync,
    Inverse,
    TabularSarsa,
    TabularQ,
    TabularQLambda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Ddpg,
        Algorithm::DdpgDistributed,
        Algorithm::DdpgAsync,
        Algorithm::Inverse,
        Algorithm::TabularSarsa,
        Algorithm::TabularQ,
        Algorithm::TabularQLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::DdpgDistributed => "ddpg-distributed",
            Algorithm::DdpgAsync => "ddpg-async",
            Algorithm::Inverse => "inverse",
            Algorithm::TabularSarsa => "tabular-sarsa",
            Algorithm::TabularQ => "tabular-q",
            Algorithm::TabularQLambda => "tabular-qlambda",
        }
    }

    pub fn is_ddpg(self) -> bool {
        matches!(self, Algorithm::Ddpg | Algorithm::DdpgDistributed | Algorithm::DdpgAsync)
    }

    pub fn is_tabular(self) -> bool {
        matches!(
            self,
            Algorithm::TabularSarsa | Algorithm::TabularQ | Algorithm::TabularQLambda
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// Where the agent's state comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateSource {
    Features,
    PixelsEndToEnd,
    Pretrained(PathBuf),
}

impl StateSource {
    pub fn needs_pixels(&self) -> bool {
        !matches!(self, StateSource::Features)
    }
}

impl fmt::Display for StateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSource::Features => f.write_str("features"),
            StateSource::PixelsEndToEnd => f.write_str("pixels-endtoend"),
            StateSource::Pretrained(p) => write!(f, "pretrained:{}", p.display()),
        }
    }
}

impl FromStr for StateSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "features" => Ok(StateSource::Features),
            "pixels-endtoend" => Ok(StateSource::PixelsEndToEnd),
            _ => match s.strip_prefix("pretrained:") {
                Some(p) if !p.is_empty() => Ok(StateSource::Pretrained(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown state source {s:?} (features, pixels-endtoend or pretrained:<checkpoint>)"
                )),
            },
        }
    }
}

/// Everything one `train` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub source: StateSource,
    pub hp: HyperParams,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
    /// Static background noise in rendered frames.
    pub noise: bool,
    /// Seed of the noise pixel pattern.
    pub noise_seed: u64,
    /// Inverse model: random dataset size and supervised budget.
    pub dataset_episodes: usize,
    pub dataset_steps: usize,
    pub pretrain_batches: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    /// Tabular runs.
    pub grid_size: usize,
    pub alpha: f64,
    pub tabular_gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub tabular_episodes: u64,
    pub tabular_steps: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::DdpgAsync,
            source: StateSource::Features,
            hp: HyperParams::default(),
            seeds: vec![1],
            eval_episodes: 100,
            out_dir: PathBuf::from("runs"),
            noise: false,
            noise_seed: 0,
            dataset_episodes: 200,
            dataset_steps: 500,
            pretrain_batches: 20_000,
            pretrain_batch_size: 256,
            pretrain_lr: 1e-3,
            grid_size: 5,
            alpha: 0.5,
            tabular_gamma: 0.9,
            epsilon: 0.2,
            lambda: 0.7,
            tabular_episodes: 1_000_000,
            tabular_steps: 50_000,
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "algorithm",
    "source",
    "seeds",
    "total_steps",
    "workers",
    "eval_episodes",
    "out_dir",
    "noise",
    "noise_seed",
    "tau",
    "lr",
    "lr_actor",
    "lr_critic",
    "gamma",
    "critic_l2",
    "n_step",
    "max_episode_steps",
    "warmup",
    "replay_capacity",
    "batch_size",
    "hidden",
    "ou_theta",
    "ou_sigma",
    "eps_start",
    "eps_end",
    "eps_decay",
    "dataset_episodes",
    "dataset_steps",
    "pretrain_batches",
    "pretrain_batch_size",
    "pretrain_lr",
    "grid_size",
    "alpha",
    "tabular_gamma",
    "epsilon",
    "lambda",
    "tabular_episodes",
    "tabular_steps",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.into(),
        msg: format!("cannot parse {value:?}: {e}"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::Invalid {
            key: key.into(),
            msg: format!("expected a boolean, got {value:?}"),
        }),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let hp = &mut self.hp;
        match key {
            "algorithm" => {
                self.algorithm = value.parse().map_err(|msg| ConfigError::Invalid {
                    key: key.into(),
                    msg,
                })?
            }
            "source" => {
                self.source = value.parse().map_err(|msg| ConfigError::Invalid {
                    key: key.into(),
                    msg,
                })?
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "total_steps" => hp.total_steps = parse(key, value)?,
            "workers" => hp.workers = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "noise" => self.noise = parse_bool(key, value)?,
            "noise_seed" => self.noise_seed = parse(key, value)?,
            "tau" => hp.tau = parse(key, value)?,
            "lr" => {
                hp.lr_actor = parse(key, value)?;
                hp.lr_critic = hp.lr_actor;
            }
            "lr_actor" => hp.lr_actor = parse(key, value)?,
            "lr_critic" => hp.lr_critic = parse(key, value)?,
            "gamma" => hp.gamma = parse(key, value)?,
            "critic_l2" => hp.critic_output_l2 = parse(key, value)?,
            "n_step" => hp.n_step = parse(key, value)?,
            "max_episode_steps" => hp.max_episode_steps = parse(key, value)?,
            "warmup" => hp.warmup = parse(key, value)?,
            "replay_capacity" => hp.replay_capacity = parse(key, value)?,
            "batch_size" => hp.batch_size = parse(key, value)?,
            "hidden" => {
                let v: Vec<usize> = parse_list(key, value)?;
                hp.hidden = v.try_into().map_err(|_| ConfigError::Invalid {
                    key: key.into(),
                    msg: "expected two comma-separated widths".into(),
                })?;
            }
            "ou_theta" => hp.exploration.ou_theta = parse(key, value)?,
            "ou_sigma" => hp.exploration.ou_sigma = parse(key, value)?,
            "eps_start" => hp.exploration.eps_start = parse(key, value)?,
            "eps_end" => hp.exploration.eps_end = parse(key, value)?,
            "eps_decay" => hp.exploration.decay_fraction = parse(key, value)?,
            "dataset_episodes" => self.dataset_episodes = parse(key, value)?,
            "dataset_steps" => self.dataset_steps = parse(key, value)?,
            "pretrain_batches" => self.pretrain_batches = parse(key, value)?,
            "pretrain_batch_size" => self.pretrain_batch_size = parse(key, value)?,
            "pretrain_lr" => self.pretrain_lr = parse(key, value)?,
            "grid_size" => self.grid_size = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "tabular_gamma" => self.tabular_gamma = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "tabular_episodes" => self.tabular_episodes = parse(key, value)?,
            "tabular_steps" => self.tabular_steps = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKeys(vec![key.into()])),
        }
        Ok(())
    }

    /// Checks ranges and combinations.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, msg: String| {
            Err(ConfigError::Invalid {
                key: key.into(),
                msg,
            })
        };
        if !(0.0..=1.0).contains(&self.hp.gamma) {
            return invalid("gamma", format!("out of range: must be in [0, 1], got {}", self.hp.gamma));
        }
        if let Err(e) = self.hp.validate() {
            return invalid("hyperparameters", e.to_string());
        }
        if self.seeds.is_empty() {
            return invalid("seeds", "at least one seed is required".into());
        }
        if self.algorithm.is_tabular() || self.algorithm == Algorithm::Inverse {
            if self.source != StateSource::Features {
                return invalid(
                    "source",
                    format!("{} works on the simulator state only", self.algorithm),
                );
            }
        }
        if !(0.0..=1.0).contains(&self.tabular_gamma) {
            return invalid("tabular_gamma", format!("must be in [0, 1], got {}", self.tabular_gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return invalid("lambda", format!("must be in [0, 1], got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return invalid("epsilon", format!("must be in [0, 1], got {}", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return invalid("alpha", format!("must be in (0, 1], got {}", self.alpha));
        }
        if self.grid_size < 2 {
            return invalid("grid_size", "must be at least 2".into());
        }
        if self.pretrain_batches == 0 || self.pretrain_batch_size == 0 {
            return invalid("pretrain_batches", "pretraining budget must be positive".into());
        }
        if self.dataset_episodes == 0 || self.dataset_steps == 0 {
            return invalid("dataset_episodes", "dataset must not be empty".into());
        }
        Ok(())
    }
}

/// Splits `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `KEY=VALUE` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ConfigError::Syntax { line: 0, text: s.into() })
}

/// Builds a config from file text plus overrides (applied after the file).
/// All unknown keys are reported together before anything is applied.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut pairs = parse_pairs(text)?;
    pairs.extend(overrides.iter().cloned());
    let unknown: Vec<String> = pairs
        .iter()
        .filter(|(k, _)| !KEYS.contains(&k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let mut cfg = RunConfig::default();
    for (k, v) in &pairs {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads an optional config file and applies `KEY=VALUE` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
            path: p.to_path_buf(),
            msg: e.to_string(),
        })?,
        None => String::new(),
    };
    let overrides = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    parse_config(&text, &overrides)
}
