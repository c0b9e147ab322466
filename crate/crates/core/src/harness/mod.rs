//! Experiment orchestration: run configuration, multi-seed training,
//! evaluation reports, metrics CSV files and SVG curves.

mod checkpoint;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod report;

pub use checkpoint::{AgentCheckpoint, SourceKind};
pub use config::{load_config, parse_config, Algorithm, ConfigError, RunConfig, StateSource};
pub use metrics::{final_rolling_success, read_csv, rows_from_records, write_csv, MetricsRow, ROLLING_WINDOW};
pub use plot::{average_curves, common_grid, interpolate, render_svg, series_from_rows, Series};
pub use report::{format_table, EvalReport};

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::agents::{
    derive_seed, run_greedy_episode, train_async, train_baseline, train_distributed, AgentError, MetricsLog,
    TrainSetup,
};
use crate::env::{LocalReacher, MAX_STEPS};
use crate::nn::{load_checkpoint, NnError};
use crate::pretrain::{
    evaluate_inverse, gen_random_dataset, train_autoencoder, train_forward, train_internal, train_inverse,
    DatasetConfig, Extractor, PretrainError, PretrainedModel, TrainConfig, TrainReport,
};
use crate::render::NoiseConfig;
use crate::replay::ReplayBuffer;
use crate::tabular::{
    policy_disagreements, qlambda_train, qlearning_train, sarsa_train, value_iteration, Behavior, GridWorld,
    TabularConfig, TabularEnv, TraceMode,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("metrics file: {0}")]
    Csv(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Seed stream of the evaluation environments.
const EVAL_STREAM: u64 = 0xE7A1;
/// First seed stream of the training environments (one per worker).
const TRAIN_ENV_STREAM: u64 = 100;

/// Noise setting of a run's rendered frames.
pub fn noise_config(enabled: bool, seed: u64) -> NoiseConfig {
    if enabled {
        NoiseConfig::enabled(seed)
    } else {
        NoiseConfig::disabled()
    }
}

/// Outputs of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub elapsed: Duration,
    /// Greedy success rate (tabular runs: % of states whose greedy action is
    /// optimal).
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub runs: Vec<SeedRun>,
    /// Per-episode training metrics (DDPG variants only).
    pub metrics_csv: Option<PathBuf>,
    pub rows: Vec<MetricsRow>,
    pub report: EvalReport,
    pub report_path: PathBuf,
}

/// Trains one model per seed, writes checkpoints, the metrics CSV and an
/// evaluation report into `cfg.out_dir`.
pub fn run_training(cfg: &RunConfig) -> Result<TrainingSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let name = cfg.algorithm.name();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (run, seed_rows) = if cfg.algorithm.is_ddpg() {
            train_ddpg_seed(cfg, seed)?
        } else if cfg.algorithm == Algorithm::Inverse {
            (train_inverse_seed(cfg, seed)?, Vec::new())
        } else {
            (train_tabular_seed(cfg, seed)?, Vec::new())
        };
        runs.push(run);
        rows.extend(seed_rows);
    }
    let metrics_csv = if cfg.algorithm.is_ddpg() {
        let path = cfg.out_dir.join(format!("{name}.csv"));
        write_csv(BufWriter::new(File::create(&path)?), &rows)?;
        Some(path)
    } else {
        None
    };
    let scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let report = EvalReport::from_scores(&scores).ok_or_else(|| HarnessError::Empty("no scores".into()))?;
    let report_path = cfg.out_dir.join(format!("{name}_report.txt"));
    fs::write(&report_path, format_table(&[(name, &report)]))?;
    Ok(TrainingSummary {
        runs,
        metrics_csv,
        rows,
        report,
        report_path,
    })
}

fn state_encoder(cfg: &RunConfig) -> Result<(SourceKind, Option<Extractor>)> {
    Ok(match &cfg.source {
        StateSource::Features => (SourceKind::Features, None),
        StateSource::PixelsEndToEnd => (SourceKind::Pixels, None),
        StateSource::Pretrained(path) => match PretrainedModel::load(path)? {
            PretrainedModel::Extractor(e) => (SourceKind::Pretrained, Some(e)),
            PretrainedModel::Inverse(_) => {
                return Err(HarnessError::Mismatch(format!(
                    "{} holds an inverse model, not a state extractor",
                    path.display()
                )))
            }
        },
    })
}

fn train_ddpg_seed(cfg: &RunConfig, seed: u64) -> Result<(SeedRun, Vec<MetricsRow>)> {
    let (source, extractor) = state_encoder(cfg)?;
    let noise = noise_config(cfg.noise, cfg.noise_seed);
    let mut ckpt = AgentCheckpoint::untrained(cfg.algorithm, source, noise, extractor, &cfg.hp, seed)?;
    let encoder = ckpt.encoder();
    let metrics = MetricsLog::new();
    let setup = TrainSetup {
        hp: cfg.hp,
        seed,
        encoder: encoder.as_ref(),
        metrics: Some(&metrics),
        time_limit: None,
    };
    let pixels = encoder.needs_pixels();
    let make_env = |w: usize| LocalReacher::new(derive_seed(seed, TRAIN_ENV_STREAM + w as u64), noise, pixels);
    let out = match cfg.algorithm {
        Algorithm::Ddpg => train_baseline(&setup, make_env(0))?,
        Algorithm::DdpgDistributed => train_distributed(&setup, make_env)?,
        _ => train_async(&setup, make_env)?,
    };
    ckpt.actor = out.actor;
    ckpt.critic = out.critic;
    let path = cfg.out_dir.join(format!("{}_seed{seed}.ckpt", cfg.algorithm.name()));
    ckpt.save(&path)?;
    let score = evaluate_agent(&ckpt, cfg.eval_episodes, seed)?;
    let run = SeedRun {
        seed,
        checkpoint: path,
        steps: out.steps,
        episodes: out.episodes,
        updates: out.updates,
        elapsed: out.elapsed,
        score,
    };
    Ok((run, rows_from_records(seed, &metrics.snapshot())))
}

fn train_inverse_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let start = std::time::Instant::now();
    let data = gen_random_dataset(&DatasetConfig {
        episodes: cfg.dataset_episodes,
        steps: cfg.dataset_steps,
        seed,
        pixels: false,
        noise: NoiseConfig::disabled(),
    })?;
    let tc = TrainConfig {
        batches: cfg.pretrain_batches,
        batch_size: cfg.pretrain_batch_size,
        lr: cfg.pretrain_lr,
        seed,
        ..TrainConfig::default()
    };
    let (model, _) = train_inverse(&data, &tc)?;
    let path = cfg.out_dir.join(format!("inverse_seed{seed}.ckpt"));
    let model = PretrainedModel::Inverse(model);
    model.save(&path)?;
    let score = evaluate_pretrained(&model, cfg.eval_episodes, seed)?;
    Ok(SeedRun {
        seed,
        checkpoint: path,
        steps: data.len() as u64,
        episodes: cfg.dataset_episodes as u64,
        updates: cfg.pretrain_batches as u64,
        elapsed: start.elapsed(),
        score,
    })
}

fn train_tabular_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let start = std::time::Instant::now();
    let g = GridWorld::square(cfg.grid_size);
    let tc = TabularConfig {
        alpha: cfg.alpha,
        gamma: cfg.tabular_gamma,
        behavior: Behavior::epsilon(cfg.epsilon),
        episodes: cfg.tabular_episodes,
        max_steps: Some(cfg.tabular_steps),
        q_init: 1.0,
        seed,
    };
    let run = match cfg.algorithm {
        Algorithm::TabularSarsa => sarsa_train(&g, &tc),
        Algorithm::TabularQ => qlearning_train(&g, &tc),
        _ => qlambda_train(&g, &tc, cfg.lambda, TraceMode::Replacing),
    };
    let vi = value_iteration(&g, cfg.tabular_gamma, 1e-12);
    let bad = policy_disagreements(&run.q, &vi, 1e-9).len();
    let path = cfg.out_dir.join(format!("{}_seed{seed}.csv", cfg.algorithm.name()));
    fs::write(&path, run.q.to_csv())?;
    let n = g.n_states();
    Ok(SeedRun {
        seed,
        checkpoint: path,
        steps: run.steps,
        episodes: run.episodes,
        updates: run.steps,
        elapsed: start.elapsed(),
        score: EvalReport::percent(n - bad, n),
    })
}

/// Greedy success percentage of an agent over `episodes` fresh episodes.
pub fn evaluate_agent(ckpt: &AgentCheckpoint, episodes: usize, seed: u64) -> Result<f64> {
    let encoder = ckpt.encoder();
    let mut env = LocalReacher::new(derive_seed(seed, EVAL_STREAM), ckpt.noise, encoder.needs_pixels());
    let mut wins = 0;
    for _ in 0..episodes {
        wins += run_greedy_episode(&mut env, &ckpt.actor, encoder.as_ref(), MAX_STEPS)?.success as usize;
    }
    Ok(EvalReport::percent(wins, episodes))
}

/// Closed-loop success percentage of an inverse model.
pub fn evaluate_pretrained(model: &PretrainedModel, episodes: usize, seed: u64) -> Result<f64> {
    match model {
        PretrainedModel::Inverse(m) => {
            let eps = evaluate_inverse(m, episodes, derive_seed(seed, EVAL_STREAM))?;
            Ok(EvalReport::percent(eps.iter().filter(|e| e.success).count(), episodes))
        }
        PretrainedModel::Extractor(_) => Err(HarnessError::Mismatch(format!(
            "a {} model is a state extractor and has no policy to evaluate",
            model.kind()
        ))),
    }
}

/// Evaluates every checkpoint on every seed: one score per pair. With
/// `expected` set, checkpoints of another algorithm are rejected.
pub fn evaluate(
    checkpoints: &[PathBuf],
    episodes: usize,
    seeds: &[u64],
    expected: Option<Algorithm>,
) -> Result<EvalReport> {
    if checkpoints.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Empty("need at least one checkpoint and one seed".into()));
    }
    let mut scores = Vec::new();
    for path in checkpoints {
        let raw = load_checkpoint(path)?;
        let found = checkpoint::algorithm_of(&raw);
        if let (Some(want), Some(got)) = (expected, found) {
            if want != got {
                return Err(HarnessError::Mismatch(format!(
                    "{} was trained with {got}, expected {want}",
                    path.display()
                )));
            }
        }
        if found.is_some() {
            let ckpt = AgentCheckpoint::from_checkpoint(&raw)?;
            for &s in seeds {
                scores.push(evaluate_agent(&ckpt, episodes, s)?);
            }
        } else {
            if expected.is_some_and(|a| a != Algorithm::Inverse) {
                return Err(HarnessError::Mismatch(format!(
                    "{} does not hold a {} agent",
                    path.display(),
                    expected.unwrap()
                )));
            }
            let model = PretrainedModel::from_checkpoint(&raw)?;
            for &s in seeds {
                scores.push(evaluate_pretrained(&model, episodes, s)?);
            }
        }
    }
    EvalReport::from_scores(&scores).ok_or_else(|| HarnessError::Empty("no scores".into()))
}

/// Trains one pretraining model by name: inverse, internal, autoencoder or
/// forward.
pub fn pretrain_model(kind: &str, data: &ReplayBuffer, tc: &TrainConfig) -> Result<(PretrainedModel, TrainReport)> {
    Ok(match kind {
        "inverse" => {
            let (m, r) = train_inverse(data, tc)?;
            (PretrainedModel::Inverse(m), r)
        }
        "internal" => {
            let (m, r) = train_internal(data, tc)?;
            (PretrainedModel::Extractor(Extractor::Internal(m)), r)
        }
        "autoencoder" => {
            let (m, r) = train_autoencoder(data, tc)?;
            (PretrainedModel::Extractor(Extractor::Autoencoder(m)), r)
        }
        "forward" => {
            let (m, r) = train_forward(data, tc)?;
            (PretrainedModel::Extractor(Extractor::Forward(m)), r)
        }
        other => {
            return Err(HarnessError::Config(ConfigError::Invalid {
                key: "kind".into(),
                msg: format!("unknown model {other:?} (inverse, internal, autoencoder, forward)"),
            }))
        }
    })
}

/// Reads metrics CSVs and renders their seed-averaged curves, labelled by
/// file stem.
pub fn plot_files(paths: &[PathBuf], out: &Path) -> Result<()> {
    if paths.is_empty() {
        return Err(HarnessError::Empty("no metrics files given".into()));
    }
    let mut series = Vec::new();
    for p in paths {
        let rows = read_csv(BufReader::new(File::open(p)?))?;
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        series.push(series_from_rows(&label, &rows)?);
    }
    fs::write(out, render_svg(&series)?)?;
    Ok(())
}
