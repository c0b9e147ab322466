use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use reacher_rl::harness::{self, format_table, load_config, noise_config, pretrain_model, Algorithm};
use reacher_rl::pretrain::{gen_random_dataset, write_random_dataset, DatasetConfig, TrainConfig};
use reacher_rl::replay::ReplayBuffer;
use reacher_rl::server::{Server, ServerConfig};

#[derive(Parser)]
#[command(name = "reacher-rl", version, about = "Reacher RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed and write checkpoints, metrics and a report.
    Train {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config value, e.g. `--set gamma=0.9`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Greedy evaluation of checkpoints; one score per checkpoint and seed.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Reject checkpoints of another algorithm.
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long, default_value = "score")]
        label: String,
    },
    /// Train an inverse, internal, autoencoder or forward model.
    Pretrain {
        #[arg(long)]
        kind: String,
        /// Dataset written by `gen-data`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long)]
        noise: bool,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long, default_value_t = 20_000)]
        batches: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Feed raw frames instead of mean-centered ones.
        #[arg(long)]
        no_mean_removal: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record random-action episodes to a dataset file.
    GenData {
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        pixels: bool,
        #[arg(long)]
        noise: bool,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve reacher sessions over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Enable background noise for every session.
        #[arg(long)]
        noise: bool,
        /// Seed of the noise pattern.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plot rolling training success of metrics CSVs as an SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, sets } => {
            let cfg = load_config(config.as_deref(), &sets)?;
            let s = harness::run_training(&cfg)?;
            for r in &s.runs {
                println!(
                    "seed {}: {} steps, {} episodes, {} updates in {:.1?}, score {:.1}% -> {}",
                    r.seed,
                    r.steps,
                    r.episodes,
                    r.updates,
                    r.elapsed,
                    r.score,
                    r.checkpoint.display()
                );
            }
            if let Some(p) = &s.metrics_csv {
                println!("metrics: {}", p.display());
            }
            print!("{}", format_table(&[(cfg.algorithm.name(), &s.report)]));
        }
        Command::Eval {
            checkpoints,
            episodes,
            seeds,
            algorithm,
            label,
        } => {
            let report = harness::evaluate(&checkpoints, episodes, &seeds, algorithm)?;
            print!("{}", format_table(&[(label.as_str(), &report)]));
        }
        Command::Pretrain {
            kind,
            data,
            episodes,
            steps,
            noise,
            noise_seed,
            batches,
            batch_size,
            lr,
            no_mean_removal,
            seed,
            out,
        } => {
            let data = match data {
                Some(p) => ReplayBuffer::load(&p).with_context(|| format!("reading {}", p.display()))?,
                None => gen_random_dataset(&DatasetConfig {
                    episodes,
                    steps,
                    seed,
                    pixels: kind != "inverse",
                    noise: noise_config(noise, noise_seed),
                })?,
            };
            let tc = TrainConfig {
                batches,
                batch_size,
                lr,
                seed,
                mean_removal: !no_mean_removal,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let (model, report) = pretrain_model(&kind, &data, &tc)?;
            model.save(&out)?;
            let tail = &report.loss[report.loss.len().saturating_sub(100)..];
            println!(
                "{kind}: {batches} batches in {:.1?}, final loss {:.5}",
                t0.elapsed(),
                tail.iter().sum::<f32>() / tail.len().max(1) as f32
            );
            println!("held out: {:?}", report.holdout);
            println!("saved {}", out.display());
        }
        Command::GenData {
            episodes,
            steps,
            seed,
            pixels,
            noise,
            noise_seed,
            out,
        } => {
            if noise && !pixels {
                bail!("--noise only affects rendered frames; add --pixels");
            }
            let buf = write_random_dataset(
                &DatasetConfig {
                    episodes,
                    steps,
                    seed,
                    pixels,
                    noise: noise_config(noise, noise_seed),
                },
                &out,
            )?;
            println!("wrote {} records to {}", buf.len(), out.display());
        }
        Command::Serve { bind, noise, seed } => {
            let server = Server::bind(
                &bind,
                ServerConfig {
                    noise: reacher_rl::render::NoiseConfig {
                        enabled: noise,
                        ..reacher_rl::render::NoiseConfig::enabled(seed)
                    },
                },
            )
            .with_context(|| format!("binding {bind}"))?;
            println!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::Plot { csv, out } => {
            harness::plot_files(&csv, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
