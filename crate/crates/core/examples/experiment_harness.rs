//! Runs a small config-driven experiment end to end: parses a config, trains
//! two seeds of asynchronous DDPG for a few thousand steps, re-evaluates the
//! checkpoints and writes the learning-curve plot.
//!
//! ```text
//! cargo run --release --example experiment_harness -- [out_dir]
//! ```

use std::path::PathBuf;

use reacher_rl::harness::{evaluate, format_table, parse_config, plot_files, run_training};

const CONFIG: &str = "
# short run on state features
algorithm = ddpg-async
seeds = 1,2
total_steps = 20000
workers = 4
hidden = 64,48
eval_episodes = 20
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()));
    let cfg = parse_config(CONFIG, &[("out_dir".into(), out.display().to_string())])?;
    let summary = run_training(&cfg)?;
    for run in &summary.runs {
        println!(
            "seed {}: {} steps, {} episodes in {:.1?}, greedy success {:.0}%",
            run.seed, run.steps, run.episodes, run.elapsed, run.score
        );
    }

    let ckpts: Vec<PathBuf> = summary.runs.iter().map(|r| r.checkpoint.clone()).collect();
    let again = evaluate(&ckpts, 20, &[11], Some(cfg.algorithm))?;
    print!("{}", format_table(&[("training eval", &summary.report), ("fresh eval", &again)]));

    if let Some(csv) = &summary.metrics_csv {
        let svg = out.join("curves.svg");
        plot_files(std::slice::from_ref(csv), &svg)?;
        println!("learning curve written to {}", svg.display());
    }
    Ok(())
}
