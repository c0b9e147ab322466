//! Trains one of the DDPG variants on state features and evaluates the
//! greedy policy.
//!
//! ```text
//! cargo run --release --example ddpg_reacher -- [baseline|distributed|async] [steps] [workers] [seed]
//! ```

use reacher_rl::agents::{
    run_greedy_episode, train_async, train_baseline, train_distributed, FeatureEncoder, HyperParams, MetricsLog,
    TrainSetup,
};
use reacher_rl::env::{LocalReacher, NoiseConfig, MAX_STEPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let algo = args.first().map(String::as_str).unwrap_or("async");
    let steps: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(50_000);
    let workers: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let seed: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1);

    let encoder = FeatureEncoder::default();
    let metrics = MetricsLog::new();
    let setup = TrainSetup {
        hp: HyperParams {
            total_steps: steps,
            workers,
            ..HyperParams::default()
        },
        seed,
        encoder: &encoder,
        metrics: Some(&metrics),
        time_limit: None,
    };
    let make_env = |w: usize| LocalReacher::new(seed * 1000 + w as u64, NoiseConfig::disabled(), false);
    let out = match algo {
        "baseline" => train_baseline(&setup, make_env(0))?,
        "distributed" => train_distributed(&setup, make_env)?,
        "async" => train_async(&setup, make_env)?,
        other => return Err(format!("unknown algorithm {other}").into()),
    };
    println!(
        "{algo}: {} steps, {} episodes, {} updates in {:.1?} ({:.0} steps/s)",
        out.steps,
        out.episodes,
        out.updates,
        out.elapsed,
        out.steps_per_second()
    );

    let records = metrics.snapshot();
    let chunk = (records.len() / 10).max(1);
    for part in records.chunks(chunk) {
        let wins = part.iter().filter(|r| r.success).count();
        println!(
            "  up to step {:>8}: training success {:5.1}%",
            part.last().map(|r| r.global_step).unwrap_or(0),
            100.0 * wins as f64 / part.len() as f64
        );
    }

    let mut env = LocalReacher::new(seed ^ 0xE7A1, NoiseConfig::disabled(), false);
    let mut wins = 0;
    for _ in 0..100 {
        wins += run_greedy_episode(&mut env, &out.actor, &encoder, MAX_STEPS)?.success as u32;
    }
    println!("greedy evaluation: {wins}/100 episodes solved");
    Ok(())
}
