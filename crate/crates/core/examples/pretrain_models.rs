//! Trains one pretraining model on a freshly generated random dataset and
//! prints its held-out errors.
//!
//! ```text
//! cargo run --release --example pretrain_models -- inverse 20000 256 200 500 1
//! cargo run --release --example pretrain_models -- autoencoder 2000 64 40 250 1 noise
//! ```

use std::time::Instant;

use reacher_rl::env::NoiseConfig;
use reacher_rl::pretrain::{
    evaluate_inverse, gen_random_dataset, train_autoencoder, train_forward, train_internal, train_inverse, DatasetConfig,
    TrainConfig,
};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("inverse");
    let batches = arg(&args, 1, 2000);
    let batch_size = arg(&args, 2, 64);
    let episodes = arg(&args, 3, 40);
    let steps = arg(&args, 4, 250);
    let seed = arg(&args, 5, 1u64);
    let noisy = args.get(6).is_some_and(|s| s == "noise");
    let mean_removal = !args.get(7).is_some_and(|s| s == "raw");
    let lr = arg(&args, 8, TrainConfig::default().lr);

    let t0 = Instant::now();
    let data = gen_random_dataset(&DatasetConfig {
        episodes,
        steps,
        seed,
        pixels: kind != "inverse",
        noise: if noisy { NoiseConfig::enabled(seed) } else { NoiseConfig::disabled() },
    })?;
    println!("{} records in {:.1}s", data.len(), t0.elapsed().as_secs_f64());

    let cfg = TrainConfig {
        batches,
        batch_size,
        seed,
        mean_removal,
        lr,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let report = match kind {
        "inverse" => {
            let (m, r) = train_inverse(&data, &cfg)?;
            let eval = evaluate_inverse(&m, 100, seed + 1000)?;
            let solved = eval.iter().filter(|e| e.success).count();
            println!("closed loop: {solved}/100 episodes solved");
            r
        }
        "internal" => train_internal(&data, &cfg)?.1,
        "autoencoder" => train_autoencoder(&data, &cfg)?.1,
        "forward" => train_forward(&data, &cfg)?.1,
        other => return Err(format!("unknown model {other}").into()),
    };
    println!("trained {batches} batches in {:.1}s", t0.elapsed().as_secs_f64());
    let chunk = (report.loss.len() / 10).max(1);
    for (i, c) in report.loss.chunks(chunk).enumerate() {
        println!("  batches {:>7}: loss {:.5}", (i + 1) * chunk, c.iter().sum::<f32>() / c.len() as f32);
    }
    for (i, c) in report.recon_loss.chunks(chunk).enumerate() {
        println!("  batches {:>7}: reconstruction {:.6}", (i + 1) * chunk, c.iter().sum::<f32>() / c.len() as f32);
    }
    let tail = &report.loss[report.loss.len().saturating_sub(100)..];
    println!("final training loss {:.5}", tail.iter().sum::<f32>() / tail.len().max(1) as f32);
    println!("held out: {:?}", report.holdout);
    Ok(())
}
