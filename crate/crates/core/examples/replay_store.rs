//! Fills a replay buffer from random play, samples a minibatch and round-trips
//! the buffer through its binary format.
//!
//! ```text
//! cargo run --release --example replay_store
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::env::{Environment, LocalReacher, NoiseConfig};
use reacher_rl::replay::{Observation, ReplayBuffer, StateKind, Transition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut env = LocalReacher::new(5, NoiseConfig::disabled(), false);
    let mut buf = ReplayBuffer::new(1000, StateKind::Features { dim: 6 })?;

    let mut obs = env.reset()?;
    for _ in 0..2500 {
        let a = [rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0)];
        let out = env.step(a)?;
        buf.push(Transition {
            state: Observation::Features(obs.features.to_vec()),
            action: a,
            reward: out.reward,
            next_state: Observation::Features(out.observation.features.to_vec()),
            terminal: out.success,
        })?;
        obs = if out.done { env.reset()? } else { out.observation };
    }
    println!("{} transitions kept of 2500 pushed (capacity {})", buf.len(), buf.capacity());

    let batch = buf.sample(4, &mut rng)?;
    for t in batch {
        println!("  action {:?} reward {:+.4}", t.action, t.reward);
    }

    let mut bytes = Vec::new();
    buf.write_to(&mut bytes)?;
    let back = ReplayBuffer::from_bytes(&bytes)?;
    println!("{} bytes on disk, round trip equal: {}", bytes.len(), back.iter().eq(buf.iter()));
    Ok(())
}
