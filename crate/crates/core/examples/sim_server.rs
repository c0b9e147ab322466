//! Starts a simulation server on a free local port, replays a random action
//! sequence through it and through a local environment, and checks that the
//! two trajectories agree bit for bit.
//!
//! ```text
//! cargo run --release --example sim_server -- [steps] [pixels]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::env::{Environment, LocalReacher, NoiseConfig};
use reacher_rl::server::{RemoteReacher, Server, ServerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let pixels = args.get(1).is_some_and(|s| s == "pixels");

    let server = Server::bind("127.0.0.1:0", ServerConfig::default())?.spawn()?;
    println!("serving on {}", server.addr());

    let seed = 7;
    let mut remote = RemoteReacher::connect(server.addr(), seed, false, pixels)?;
    let mut local = LocalReacher::new(seed, NoiseConfig::disabled(), pixels);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    assert_eq!(remote.reset()?, local.reset()?);
    let (mut episodes, mut wins) = (0, 0);
    let t0 = std::time::Instant::now();
    for _ in 0..steps {
        let a = [rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0)];
        let r = remote.step(a)?;
        let l = local.step(a)?;
        if r != l {
            return Err("remote and local trajectories diverged".into());
        }
        if l.done {
            episodes += 1;
            wins += l.success as u32;
            assert_eq!(remote.reset()?, local.reset()?);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{steps} identical steps ({episodes} episodes, {wins} successes), {:.0} remote steps/s", steps as f64 / dt);
    server.shutdown();
    Ok(())
}
