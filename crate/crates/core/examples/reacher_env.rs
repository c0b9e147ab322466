//! Drives the arm with a crude Jacobian-transpose controller, then prints the
//! final frame as ASCII art.
//!
//! ```text
//! cargo run --release --example reacher_env -- [seed] [noise]
//! ```

use reacher_rl::env::{forward_kinematics, Action, NoiseConfig, Reacher, L1, L2, MAX_STEPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let noise = if args.get(1).is_some_and(|s| s == "noise") {
        NoiseConfig::enabled(seed)
    } else {
        NoiseConfig::disabled()
    };

    let mut env = Reacher::new(seed, noise);
    let s = env.reset();
    println!("target ({:.3}, {:.3}), start distance {:.3}", s.target_x, s.target_y, s.distance());

    let mut ret = 0.0;
    for t in 1..=MAX_STEPS {
        let s = *env.state();
        let (_, g) = forward_kinematics(s.theta1, s.theta2);
        let (ex, ey) = (s.target_x - g.0, s.target_y - g.1);
        // columns of the Jacobian of the gripper position
        let (s1, c1) = s.theta1.sin_cos();
        let (s12, c12) = (s.theta1 + s.theta2).sin_cos();
        let j1 = (-L1 * s1 - L2 * s12, L1 * c1 + L2 * c12);
        let j2 = (-L2 * s12, L2 * c12);
        let a = Action::new(20.0 * (j1.0 * ex + j1.1 * ey), 20.0 * (j2.0 * ex + j2.1 * ey));
        let out = env.step(a)?;
        ret += out.reward;
        if t % 20 == 0 || out.done {
            println!("step {t:>4}: distance {:.4}, return {ret:.3}", out.next_state.distance());
        }
        if out.done {
            println!("{}", if out.success { "reached the target" } else { "ran out of steps" });
            break;
        }
    }

    let frame = env.render();
    for row in (0..64).step_by(2) {
        let line: String = (0..64)
            .map(|col| match frame.intensity(row, col) {
                v if v > 0.75 => '#',
                v if v > 0.4 => '+',
                v if v > 0.1 => '.',
                _ => ' ',
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
