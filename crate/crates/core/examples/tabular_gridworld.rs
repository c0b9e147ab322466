//! SARSA, Q-learning and Q(λ) on the 5×5 gridworld, compared against the
//! value-iteration policy.
//!
//! ```text
//! cargo run --release --example tabular_gridworld -- [steps] [seed]
//! ```

use reacher_rl::tabular::{
    policy_disagreements, qlambda_train, qlearning_train, sarsa_train, value_iteration, Behavior, GridWorld, QTable,
    TabularConfig, TabularEnv, TraceMode,
};

fn show(g: &GridWorld, q: &QTable) {
    let arrows = ['^', 'v', '<', '>'];
    for row in 0..5 {
        let line: String = (0..5)
            .map(|col| {
                let s = g.index((row, col));
                if s == g.goal_state() {
                    'G'
                } else {
                    arrows[q.argmax(s)]
                }
            })
            .collect();
        println!("    {line}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(50_000);
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let g = GridWorld::default();
    let vi = value_iteration(&g, 0.9, 1e-12);
    println!("value iteration, V(start) = {:.4}", vi.max(g.start()));
    show(&g, &vi);

    let cfg = TabularConfig {
        alpha: 0.5,
        gamma: 0.9,
        behavior: Behavior::epsilon(0.2),
        episodes: u64::MAX,
        max_steps: Some(steps),
        q_init: 1.0,
        seed,
    };
    let runs = [
        ("sarsa", sarsa_train(&g, &cfg)),
        ("q-learning", qlearning_train(&g, &cfg)),
        ("q(0.7)", qlambda_train(&g, &cfg, 0.7, TraceMode::Replacing)),
    ];
    for (name, run) in &runs {
        let bad = policy_disagreements(&run.q, &vi, 1e-9);
        println!(
            "{name}: {} episodes, V(start) = {:.4}, {} states disagree with the optimal policy",
            run.episodes,
            run.q.max(g.start()),
            bad.len()
        );
        show(&g, &run.q);
    }
    Ok(())
}
