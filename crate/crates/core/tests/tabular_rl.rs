use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reacher_rl::tabular::*;

const GAMMA: f64 = 0.9;

/// Closed form for the deterministic grid: the shortest path to the goal
/// from state `s` after taking `a` has length `d`, so `Q* = γ^(d−1)`.
fn closed_form_q(g: &GridWorld, gamma: f64) -> QTable {
    let mut q = QTable::new(g.n_states(), 0.0);
    for s in 0..g.n_states() {
        if s == g.goal_state() {
            continue;
        }
        for a in 0..ACTIONS {
            let (s2, _, done) = g.step(s, a);
            let d = if done { 1 } else { 1 + g.manhattan_to_goal(s2) };
            q.set(s, a, gamma.powi(d as i32 - 1));
        }
    }
    q
}

#[test]
fn value_iteration_matches_closed_form() {
    for n in [3, 5] {
        let g = GridWorld::square(n);
        let vi = value_iteration(&g, GAMMA, 1e-12);
        let cf = closed_form_q(&g, GAMMA);
        for (a, b) in vi.values().iter().zip(cf.values()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
    let g = GridWorld::square(3);
    let vi = value_iteration(&g, GAMMA, 1e-12);
    let corner = g.start();
    let d = g.manhattan_to_goal(corner) as i32;
    assert!((vi.get(corner, 3) - GAMMA.powi(d - 1)).abs() < 1e-10);
    // goal-adjacent, moving into the goal
    assert_eq!(vi.get(g.index((1, 2)), 3), 1.0);
}

#[test]
fn value_iteration_with_zero_discount_is_reward_table() {
    let g = GridWorld::default();
    let vi = value_iteration(&g, 0.0, 1e-12);
    for s in (0..g.n_states()).filter(|&s| !g.is_terminal(s)) {
        for a in 0..ACTIONS {
            assert_eq!(vi.get(s, a), g.step(s, a).1);
        }
    }
}

#[test]
fn epsilon_greedy_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0, 0.0], 0.0, &mut rng), 1);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[epsilon_greedy(&[0.0, 5.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
    }
    let greedy = (0..n)
        .filter(|_| epsilon_greedy(&[0.0, 5.0, 0.0, 0.0], 0.1, &mut rng) == 1)
        .count();
    assert!((greedy as f64 / n as f64 - 0.925).abs() < 0.01);
}

#[test]
fn softmax_properties() {
    let p = softmax_probs(&[1.0, 1.0, 1.0, 1.0], 0.7);
    assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    let p = softmax_probs(&[1.0, 0.0], 1.0);
    let e = std::f64::consts::E;
    assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
    assert!((p[0] - 0.7311).abs() < 1e-4);
    let p = softmax_probs(&[0.3, 0.2, 0.1, 0.0], 0.01);
    assert!(p[0] > 0.999);
    let q = [0.5, -1.0, 2.0, 0.25];
    let shifted: Vec<f64> = q.iter().map(|v| v + 123.0).collect();
    let (a, b) = (softmax_probs(&q, 0.5), softmax_probs(&shifted, 0.5));
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (i, probs) = softmax_policy(&[0.0, 0.0, 9.0, 0.0], 0.01, &mut rng);
    assert_eq!(i, 2);
    assert_eq!(probs.len(), 4);
}

fn cfg(seed: u64) -> TabularConfig {
    TabularConfig {
        alpha: 0.5,
        gamma: GAMMA,
        behavior: Behavior::epsilon(0.2),
        episodes: u64::MAX,
        max_steps: Some(50_000),
        q_init: 1.0,
        seed,
    }
}

#[test]
fn zero_learning_rate_leaves_table_untouched() {
    let g = GridWorld::default();
    let c = TabularConfig {
        alpha: 0.0,
        q_init: 0.3,
        max_steps: Some(2000),
        ..cfg(0)
    };
    for q in [
        sarsa_train(&g, &c).q,
        qlearning_train(&g, &c).q,
        qlambda_train(&g, &c, 0.8, TraceMode::Accumulating).q,
    ] {
        assert!(q.values().iter().all(|&v| v == 0.3));
    }
}

#[test]
fn sarsa_self_loop_converges_to_geometric_sum() {
    let env = SelfLoop { cap: 200 };
    let c = TabularConfig {
        alpha: 0.1,
        gamma: 0.97,
        behavior: Behavior::epsilon(0.0),
        episodes: 100,
        max_steps: None,
        q_init: 0.0,
        seed: 0,
    };
    let q = sarsa_train(&env, &c).q;
    assert!((q.get(0, 0) - 1.0 / 0.03).abs() < 0.1, "{}", q.get(0, 0));
}

#[test]
fn sarsa_with_decaying_exploration_finds_shortest_path() {
    let g = GridWorld::default();
    let c = TabularConfig {
        alpha: 0.5,
        gamma: GAMMA,
        behavior: Behavior::EpsilonGreedy {
            start: 0.5,
            end: 0.0,
            decay_episodes: 40_000,
        },
        episodes: 50_000,
        max_steps: None,
        q_init: 0.0,
        seed: 4,
    };
    let q = sarsa_train(&g, &c).q;
    assert_eq!(greedy_path_length(&g, &q), Some(g.manhattan_to_goal(g.start()) as u32));
}

#[test]
fn qlearning_start_value_matches_closed_form() {
    let g = GridWorld::default();
    let q = qlearning_train(&g, &cfg(7)).q;
    let d = g.manhattan_to_goal(g.start()) as i32;
    assert!((q.max(g.start()) - GAMMA.powi(d - 1)).abs() < 1e-3);
}

#[test]
fn qlearning_greedy_policy_agrees_with_value_iteration_on_five_seeds() {
    let g = GridWorld::default();
    let vi = value_iteration(&g, GAMMA, 1e-12);
    for seed in 0..5 {
        let run = qlearning_train(&g, &cfg(seed));
        assert!(run.steps <= 50_000);
        let bad = policy_disagreements(&run.q, &vi, 1e-9);
        assert!(bad.is_empty(), "seed {seed}: states {bad:?} disagree");
    }
}

#[test]
fn qlambda_zero_is_bitwise_qlearning() {
    let g = GridWorld::default();
    for seed in 0..5 {
        let a = qlearning_train(&g, &cfg(seed));
        for mode in [TraceMode::Replacing, TraceMode::Accumulating] {
            let b = qlambda_train(&g, &cfg(seed), 0.0, mode);
            let bits = |q: &QTable| q.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.q), bits(&b.q));
            assert_eq!(a.steps, b.steps);
        }
    }
}

#[test]
fn trace_arithmetic() {
    let gl: f64 = 0.9 * 0.8;
    let mut t = TraceTable::new(4, TraceMode::Replacing);
    t.visit(2, 1);
    t.visit(2, 1);
    assert_eq!(t.get(2, 1), 1.0);
    for _ in 0..3 {
        t.decay(gl);
    }
    assert!((t.get(2, 1) - gl.powi(3)).abs() < 1e-15);

    let mut t = TraceTable::new(4, TraceMode::Accumulating);
    t.visit(0, 0);
    t.decay(0.5);
    t.visit(0, 0);
    assert_eq!(t.get(0, 0), 1.5);
}

#[test]
fn qlambda_learns_and_keeps_trace_bounds() {
    let g = GridWorld::default();
    let vi = value_iteration(&g, GAMMA, 1e-12);
    let c = TabularConfig {
        max_steps: Some(200_000),
        ..cfg(3)
    };
    for mode in [TraceMode::Replacing, TraceMode::Accumulating] {
        let run = qlambda_train(&g, &c, 0.7, mode);
        let bad = policy_disagreements(&run.q, &vi, 1e-9);
        assert!(bad.is_empty(), "{mode:?}: {bad:?}");
        assert!(run.q.values().iter().all(|v| v.is_finite()));
    }
}
