//! Tabular temporal-difference control on small discrete worlds.
//!
//! SARSA, Q-learning and Watkins Q(λ) with replacing or accumulating
//! eligibility traces, ε-greedy and softmax behaviour policies, and value
//! iteration as the exact reference. Ties in argmax always go to the lowest
//! action index.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Up, down, left, right.
pub const ACTIONS: usize = 4;

/// Deterministic episodic task with a finite state set.
pub trait TabularEnv {
    fn n_states(&self) -> usize;
    fn start(&self) -> usize;
    /// `(next_state, reward, terminal)`.
    fn step(&self, state: usize, action: usize) -> (usize, f64, bool);
    /// Steps after which an episode is cut off (without terminal semantics).
    fn episode_cap(&self) -> u32;
    /// States that end an episode on entry; their action values stay zero.
    fn is_terminal(&self, _state: usize) -> bool {
        false
    }
}

/// Grid with reward 1 on entering the goal and 0 elsewhere. Moves off the
/// grid leave the agent in place. Row 0 is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub cap: u32,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::square(5)
    }
}

impl GridWorld {
    /// `n×n` grid from the top-left to the bottom-right corner.
    pub fn square(n: usize) -> Self {
        Self {
            width: n,
            height: n,
            start: (0, 0),
            goal: (n - 1, n - 1),
            cap: 200,
        }
    }

    /// `(column, row)` to state index.
    pub fn index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.width + cell.0
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    pub fn goal_state(&self) -> usize {
        self.index(self.goal)
    }

    pub fn manhattan_to_goal(&self, state: usize) -> usize {
        let (x, y) = self.cell(state);
        x.abs_diff(self.goal.0) + y.abs_diff(self.goal.1)
    }
}

impl TabularEnv for GridWorld {
    fn n_states(&self) -> usize {
        self.width * self.height
    }

    fn start(&self) -> usize {
        self.index(self.start)
    }

    fn step(&self, state: usize, action: usize) -> (usize, f64, bool) {
        let (x, y) = self.cell(state);
        let (nx, ny) = match action {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(self.height - 1)),
            2 => (x.saturating_sub(1), y),
            _ => ((x + 1).min(self.width - 1), y),
        };
        let next = self.index((nx, ny));
        if next == self.goal_state() {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }

    fn episode_cap(&self) -> u32 {
        self.cap
    }

    fn is_terminal(&self, state: usize) -> bool {
        state == self.goal_state()
    }
}

/// One state whose every action pays 1 and loops back; never terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfLoop {
    pub cap: u32,
}

impl TabularEnv for SelfLoop {
    fn n_states(&self) -> usize {
        1
    }

    fn start(&self) -> usize {
        0
    }

    fn step(&self, _: usize, _: usize) -> (usize, f64, bool) {
        (0, 1.0, false)
    }

    fn episode_cap(&self) -> u32 {
        self.cap
    }
}

/// Action values, `n_states × 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, init: f64) -> Self {
        Self {
            n_states,
            values: vec![init; n_states * ACTIONS],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * ACTIONS + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * ACTIONS + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * ACTIONS..(s + 1) * ACTIONS]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.argmax(s)).collect()
    }

    /// `state_index,a0,a1,a2,a3` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state_index,a0,a1,a2,a3\n");
        for s in 0..self.n_states {
            let r = self.row(s);
            writeln!(out, "{s},{},{},{},{}", r[0], r[1], r[2], r[3]).expect("write to string");
        }
        out
    }
}

/// Lowest index among the maxima.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// All indices within `tol` of the maximum.
pub fn argmax_set(row: &[f64], tol: f64) -> Vec<usize> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&i| row[i] >= m - tol).collect()
}

/// With probability ε a uniform draw over all actions, otherwise the
/// greedy action.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_row: &[f64], eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q_row.len())
    } else {
        argmax(q_row)
    }
}

/// Boltzmann probabilities `exp(Q/τ) / Σ exp(Q/τ)`, max-shifted.
pub fn softmax_probs(q_row: &[f64], temperature: f64) -> Vec<f64> {
    let m = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q_row.iter().map(|&q| ((q - m) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn softmax_policy<R: Rng + ?Sized>(q_row: &[f64], temperature: f64, rng: &mut R) -> (usize, Vec<f64>) {
    let p = softmax_probs(q_row, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return (i, p);
        }
    }
    (p.len() - 1, p)
}

/// Behaviour policy used while learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// ε decays linearly from `start` to `end` over `decay_episodes`.
    EpsilonGreedy { start: f64, end: f64, decay_episodes: u64 },
    Softmax { temperature: f64 },
}

impl Behavior {
    pub fn epsilon(eps: f64) -> Self {
        Behavior::EpsilonGreedy {
            start: eps,
            end: eps,
            decay_episodes: 0,
        }
    }

    fn choose<R: Rng + ?Sized>(&self, q_row: &[f64], episode: u64, rng: &mut R) -> usize {
        match *self {
            Behavior::EpsilonGreedy {
                start,
                end,
                decay_episodes,
            } => {
                let eps = if decay_episodes == 0 {
                    end
                } else {
                    let f = (episode as f64 / decay_episodes as f64).min(1.0);
                    start + (end - start) * f
                };
                epsilon_greedy(q_row, eps, rng)
            }
            Behavior::Softmax { temperature } => softmax_policy(q_row, temperature, rng).0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub behavior: Behavior,
    pub episodes: u64,
    /// Optional cap on the total number of environment steps.
    pub max_steps: Option<u64>,
    pub q_init: f64,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 0.9,
            behavior: Behavior::epsilon(0.2),
            episodes: 1000,
            max_steps: None,
            q_init: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularRun {
    pub q: QTable,
    pub steps: u64,
    pub episodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    Replacing,
    Accumulating,
}

/// Eligibility values per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub mode: TraceMode,
    values: Vec<f64>,
}

impl TraceTable {
    pub fn new(n_states: usize, mode: TraceMode) -> Self {
        Self {
            mode,
            values: vec![0.0; n_states * ACTIONS],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * ACTIONS + a]
    }

    pub fn visit(&mut self, s: usize, a: usize) {
        let e = &mut self.values[s * ACTIONS + a];
        match self.mode {
            TraceMode::Replacing => *e = 1.0,
            TraceMode::Accumulating => *e += 1.0,
        }
    }

    pub fn decay(&mut self, factor: f64) {
        for e in &mut self.values {
            *e *= factor;
        }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|e| *e = 0.0);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn run_episodes<E: TabularEnv>(
    env: &E,
    cfg: &TabularConfig,
    mut episode: impl FnMut(&mut QTable, u64, &mut u64, &mut ChaCha8Rng) -> bool,
) -> TabularRun {
    let mut q = QTable::new(env.n_states(), cfg.q_init);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = 0u64;
    let mut episodes = 0u64;
    while episodes < cfg.episodes && cfg.max_steps.is_none_or(|m| steps < m) {
        let finished = episode(&mut q, episodes, &mut steps, &mut rng);
        episodes += 1;
        if !finished {
            break;
        }
    }
    TabularRun { q, steps, episodes }
}

fn budget_left(cfg: &TabularConfig, steps: u64) -> bool {
    cfg.max_steps.is_none_or(|m| steps < m)
}

/// On-policy TD control; the next action is drawn before the update.
pub fn sarsa_train<E: TabularEnv>(env: &E, cfg: &TabularConfig) -> TabularRun {
    run_episodes(env, cfg, |q, ep, steps, rng| {
        let mut s = env.start();
        let mut a = cfg.behavior.choose(q.row(s), ep, rng);
        for _ in 0..env.episode_cap() {
            if !budget_left(cfg, *steps) {
                return false;
            }
            *steps += 1;
            let (s2, r, done) = env.step(s, a);
            let a2 = cfg.behavior.choose(q.row(s2), ep, rng);
            let boot = if done { 0.0 } else { q.get(s2, a2) };
            let old = q.get(s, a);
            q.set(s, a, old + cfg.alpha * (r + cfg.gamma * boot - old));
            if done {
                break;
            }
            s = s2;
            a = a2;
        }
        true
    })
}

/// Off-policy TD control with a max bootstrap.
pub fn qlearning_train<E: TabularEnv>(env: &E, cfg: &TabularConfig) -> TabularRun {
    run_episodes(env, cfg, |q, ep, steps, rng| {
        let mut s = env.start();
        for _ in 0..env.episode_cap() {
            if !budget_left(cfg, *steps) {
                return false;
            }
            *steps += 1;
            let a = cfg.behavior.choose(q.row(s), ep, rng);
            let (s2, r, done) = env.step(s, a);
            let boot = if done { 0.0 } else { q.max(s2) };
            let old = q.get(s, a);
            let delta = r + cfg.gamma * boot - old;
            q.set(s, a, old + cfg.alpha * delta);
            if done {
                break;
            }
            s = s2;
        }
        true
    })
}

/// Watkins Q(λ). Traces are cleared at every episode start and whenever the
/// behaviour policy picks an action outside the greedy set.
pub fn qlambda_train<E: TabularEnv>(env: &E, cfg: &TabularConfig, lambda: f64, mode: TraceMode) -> TabularRun {
    let mut traces = TraceTable::new(env.n_states(), mode);
    run_episodes(env, cfg, |q, ep, steps, rng| {
        traces.clear();
        let mut s = env.start();
        for _ in 0..env.episode_cap() {
            if !budget_left(cfg, *steps) {
                return false;
            }
            *steps += 1;
            let act = cfg.behavior.choose(q.row(s), ep, rng);
            if !argmax_set(q.row(s), 0.0).contains(&act) {
                traces.clear();
            }
            let (s2, r, done) = env.step(s, act);
            let boot = if done { 0.0 } else { q.max(s2) };
            let delta = r + cfg.gamma * boot - q.get(s, act);
            traces.visit(s, act);
            for (qv, &e) in q.values.iter_mut().zip(&traces.values) {
                if e != 0.0 {
                    *qv += cfg.alpha * delta * e;
                }
            }
            traces.decay(cfg.gamma * lambda);
            if done {
                break;
            }
            s = s2;
        }
        true
    })
}

/// Exact `Q*` by synchronous fixed-point iteration until the largest change
/// drops below `tol`.
pub fn value_iteration<E: TabularEnv>(env: &E, gamma: f64, tol: f64) -> QTable {
    let n = env.n_states();
    let mut q = QTable::new(n, 0.0);
    loop {
        let mut next = q.clone();
        let mut change: f64 = 0.0;
        for s in (0..n).filter(|&s| !env.is_terminal(s)) {
            for a in 0..ACTIONS {
                let (s2, r, done) = env.step(s, a);
                let v = r + if done { 0.0 } else { gamma * q.max(s2) };
                change = change.max((v - q.get(s, a)).abs());
                next.set(s, a, v);
            }
        }
        q = next;
        if change < tol {
            return q;
        }
    }
}

/// Length of the greedy path from the start to a terminal state, or `None`
/// if it does not arrive within the episode cap.
pub fn greedy_path_length<E: TabularEnv>(env: &E, q: &QTable) -> Option<u32> {
    let mut s = env.start();
    for t in 1..=env.episode_cap() {
        let (s2, _, done) = env.step(s, q.argmax(s));
        if done {
            return Some(t);
        }
        s = s2;
    }
    None
}

/// States where the greedy action of `learned` is not optimal under `optimal`.
pub fn policy_disagreements(learned: &QTable, optimal: &QTable, tol: f64) -> Vec<usize> {
    (0..learned.n_states())
        .filter(|&s| !argmax_set(optimal.row(s), tol).contains(&learned.argmax(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_moves_clamp() {
        let g = GridWorld::default();
        assert_eq!(g.step(0, 0), (0, 0.0, false));
        assert_eq!(g.step(0, 3), (1, 0.0, false));
        assert_eq!(g.step(g.index((4, 3)), 1), (24, 1.0, true));
    }

    #[test]
    fn argmax_takes_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0, 0.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 1.0, 2.0]), 0);
        assert_eq!(argmax_set(&[2.0, 2.0, 1.0, 2.0], 0.0), vec![0, 1, 3]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = QTable::new(2, 0.5).to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "state_index,a0,a1,a2,a3");
        assert_eq!(lines[2], "1,0.5,0.5,0.5,0.5");
    }
}
