//! Actor-critic learners for continuous control.
//!
//! * [`train_baseline`]: single-threaded DDPG with experience replay.
//! * [`train_distributed`]: workers buffer five one-step targets and apply
//!   them to a mutex-guarded learner.
//! * [`train_async`]: workers keep private parameter copies, compute n-step
//!   returns and push summed gradients into lock-free shared parameters.

mod asynchronous;
mod baseline;
mod distributed;
mod encoder;
mod metrics;

pub use asynchronous::{async_worker, train_async, AsyncShared};
pub use baseline::train_baseline;
pub use distributed::{distributed_worker, train_distributed, SharedLearner, WorkerStats};
pub use encoder::{FeatureEncoder, PixelEncoder, StateEncoder};
pub use metrics::{EpisodeRecord, MetricsLog};

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::env::{EnvError, Environment, MAX_STEPS};
use crate::nn::{
    Activation, AdamConfig, AdamState, LayerSpec, Network, NnError, ParamStore, Shape, Tensor,
};
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("a worker thread panicked")]
    WorkerPanic,
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// Exploration noise schedule: an Ornstein-Uhlenbeck process scaled by ε,
/// with ε decaying linearly over the first part of training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `total_steps` over which ε decays.
    pub decay_fraction: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self {
            ou_theta: 0.15,
            ou_sigma: 0.2,
            eps_start: 1.0,
            eps_end: 0.1,
            decay_fraction: 0.5,
        }
    }
}

impl Exploration {
    pub fn epsilon(&self, step: u64, total: u64) -> f64 {
        let span = self.decay_fraction * total as f64;
        if span <= 0.0 {
            return self.eps_end;
        }
        let frac = (step as f64 / span).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub gamma: f64,
    pub critic_output_l2: f64,
    pub max_episode_steps: u32,
    /// Steps buffered per update by the distributed and asynchronous workers.
    pub n_step: usize,
    pub workers: usize,
    pub total_steps: u64,
    pub exploration: Exploration,
    /// Environment steps before the baseline starts gradient updates.
    pub warmup: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Widths of the two hidden dense layers of actor and critic.
    pub hidden: [usize; 2],
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            tau: 0.001,
            lr_critic: 1e-4,
            lr_actor: 1e-4,
            gamma: 0.97,
            critic_output_l2: 0.02,
            max_episode_steps: MAX_STEPS,
            n_step: 5,
            workers: 16,
            total_steps: 1_000_000,
            exploration: Exploration::default(),
            warmup: 1000,
            replay_capacity: 100_000,
            batch_size: 64,
            hidden: [400, 300],
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        if !(self.critic_output_l2 >= 0.0) {
            return bad("critic_output_l2 must be nonnegative".into());
        }
        if self.n_step == 0 {
            return bad("n_step must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.max_episode_steps == 0 || self.max_episode_steps > MAX_STEPS {
            return bad(format!("max_episode_steps must be in 1..={MAX_STEPS}"));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch_size and replay_capacity must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        let e = &self.exploration;
        if !(e.ou_theta >= 0.0 && e.ou_sigma >= 0.0 && e.decay_fraction >= 0.0) {
            return bad("exploration parameters must be nonnegative".into());
        }
        Ok(())
    }
}

/// Ornstein-Uhlenbeck process around zero, one component per action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuNoise {
    pub x: [f64; 2],
    pub theta: f64,
    pub sigma: f64,
}

impl OuNoise {
    pub fn new(theta: f64, sigma: f64) -> Self {
        Self {
            x: [0.0; 2],
            theta,
            sigma,
        }
    }

    pub fn from_exploration(e: &Exploration) -> Self {
        Self::new(e.ou_theta, e.ou_sigma)
    }

    pub fn reset(&mut self) {
        self.x = [0.0; 2];
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; 2] {
        for x in &mut self.x {
            let n: f64 = rng.sample(StandardNormal);
            *x += self.theta * (0.0 - *x) + self.sigma * n;
        }
        self.x
    }
}

/// Spreads one seed into independent streams (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn image_front(input: Shape) -> Vec<LayerSpec> {
    match input {
        Shape::Flat(_) => Vec::new(),
        Shape::Image { .. } => vec![
            LayerSpec::conv2d(8, 5, 2, Activation::Relu),
            LayerSpec::conv2d(16, 5, 2, Activation::Relu),
            LayerSpec::flatten(),
        ],
    }
}

/// state → dense relu → dense relu → 2 tanh (conv front end for images).
pub fn actor_specs(input: Shape, hidden: [usize; 2]) -> Vec<LayerSpec> {
    let mut s = image_front(input);
    s.extend([
        LayerSpec::dense(hidden[0], Activation::Relu),
        LayerSpec::dense(hidden[1], Activation::Relu),
        LayerSpec::dense(2, Activation::Tanh),
    ]);
    s
}

/// state → dense relu → ⊕ action → dense relu → 1 linear with a weight
/// penalty on the output layer.
pub fn critic_specs(input: Shape, hidden: [usize; 2], output_l2: f64) -> Vec<LayerSpec> {
    let mut s = image_front(input);
    s.extend([
        LayerSpec::dense(hidden[0], Activation::Relu),
        LayerSpec::concat(2),
        LayerSpec::dense(hidden[1], Activation::Relu),
        LayerSpec::dense(1, Activation::Linear).with_l2(output_l2),
    ]);
    s
}

/// Trained networks, their targets and optimiser state.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Network<f32>,
    pub critic: Network<f32>,
    pub target_actor: Network<f32>,
    pub target_critic: Network<f32>,
    pub actor_opt: AdamState<f32>,
    pub critic_opt: AdamState<f32>,
}

impl ActorCritic {
    pub fn new(input: Shape, hp: &HyperParams, seed: u64) -> Result<Self> {
        let actor = Network::new(input, &actor_specs(input, hp.hidden), derive_seed(seed, 1))?;
        let critic = Network::new(
            input,
            &critic_specs(input, hp.hidden, hp.critic_output_l2),
            derive_seed(seed, 2),
        )?;
        Ok(Self::from_networks(actor, critic, hp))
    }

    /// Targets start as exact copies of the trained networks.
    pub fn from_networks(actor: Network<f32>, critic: Network<f32>, hp: &HyperParams) -> Self {
        let actor_opt = AdamState::new(AdamConfig::with_lr(hp.lr_actor), actor.params());
        let critic_opt = AdamState::new(AdamConfig::with_lr(hp.lr_critic), critic.params());
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
        }
    }

    /// Applies gradients and soft-updates both targets.
    pub fn apply(&mut self, grads: &Gradients, tau: f64) -> Result<()> {
        self.critic_opt.step(self.critic.params_mut(), &grads.critic)?;
        self.actor_opt.step(self.actor.params_mut(), &grads.actor)?;
        crate::nn::soft_update(self.target_critic.params_mut(), self.critic.params(), tau)?;
        crate::nn::soft_update(self.target_actor.params_mut(), self.actor.params(), tau)?;
        Ok(())
    }
}

/// Deterministic actor output for one state.
pub fn policy(actor: &Network<f32>, state: &[f32]) -> Result<[f32; 2]> {
    let y = actor.predict(&Tensor::row(state.to_vec()), None)?;
    Ok([y.data()[0], y.data()[1]])
}

/// `clamp(μ(s) + ε·OU, −1, 1)`.
pub fn act<R: Rng + ?Sized>(
    actor: &Network<f32>,
    state: &[f32],
    eps: f64,
    noise: &mut OuNoise,
    rng: &mut R,
) -> Result<[f32; 2]> {
    let mu = policy(actor, state)?;
    Ok(add_noise(mu, eps, noise, rng))
}

/// `clamp(μ + ε·OU, −1, 1)` for an already computed `μ`.
pub fn add_noise<R: Rng + ?Sized>(mu: [f32; 2], eps: f64, noise: &mut OuNoise, rng: &mut R) -> [f32; 2] {
    if eps == 0.0 {
        return mu.map(|a| a.clamp(-1.0, 1.0));
    }
    let n = noise.step(rng);
    [
        (mu[0] as f64 + eps * n[0]).clamp(-1.0, 1.0) as f32,
        (mu[1] as f64 + eps * n[1]).clamp(-1.0, 1.0) as f32,
    ]
}

/// Stacks equally sized rows into a batch tensor.
pub fn stack(rows: &[&[f32]]) -> Result<Tensor<f32>> {
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(NnError::Shape("ragged batch".into()).into());
        }
        data.extend_from_slice(r);
    }
    Ok(Tensor::matrix(rows.len(), width, data)?)
}

/// `y_i = r_i + γ·Q⁻(s'_i, μ⁻(s'_i))`, with the bootstrap dropped for
/// terminal transitions. Reads only the target networks.
pub fn bootstrap_targets(
    target_actor: &Network<f32>,
    target_critic: &Network<f32>,
    rewards: &[f32],
    next_states: &Tensor<f32>,
    terminal: &[bool],
    gamma: f64,
) -> Result<Vec<f32>> {
    if rewards.len() != next_states.rows() || terminal.len() != rewards.len() {
        return Err(NnError::Shape("targets: batch sizes differ".into()).into());
    }
    let a = target_actor.predict(next_states, None)?;
    let q = target_critic.predict(next_states, Some(&a))?;
    let g = gamma as f32;
    Ok(rewards
        .iter()
        .zip(q.data())
        .zip(terminal)
        .map(|((&r, &q), &t)| if t { r } else { r + g * q })
        .collect())
}

/// How per-sample gradients are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub actor: ParamStore<f32>,
    pub critic: ParamStore<f32>,
    /// Mean squared TD error of the batch.
    pub critic_loss: f32,
}

/// Critic gradient of `(y − Q(s, a))²` (plus the weight penalty) and actor
/// gradient of `−Q(s, μ(s))`, so a descent step ascends Q.
pub fn learner_gradients(
    actor: &Network<f32>,
    critic: &Network<f32>,
    states: &Tensor<f32>,
    actions: &Tensor<f32>,
    targets: &[f32],
    reduction: Reduction,
) -> Result<Gradients> {
    let n = states.rows();
    if targets.len() != n || actions.rows() != n {
        return Err(NnError::Shape("gradients: batch sizes differ".into()).into());
    }
    let scale = match reduction {
        Reduction::Mean => 1.0 / n as f32,
        Reduction::Sum => 1.0,
    };
    let (q, cache) = critic.forward(states, Some(actions))?;
    let mut loss = 0.0f32;
    let dq: Vec<f32> = q
        .data()
        .iter()
        .zip(targets)
        .map(|(&q, &y)| {
            loss += (q - y) * (q - y);
            2.0 * (q - y) * scale
        })
        .collect();
    let critic_grads = critic
        .backward(&cache, &Tensor::matrix(n, 1, dq)?)?
        .params
        .expect("parameter gradients requested");

    let (mu, actor_cache) = actor.forward(states, None)?;
    let (_, qcache) = critic.forward(states, Some(&mu))?;
    let back = critic.backward_inputs(&qcache, &Tensor::full(vec![n, 1], -scale))?;
    let dmu = back.side.expect("critic has an action input");
    let actor_grads = actor
        .backward(&actor_cache, &dmu)?
        .params
        .expect("parameter gradients requested");
    Ok(Gradients {
        actor: actor_grads,
        critic: critic_grads,
        critic_loss: loss / n as f32,
    })
}

/// One minibatch of transitions in tensor form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Tensor<f32>,
    pub actions: Tensor<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Tensor<f32>,
    pub terminal: Vec<bool>,
}

/// Targets from the target networks, then [`learner_gradients`] averaged
/// over the batch.
pub fn critic_loss_and_grads(ac: &ActorCritic, batch: &Batch, gamma: f64) -> Result<Gradients> {
    if batch.rewards.is_empty() {
        return Err(AgentError::Config("empty batch".into()));
    }
    let y = bootstrap_targets(
        &ac.target_actor,
        &ac.target_critic,
        &batch.rewards,
        &batch.next_states,
        &batch.terminal,
        gamma,
    )?;
    learner_gradients(&ac.actor, &ac.critic, &batch.states, &batch.actions, &y, Reduction::Mean)
}

/// Backward recursion `R ← r_i + γR` starting from `bootstrap`; element `i`
/// is the return from step `i`.
pub fn nstep_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for i in (0..rewards.len()).rev() {
        r = rewards[i] + gamma * r;
        out[i] = r;
    }
    out
}

/// Per-episode summary of a greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub steps: u32,
    pub success: bool,
    pub ret: f64,
}

/// Runs one noise-free episode with the given actor.
pub fn run_greedy_episode<E: Environment + ?Sized>(
    env: &mut E,
    actor: &Network<f32>,
    encoder: &dyn StateEncoder,
    max_steps: u32,
) -> Result<EpisodeSummary> {
    let mut obs = env.reset()?;
    let mut ret = 0.0;
    for t in 1..=max_steps {
        let a = policy(actor, &encoder.encode(&obs)?)?;
        let s = env.step(a)?;
        ret += s.reward as f64;
        if s.done || t == max_steps {
            return Ok(EpisodeSummary {
                steps: t,
                success: s.success,
                ret,
            });
        }
        obs = s.observation;
    }
    unreachable!("loop returns on the last step")
}

/// Global step counter shared by workers plus an optional wall-clock stop.
#[derive(Debug)]
pub struct StepBudget {
    counter: AtomicU64,
    pub total: u64,
    deadline: Option<Instant>,
}

impl StepBudget {
    pub fn new(total: u64, time_limit: Option<Duration>) -> Self {
        Self {
            counter: AtomicU64::new(0),
            total,
            deadline: time_limit.map(|d| Instant::now() + d),
        }
    }

    /// Claims one step; `None` once the budget is spent. The counter may
    /// overshoot `total` by at most one per worker.
    pub fn claim(&self) -> Option<u64> {
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            return None;
        }
        let prev = self.counter.fetch_add(1, Ordering::Relaxed);
        (prev < self.total).then_some(prev)
    }

    pub fn exhausted(&self) -> bool {
        self.counter.load(Ordering::Relaxed) >= self.total
            || self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Raw counter value, including failed claims.
    pub fn counter(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    /// Steps actually taken.
    pub fn taken(&self) -> u64 {
        self.counter().min(self.total)
    }
}

/// Everything a training run needs besides the environment.
pub struct TrainSetup<'a> {
    pub hp: HyperParams,
    pub seed: u64,
    pub encoder: &'a dyn StateEncoder,
    pub metrics: Option<&'a MetricsLog>,
    pub time_limit: Option<Duration>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: Network<f32>,
    pub critic: Network<f32>,
    /// Environment steps taken by all workers.
    pub steps: u64,
    /// Raw value of the shared step counter at the end.
    pub counter: u64,
    pub episodes: u64,
    /// Gradient applications (minibatch steps or update regions).
    pub updates: u64,
    pub elapsed: Duration,
}

impl TrainOutcome {
    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}
