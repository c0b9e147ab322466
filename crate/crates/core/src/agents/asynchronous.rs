use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;
use crate::nn::{AdamConfig, LayerSpec, Network, RelaxedAdam, RelaxedParams, Shape, Tensor};

use super::distributed::WorkerStats;
use super::{
    actor_specs, add_noise, bootstrap_targets, critic_specs, derive_seed, learner_gradients, nstep_returns, policy,
    stack, ActorCritic, AgentError, HyperParams, MetricsLog, OuNoise, Reduction, Result, StateEncoder, StepBudget,
    TrainOutcome, TrainSetup,
};

/// Lock-free shared parameters, targets and Adam moments.
#[derive(Debug)]
pub struct AsyncShared {
    input: Shape,
    actor_specs: Vec<LayerSpec>,
    critic_specs: Vec<LayerSpec>,
    pub actor: RelaxedParams,
    pub critic: RelaxedParams,
    pub target_actor: RelaxedParams,
    pub target_critic: RelaxedParams,
    actor_opt: RelaxedAdam,
    critic_opt: RelaxedAdam,
    regions: AtomicU64,
}

impl AsyncShared {
    pub fn new(input: Shape, hp: &HyperParams, seed: u64) -> Result<Self> {
        let ac = ActorCritic::new(input, hp, seed)?;
        let actor = RelaxedParams::from_store(ac.actor.params());
        let critic = RelaxedParams::from_store(ac.critic.params());
        Ok(Self {
            input,
            actor_specs: actor_specs(input, hp.hidden),
            critic_specs: critic_specs(input, hp.hidden, hp.critic_output_l2),
            actor_opt: RelaxedAdam::new(AdamConfig::with_lr(hp.lr_actor), &actor),
            critic_opt: RelaxedAdam::new(AdamConfig::with_lr(hp.lr_critic), &critic),
            target_actor: RelaxedParams::from_store(ac.target_actor.params()),
            target_critic: RelaxedParams::from_store(ac.target_critic.params()),
            actor,
            critic,
            regions: AtomicU64::new(0),
        })
    }

    pub fn actor_network(&self) -> Result<Network<f32>> {
        Ok(Network::from_params(self.input, &self.actor_specs, self.actor.snapshot())?)
    }

    pub fn critic_network(&self) -> Result<Network<f32>> {
        Ok(Network::from_params(self.input, &self.critic_specs, self.critic.snapshot())?)
    }

    fn target_networks(&self) -> Result<(Network<f32>, Network<f32>)> {
        Ok((
            Network::from_params(self.input, &self.actor_specs, self.target_actor.snapshot())?,
            Network::from_params(self.input, &self.critic_specs, self.target_critic.snapshot())?,
        ))
    }

    /// Update regions applied so far.
    pub fn regions(&self) -> u64 {
        self.regions.load(Ordering::Relaxed)
    }
}

/// One worker of asynchronous DDPG. Acts with private parameter copies;
/// after `n_step` steps or at the end of an episode it computes n-step
/// returns backwards from a target-network bootstrap, sums the gradients of
/// the buffered steps, applies them to the shared parameters without
/// locking, soft-updates the shared targets and resynchronises.
#[allow(clippy::too_many_arguments)]
pub fn async_worker<E: Environment + ?Sized>(
    shared: &AsyncShared,
    env: &mut E,
    encoder: &dyn StateEncoder,
    hp: &HyperParams,
    budget: &StepBudget,
    worker: usize,
    seed: u64,
    metrics: Option<&MetricsLog>,
) -> Result<WorkerStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 200 + worker as u64));
    let mut noise = OuNoise::from_exploration(&hp.exploration);
    let mut stats = WorkerStats::default();
    let mut actor = shared.actor_network()?;
    let mut critic = shared.critic_network()?;
    let (mut target_actor, mut target_critic) = shared.target_networks()?;
    let mut states: Vec<Vec<f32>> = Vec::with_capacity(hp.n_step);
    let mut actions: Vec<[f32; 2]> = Vec::with_capacity(hp.n_step);
    let mut rewards: Vec<f64> = Vec::with_capacity(hp.n_step);

    let mut update = |states: &mut Vec<Vec<f32>>,
                      actions: &mut Vec<[f32; 2]>,
                      rewards: &mut Vec<f64>,
                      next: Option<&[f32]>,
                      actor: &mut Network<f32>,
                      critic: &mut Network<f32>|
     -> Result<()> {
        let bootstrap = match next {
            None => 0.0,
            Some(x2) => {
                shared.target_actor.snapshot_into(target_actor.params_mut())?;
                shared.target_critic.snapshot_into(target_critic.params_mut())?;
                let y = bootstrap_targets(&target_actor, &target_critic, &[0.0], &Tensor::row(x2.to_vec()), &[false], 1.0)?;
                y[0] as f64
            }
        };
        let returns: Vec<f32> = nstep_returns(rewards, bootstrap, hp.gamma)
            .into_iter()
            .map(|r| r as f32)
            .collect();
        let s = stack(&states.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        let a = stack(&actions.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?;
        let grads = learner_gradients(actor, critic, &s, &a, &returns, Reduction::Sum)?;
        shared.critic_opt.step(&shared.critic, &grads.critic)?;
        shared.actor_opt.step(&shared.actor, &grads.actor)?;
        shared.target_critic.soft_update_from(&shared.critic, hp.tau as f32);
        shared.target_actor.soft_update_from(&shared.actor, hp.tau as f32);
        shared.regions.fetch_add(1, Ordering::Relaxed);
        shared.actor.snapshot_into(actor.params_mut())?;
        shared.critic.snapshot_into(critic.params_mut())?;
        states.clear();
        actions.clear();
        rewards.clear();
        Ok(())
    };

    'outer: while !budget.exhausted() {
        let obs = env.reset()?;
        noise.reset();
        let mut x = encoder.encode(&obs)?;
        let mut ret = 0.0;
        for t in 1..=hp.max_episode_steps {
            let Some(step) = budget.claim() else {
                if !rewards.is_empty() {
                    let last = x.clone();
                    update(&mut states, &mut actions, &mut rewards, Some(&last), &mut actor, &mut critic)?;
                    stats.regions += 1;
                }
                break 'outer;
            };
            stats.steps += 1;
            let mu = policy(&actor, &x)?;
            let a = add_noise(mu, hp.exploration.epsilon(step, hp.total_steps), &mut noise, &mut rng);
            let out = env.step(a)?;
            ret += out.reward as f64;
            let x2 = encoder.encode(&out.observation)?;
            let end = out.done || t == hp.max_episode_steps;
            states.push(std::mem::take(&mut x));
            actions.push(a);
            rewards.push(out.reward as f64);
            if rewards.len() == hp.n_step || end {
                let next = (!out.success).then_some(x2.as_slice());
                update(&mut states, &mut actions, &mut rewards, next, &mut actor, &mut critic)?;
                stats.regions += 1;
            }
            if end {
                stats.episodes += 1;
                if let Some(m) = metrics {
                    m.record(worker, budget.counter(), t, out.success, ret);
                }
                break;
            }
            x = x2;
        }
    }
    Ok(stats)
}

/// Runs `hp.workers` asynchronous workers on scoped threads.
pub fn train_async<E, F>(setup: &TrainSetup<'_>, make_env: F) -> Result<TrainOutcome>
where
    E: Environment,
    F: Fn(usize) -> E + Sync,
{
    let hp = setup.hp;
    hp.validate()?;
    let start = Instant::now();
    let shared = AsyncShared::new(setup.encoder.input_shape(), &hp, setup.seed)?;
    let budget = StepBudget::new(hp.total_steps, setup.time_limit);
    let results: Vec<Result<WorkerStats>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..hp.workers)
            .map(|w| {
                let (shared, budget, make_env) = (&shared, &budget, &make_env);
                scope.spawn(move || {
                    let mut env = make_env(w);
                    async_worker(shared, &mut env, setup.encoder, &hp, budget, w, setup.seed, setup.metrics)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(AgentError::WorkerPanic)))
            .collect()
    });
    let mut episodes = 0;
    for r in results {
        episodes += r?.episodes;
    }
    Ok(TrainOutcome {
        actor: shared.actor_network()?,
        critic: shared.critic_network()?,
        steps: budget.taken(),
        counter: budget.counter(),
        episodes,
        updates: shared.regions(),
        elapsed: start.elapsed(),
    })
}
