use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;
use crate::nn::Tensor;

use super::{
    add_noise, bootstrap_targets, derive_seed, learner_gradients, policy, stack, ActorCritic, AgentError,
    HyperParams, MetricsLog, OuNoise, Reduction, Result, StateEncoder, StepBudget, TrainOutcome, TrainSetup,
};

#[derive(Debug)]
struct LearnerState {
    ac: ActorCritic,
    regions: u64,
}

/// Learner whose every read and write happens under one mutex.
#[derive(Debug)]
pub struct SharedLearner {
    inner: Mutex<LearnerState>,
}

impl SharedLearner {
    pub fn new(ac: ActorCritic) -> Self {
        Self {
            inner: Mutex::new(LearnerState { ac, regions: 0 }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, LearnerState> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Update regions completed so far.
    pub fn regions(&self) -> u64 {
        self.lock().regions
    }

    pub fn snapshot(&self) -> ActorCritic {
        self.lock().ac.clone()
    }

    pub fn into_inner(self) -> ActorCritic {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner()).ac
    }
}

/// Counters of one worker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub steps: u64,
    pub episodes: u64,
    pub regions: u64,
}

struct Pending {
    states: Vec<Vec<f32>>,
    actions: Vec<[f32; 2]>,
    targets: Vec<f32>,
}

impl Pending {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.targets.clear();
    }
}

/// Summed gradients over the buffered `(s, a, R)` entries, applied together
/// with the target soft update.
fn update_region(learner: &mut LearnerState, buf: &Pending, tau: f64) -> Result<()> {
    let states = stack(&buf.states.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    let actions = stack(&buf.actions.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?;
    let grads = learner_gradients(
        &learner.ac.actor,
        &learner.ac.critic,
        &states,
        &actions,
        &buf.targets,
        Reduction::Sum,
    )?;
    learner.ac.apply(&grads, tau)?;
    learner.regions += 1;
    Ok(())
}

/// One worker of distributed DDPG. One-step targets are computed from the
/// shared target networks when a transition is collected; after every
/// `n_step` transitions or at the end of an episode the buffer is turned
/// into a single locked update.
#[allow(clippy::too_many_arguments)]
pub fn distributed_worker<E: Environment + ?Sized>(
    shared: &SharedLearner,
    env: &mut E,
    encoder: &dyn StateEncoder,
    hp: &HyperParams,
    budget: &StepBudget,
    worker: usize,
    seed: u64,
    metrics: Option<&MetricsLog>,
) -> Result<WorkerStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + worker as u64));
    let mut noise = OuNoise::from_exploration(&hp.exploration);
    let mut stats = WorkerStats::default();
    let mut buf = Pending {
        states: Vec::with_capacity(hp.n_step),
        actions: Vec::with_capacity(hp.n_step),
        targets: Vec::with_capacity(hp.n_step),
    };

    'outer: while !budget.exhausted() {
        let obs = env.reset()?;
        noise.reset();
        let mut x = encoder.encode(&obs)?;
        let mut ret = 0.0;
        for t in 1..=hp.max_episode_steps {
            let Some(step) = budget.claim() else {
                break 'outer;
            };
            stats.steps += 1;
            let mu = policy(&shared.lock().ac.actor, &x)?;
            let a = add_noise(mu, hp.exploration.epsilon(step, hp.total_steps), &mut noise, &mut rng);
            let out = env.step(a)?;
            ret += out.reward as f64;
            let x2 = encoder.encode(&out.observation)?;
            let end = out.done || t == hp.max_episode_steps;
            {
                let mut learner = shared.lock();
                let target = if out.success {
                    out.reward
                } else {
                    let s2 = Tensor::row(x2.clone());
                    bootstrap_targets(
                        &learner.ac.target_actor,
                        &learner.ac.target_critic,
                        &[out.reward],
                        &s2,
                        &[false],
                        hp.gamma,
                    )?[0]
                };
                buf.states.push(std::mem::take(&mut x));
                buf.actions.push(a);
                buf.targets.push(target);
                if buf.len() == hp.n_step || end {
                    update_region(&mut learner, &buf, hp.tau)?;
                    stats.regions += 1;
                    buf.clear();
                }
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
    if buf.len() > 0 {
        update_region(&mut shared.lock(), &buf, hp.tau)?;
        stats.regions += 1;
    }
    Ok(stats)
}

/// Runs `hp.workers` distributed workers on scoped threads.
pub fn train_distributed<E, F>(setup: &TrainSetup<'_>, make_env: F) -> Result<TrainOutcome>
where
    E: Environment,
    F: Fn(usize) -> E + Sync,
{
    let hp = setup.hp;
    hp.validate()?;
    let start = Instant::now();
    let shared = SharedLearner::new(ActorCritic::new(setup.encoder.input_shape(), &hp, setup.seed)?);
    let budget = StepBudget::new(hp.total_steps, setup.time_limit);
    let results: Vec<Result<WorkerStats>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..hp.workers)
            .map(|w| {
                let (shared, budget, make_env) = (&shared, &budget, &make_env);
                scope.spawn(move || {
                    let mut env = make_env(w);
                    distributed_worker(shared, &mut env, setup.encoder, &hp, budget, w, setup.seed, setup.metrics)
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
    let updates = shared.regions();
    let ac = shared.into_inner();
    Ok(TrainOutcome {
        actor: ac.actor,
        critic: ac.critic,
        steps: budget.taken(),
        counter: budget.counter(),
        episodes,
        updates,
        elapsed: start.elapsed(),
    })
}
