use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvObservation, Environment};
use crate::nn::Shape;
use crate::replay::{Observation, ReplayBuffer, StateKind};

use super::{
    act, critic_loss_and_grads, derive_seed, stack, ActorCritic, Batch, OuNoise, Result,
    StateEncoder, StepBudget, TrainOutcome, TrainSetup,
};

/// What the replay buffer keeps per state: encoded features, or the frame
/// itself for pixel inputs (encoded again when sampled).
fn stored(encoder: &dyn StateEncoder, obs: &EnvObservation) -> Result<Observation> {
    if matches!(encoder.input_shape(), Shape::Image { .. }) {
        if let Some(f) = &obs.frame {
            return Ok(Observation::Pixels(f.clone()));
        }
    }
    Ok(Observation::Features(encoder.encode(obs)?))
}

fn network_input(encoder: &dyn StateEncoder, obs: &Observation) -> Result<Vec<f32>> {
    match obs {
        Observation::Features(v) => Ok(v.clone()),
        Observation::Pixels(p) | Observation::FeaturesAndPixels(_, p) => encoder.encode(&EnvObservation {
            features: [0.0; 6],
            frame: Some(p.clone()),
        }),
    }
}

/// DDPG with a replay buffer: one minibatch update and one soft target
/// update per environment step once the warmup is over.
pub fn train_baseline<E: Environment>(setup: &TrainSetup<'_>, mut env: E) -> Result<TrainOutcome> {
    let hp = setup.hp;
    hp.validate()?;
    let start = Instant::now();
    let encoder = setup.encoder;
    let input = encoder.input_shape();
    let mut ac = ActorCritic::new(input, &hp, setup.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(setup.seed, 3));
    let mut noise = OuNoise::from_exploration(&hp.exploration);
    let kind = match input {
        Shape::Image { .. } => StateKind::Pixels,
        Shape::Flat(dim) => StateKind::Features { dim },
    };
    let mut replay = ReplayBuffer::new(hp.replay_capacity, kind)?;
    let budget = StepBudget::new(hp.total_steps, setup.time_limit);
    let (mut episodes, mut updates) = (0u64, 0u64);

    'outer: while !budget.exhausted() {
        let obs = env.reset()?;
        noise.reset();
        let mut state = stored(encoder, &obs)?;
        let mut x = network_input(encoder, &state)?;
        let mut ret = 0.0;
        for t in 1..=hp.max_episode_steps {
            let Some(step) = budget.claim() else {
                break 'outer;
            };
            let eps = hp.exploration.epsilon(step, hp.total_steps);
            let a = act(&ac.actor, &x, eps, &mut noise, &mut rng)?;
            let out = env.step(a)?;
            ret += out.reward as f64;
            let next = stored(encoder, &out.observation)?;
            replay.push(crate::replay::Transition {
                state,
                action: a,
                reward: out.reward,
                next_state: next.clone(),
                terminal: out.success,
            })?;

            if replay.len() >= hp.warmup.max(1) {
                let batch = sample_batch(&replay, encoder, hp.batch_size, &mut rng)?;
                let grads = critic_loss_and_grads(&ac, &batch, hp.gamma)?;
                ac.apply(&grads, hp.tau)?;
                updates += 1;
            }

            if out.done || t == hp.max_episode_steps {
                episodes += 1;
                if let Some(m) = setup.metrics {
                    m.record(0, budget.taken(), t, out.success, ret);
                }
                break;
            }
            state = next;
            x = network_input(encoder, &state)?;
        }
    }
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

fn sample_batch(
    replay: &ReplayBuffer,
    encoder: &dyn StateEncoder,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let picks = replay.sample(size, rng)?;
    let mut s = Vec::with_capacity(size);
    let mut s2 = Vec::with_capacity(size);
    let mut a = Vec::with_capacity(size);
    for t in &picks {
        s.push(network_input(encoder, &t.state)?);
        s2.push(network_input(encoder, &t.next_state)?);
        a.push(t.action);
    }
    let rows = |v: &[Vec<f32>]| stack(&v.iter().map(Vec::as_slice).collect::<Vec<_>>());
    let actions: Vec<&[f32]> = a.iter().map(|x| x.as_slice()).collect();
    Ok(Batch {
        states: rows(&s)?,
        actions: stack(&actions)?,
        rewards: picks.iter().map(|t| t.reward).collect(),
        next_states: rows(&s2)?,
        terminal: picks.iter().map(|t| t.terminal).collect(),
    })
}
