//! Kinematic two-segment planar reacher.
//!
//! The arm base sits at the origin. `theta1` is the absolute angle of the
//! first segment, `theta2` the angle of the second segment relative to the
//! first. Each step rotates every joint by at most two degrees; the episode
//! succeeds once the gripper comes within [`SUCCESS_DISTANCE`] of the target
//! and fails after [`MAX_STEPS`] steps.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use crate::render::{render, NoiseConfig, PixelFrame, FRAME_PIXELS, FRAME_SIZE};

/// Length of the upper segment (base to elbow).
pub const L1: f64 = 0.5;
/// Length of the forearm (elbow to gripper).
pub const L2: f64 = 0.5;
/// Episode step limit.
pub const MAX_STEPS: u32 = 1000;
/// Gripper-target distance below which an episode is solved.
pub const SUCCESS_DISTANCE: f64 = 0.1;
/// Joint rotation for a unit action component: two degrees.
pub const STEP_ANGLE: f64 = PI / 90.0;
/// Upper bound of the gripper displacement in a single step, used to
/// normalise the reward.
pub const R_MAX: f64 = STEP_ANGLE * (L1 + L2) + STEP_ANGLE * L2;

/// Target sampling annulus.
pub const TARGET_RADIUS_MIN: f64 = 0.2;
pub const TARGET_RADIUS_MAX: f64 = 0.95;
/// Minimal initial gripper-target distance enforced by [`reset`].
pub const MIN_START_DISTANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode already finished (step {step_count}); call reset first")]
    EpisodeFinished { step_count: u32 },
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("remote environment: {0}")]
    Remote(String),
}

pub type Point = (f64, f64);

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherState {
    pub theta1: f64,
    pub theta2: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub step_count: u32,
}

impl ReacherState {
    pub fn new(theta1: f64, theta2: f64, target: Point) -> Self {
        Self {
            theta1: wrap_angle(theta1),
            theta2: wrap_angle(theta2),
            target_x: target.0,
            target_y: target.1,
            step_count: 0,
        }
    }

    pub fn target(&self) -> Point {
        (self.target_x, self.target_y)
    }

    pub fn joint(&self) -> Point {
        forward_kinematics(self.theta1, self.theta2).0
    }

    pub fn gripper(&self) -> Point {
        forward_kinematics(self.theta1, self.theta2).1
    }

    /// Euclidean gripper-target distance.
    pub fn distance(&self) -> f64 {
        let (gx, gy) = self.gripper();
        (gx - self.target_x).hypot(gy - self.target_y)
    }

    /// True when stepping is no longer allowed.
    pub fn is_finished(&self) -> bool {
        self.step_count >= MAX_STEPS || self.distance() < SUCCESS_DISTANCE
    }
}

/// Two-component action, clamped to `[-1, 1]` on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub a1: f64,
    pub a2: f64,
}

impl Action {
    pub fn new(a1: f64, a2: f64) -> Self {
        Self {
            a1: a1.clamp(-1.0, 1.0),
            a2: a2.clamp(-1.0, 1.0),
        }
    }

    pub fn zero() -> Self {
        Self { a1: 0.0, a2: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.a1.is_finite() && self.a2.is_finite()
    }
}

impl From<[f32; 2]> for Action {
    fn from(a: [f32; 2]) -> Self {
        Action::new(a[0] as f64, a[1] as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: ReacherState,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// Elbow and gripper positions for the given joint angles.
pub fn forward_kinematics(theta1: f64, theta2: f64) -> (Point, Point) {
    let joint = (L1 * theta1.cos(), L1 * theta1.sin());
    let abs2 = theta1 + theta2;
    let gripper = (joint.0 + L2 * abs2.cos(), joint.1 + L2 * abs2.sin());
    (joint, gripper)
}

/// Samples a fresh episode start, deterministic in `seed`.
pub fn reset(seed: u64) -> ReacherState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let theta1 = rng.random_range(0.0..TAU);
        let theta2 = rng.random_range(0.0..TAU);
        // uniform by area: r = sqrt(U(r0², r1²))
        let r2 = rng.random_range(
            TARGET_RADIUS_MIN * TARGET_RADIUS_MIN..TARGET_RADIUS_MAX * TARGET_RADIUS_MAX,
        );
        let r = r2.sqrt();
        let phi = rng.random_range(0.0..TAU);
        let state = ReacherState::new(theta1, theta2, (r * phi.cos(), r * phi.sin()));
        if state.distance() >= MIN_START_DISTANCE {
            return state;
        }
    }
}

/// Shaped reward: `exp(-d_new) * (d_old - d_new)`, normalised by [`R_MAX`]
/// and clamped to `[-1, 1]`.
pub fn reward_fn(d_old: f64, d_new: f64) -> f64 {
    let r_dist = (-d_new).exp();
    let r_ctrl = d_old - d_new;
    (r_dist * r_ctrl / R_MAX).clamp(-1.0, 1.0)
}

/// Advances the arm by one action. Pure in `(state, action)`.
pub fn step(state: &ReacherState, action: Action) -> Result<StepOutcome, EnvError> {
    if !action.is_finite() {
        return Err(EnvError::NonFiniteAction);
    }
    if state.is_finished() {
        return Err(EnvError::EpisodeFinished {
            step_count: state.step_count,
        });
    }
    let action = Action::new(action.a1, action.a2);
    let d_old = state.distance();
    let next = ReacherState {
        theta1: wrap_angle(state.theta1 + action.a1 * STEP_ANGLE),
        theta2: wrap_angle(state.theta2 + action.a2 * STEP_ANGLE),
        target_x: state.target_x,
        target_y: state.target_y,
        step_count: state.step_count + 1,
    };
    let d_new = next.distance();
    let success = d_new < SUCCESS_DISTANCE;
    Ok(StepOutcome {
        next_state: next,
        reward: reward_fn(d_old, d_new),
        done: success || next.step_count >= MAX_STEPS,
        success,
    })
}

/// How physical states are encoded as network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// `[cos θ1, sin θ1, cos θ2, sin θ2, target_x, target_y]`
    #[default]
    SinCos,
    /// `[θ1, θ2, target_x, target_y]`
    RawAngles,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::SinCos => 6,
            FeatureMode::RawAngles => 4,
        }
    }
}

pub fn state_features(state: &ReacherState) -> [f32; 6] {
    [
        state.theta1.cos() as f32,
        state.theta1.sin() as f32,
        state.theta2.cos() as f32,
        state.theta2.sin() as f32,
        state.target_x as f32,
        state.target_y as f32,
    ]
}

pub fn encode_state(state: &ReacherState, mode: FeatureMode) -> Vec<f32> {
    match mode {
        FeatureMode::SinCos => state_features(state).to_vec(),
        FeatureMode::RawAngles => vec![
            state.theta1 as f32,
            state.theta2 as f32,
            state.target_x as f32,
            state.target_y as f32,
        ],
    }
}

/// Stateful wrapper: owns the current state and a seeded stream of episode
/// seeds, so `reset` can be called repeatedly.
#[derive(Debug, Clone)]
pub struct Reacher {
    state: ReacherState,
    episode_seeds: ChaCha8Rng,
    noise: NoiseConfig,
}

impl Reacher {
    pub fn new(seed: u64, noise: NoiseConfig) -> Self {
        let mut episode_seeds = ChaCha8Rng::seed_from_u64(seed);
        let state = reset(episode_seeds.random());
        Self {
            state,
            episode_seeds,
            noise,
        }
    }

    pub fn reset(&mut self) -> ReacherState {
        self.state = reset(self.episode_seeds.random());
        self.state
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let outcome = step(&self.state, action)?;
        self.state = outcome.next_state;
        Ok(outcome)
    }

    pub fn state(&self) -> &ReacherState {
        &self.state
    }

    pub fn set_state(&mut self, state: ReacherState) {
        self.state = state;
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn render(&self) -> PixelFrame {
        render(&self.state, &self.noise)
    }
}

/// Observation handed to agents: the six state features and, when the
/// environment renders, the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvObservation {
    pub features: [f32; 6],
    pub frame: Option<Arc<PixelFrame>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: EnvObservation,
    pub reward: f32,
    pub done: bool,
    pub success: bool,
}

/// Episodic reacher interface shared by the in-process simulator and the
/// network client.
pub trait Environment: Send {
    fn reset(&mut self) -> Result<EnvObservation, EnvError>;
    fn step(&mut self, action: [f32; 2]) -> Result<EnvStep, EnvError>;
}

/// In-process [`Environment`] around [`Reacher`].
#[derive(Debug, Clone)]
pub struct LocalReacher {
    inner: Reacher,
    pixels: bool,
}

impl LocalReacher {
    pub fn new(seed: u64, noise: NoiseConfig, pixels: bool) -> Self {
        Self {
            inner: Reacher::new(seed, noise),
            pixels,
        }
    }

    pub fn reacher(&self) -> &Reacher {
        &self.inner
    }

    pub fn observe(&self) -> EnvObservation {
        EnvObservation {
            features: state_features(self.inner.state()),
            frame: self.pixels.then(|| Arc::new(self.inner.render())),
        }
    }
}

impl Environment for LocalReacher {
    fn reset(&mut self) -> Result<EnvObservation, EnvError> {
        self.inner.reset();
        Ok(self.observe())
    }

    fn step(&mut self, action: [f32; 2]) -> Result<EnvStep, EnvError> {
        if !action.iter().all(|a| a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let out = self.inner.step(Action::from(action))?;
        Ok(EnvStep {
            observation: self.observe(),
            reward: out.reward as f32,
            done: out.done,
            success: out.success,
        })
    }
}
