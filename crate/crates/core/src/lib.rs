//! Reinforcement-learning workbench around a kinematic 2-DOF reacher.
//!
//! * [`env`] / [`render`]: the arm simulation, shaped reward and 64×64 frames.
//! * [`nn`]: a small dense/conv network engine with analytic gradients and Adam.
//! * [`replay`]: ring-buffer experience replay and the `RLRB1` dataset format.
//! * [`agents`]: DDPG baseline, distributed DDPG (locked 5-step updates) and
//!   asynchronous DDPG (lock-free n-step updates).
//! * [`tabular`]: SARSA, Q-learning and Q(λ) on a gridworld.
//! * [`pretrain`]: inverse model and the pixel state extractors.
//! * [`server`]: TCP simulation service and client.
//! * [`harness`]: run configuration, evaluation reports, metrics and plots.

pub mod agents;
pub mod env;
pub mod harness;
pub mod nn;
pub mod pretrain;
pub mod render;
pub mod replay;
pub mod server;
pub mod tabular;
