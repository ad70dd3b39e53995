//! Reinforcement learning: dual-mode observations, reward, GAE, the clipped
//! PPO update and the training loop.

pub mod env;
pub mod gae;
pub mod obs;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod train;

pub use env::{action_to_velocity, Env, FormationEnv, PointMassEnv, StepOutcome};
pub use gae::{compute_advantages, normalize_advantages};
pub use obs::{assemble_observation, ObsBatch, Observation, ACTION_DIM, NEIGHBOR_DIM, NORMAL_DIM};
pub use policy::{Act, Policy, PolicyArch};
pub use ppo::{ppo_update, PpoConfig, Sample, UpdateStats};
pub use reward::compute_reward;
pub use train::{evaluate_policy, train, CurvePoint, TrainOptions, TrainReport};
