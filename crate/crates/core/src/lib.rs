//! Multi-drone leader–follower formation control under denial-of-service
//! attacks.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: point-mass drone dynamics, reference trajectories, spawning and
//!   collision flags.
//! - [`comm`]: range-limited neighbour discovery, the DoS gate on the leader
//!   link and graph matrices (adjacency, degree, Laplacian).
//! - [`control`]: the leader tracker and the classical displacement-,
//!   distance- and angle-based follower laws.
//! - [`scenario`]: scenario configuration, missions and the per-step
//!   command logic shared by training and evaluation.
//! - [`nn`]: a small reverse-mode tensor engine, the graph attention encoder,
//!   MLPs, Adam and checkpoint files.
//! - [`rl`]: dual-mode observations, reward, GAE, the clipped PPO update and
//!   the training loop.
//! - [`eval`]: formation error / collision rate metrics, missions and the
//!   comparison table.
//! - [`config`]: the versioned run configuration.
//! - [`artifact`]: CSV output with a provenance header.
//!
//! Data-parallel loops (environment rollouts, evaluation episodes, row-wise
//! matrix products) go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and plain iterators otherwise.

pub mod artifact;
pub mod comm;
pub mod config;
pub mod control;
pub mod error;
pub mod eval;
pub mod nn;
pub mod par;
pub mod rl;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
