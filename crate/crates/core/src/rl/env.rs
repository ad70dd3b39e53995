//! Training environments.

use rand::RngExt;

use super::obs::{assemble_observation, Observation, ACTION_DIM};
use super::reward::compute_reward;
use crate::rng::Rng;
use crate::scenario::{spawn, Episode, FollowerLaw, ScenarioConfig};
use crate::sim::{ActuationCommand, DroneState, PhysicsParams, SpawnBox, WorldState};
use crate::vec3::Vec3;

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// The episode is over; call [`Env::reset`] before stepping again.
    pub done: bool,
    /// Tracking-error norm of the controlled agent after the step (m).
    pub error: f64,
    pub collided: bool,
}

/// Single-agent environment driven by one policy action per step.
pub trait Env: Send {
    fn reset(&mut self, rng: &mut Rng);
    fn observe(&self) -> Observation;
    fn step(&mut self, action: [f64; ACTION_DIM]) -> StepOutcome;
}

/// Maps a raw policy action to the applied velocity command: each component
/// clamped to `[−1, 1]` and scaled by `v_max`.
pub fn action_to_velocity(action: [f64; ACTION_DIM], v_max: f64) -> Vec3 {
    Vec3(action).clamp_each(-1.0, 1.0) * v_max
}

/// The formation scenario of the training loop: the leader and all other
/// followers run classical laws, agent `a` is driven by the policy and its
/// leader link is subject to DoS.
pub struct FormationEnv {
    cfg: ScenarioConfig,
    agent: usize,
    law: FollowerLaw,
    /// Restrict episodes to this trajectory instead of sampling the pool.
    fixed: Option<(crate::sim::TrajectoryKind, f64)>,
    attack: bool,
    /// Reward weights `(λ1, λ2)`.
    lambdas: (f64, f64),
    episode: Episode,
    world: WorldState,
    t: usize,
}

impl FormationEnv {
    pub fn new(cfg: ScenarioConfig, lambda1: f64, lambda2: f64) -> Self {
        let episode = Episode::new(&cfg, cfg.trajectory.circle(), 0.0, true);
        let world = WorldState::new(vec![DroneState::at_rest(Vec3::ZERO, cfg.physics.mass); cfg.n_agents]);
        Self {
            agent: cfg.agent_a(),
            law: FollowerLaw::Displacement,
            fixed: None,
            attack: true,
            lambdas: (lambda1, lambda2),
            episode,
            world,
            t: 0,
            cfg,
        }
    }

    /// Always use `kind` at `phase` (evaluation of one mission).
    pub fn with_trajectory(mut self, kind: crate::sim::TrajectoryKind, phase: f64, attack: bool) -> Self {
        self.fixed = Some((kind, phase));
        self.attack = attack;
        self
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn agent(&self) -> usize {
        self.agent
    }
}

impl Env for FormationEnv {
    fn reset(&mut self, rng: &mut Rng) {
        let (kind, phase) = match self.fixed {
            Some(x) => x,
            None => {
                let pool = self.cfg.trajectory.pool();
                let kind = pool[rng.random_range(0..pool.len())];
                let phase = if self.cfg.trajectory.random_phase {
                    rng.random::<f64>() * self.cfg.trajectory.phase_span(&kind)
                } else {
                    0.0
                };
                (kind, phase)
            }
        };
        self.episode = Episode::new(&self.cfg, kind, phase, self.attack);
        self.world = spawn(&self.cfg, rng);
        self.episode.place(rng);
        self.t = 0;
    }

    fn observe(&self) -> Observation {
        let view = crate::comm::comm_view(&self.world, self.agent, &self.episode.comm);
        assemble_observation(&self.world.drones[self.agent], &view, self.cfg.comm.n_max)
    }

    fn step(&mut self, action: [f64; ACTION_DIM]) -> StepOutcome {
        let a = self.agent;
        let views = self.episode.views(&self.world);
        let law = self.law;
        let mut cmds = self
            .episode
            .classical_commands(&self.world, &views, |i| (i != a).then_some(law));
        let u = action_to_velocity(action, self.cfg.physics.v_max);
        cmds[a] = ActuationCommand::VelocityCmd(u);
        if let Err(e) = self
            .world
            .step(&cmds, &self.cfg.physics, self.cfg.collision_threshold)
        {
            log::warn!("episode aborted at step {}: {e}", self.t);
            return StepOutcome {
                reward: 0.0,
                done: true,
                error: f64::NAN,
                collided: false,
            };
        }
        self.t += 1;
        let collided = self.world.collision_flags[a];
        let e = self.episode.relative_error(&self.world, a);
        let (l1, l2) = self.lambdas;
        StepOutcome {
            reward: compute_reward(e, u, collided, l1, l2, self.cfg.t_max),
            done: self.t >= self.cfg.t_max,
            error: self.episode.tracking_error(&self.world, a).norm(),
            collided,
        }
    }
}

/// One point mass steered to the origin; reward `−‖p‖²/T_max`. Used as the
/// PPO sanity task.
pub struct PointMassEnv {
    physics: PhysicsParams,
    spawn: SpawnBox,
    t_max: usize,
    n_max: usize,
    state: DroneState,
    t: usize,
}

impl PointMassEnv {
    pub fn new(t_max: usize, n_max: usize) -> Self {
        Self {
            physics: PhysicsParams::default(),
            spawn: SpawnBox {
                base: Vec3::new(-1.5, -1.5, -1.5),
                scale: Vec3::new(3.0, 3.0, 3.0),
            },
            t_max,
            n_max,
            state: DroneState::at_rest(Vec3::ZERO, 1.0),
            t: 0,
        }
    }
}

impl Env for PointMassEnv {
    fn reset(&mut self, rng: &mut Rng) {
        self.state = DroneState::at_rest(self.spawn.sample(|| rng.random::<f64>()), self.physics.mass);
        self.t = 0;
    }

    fn observe(&self) -> Observation {
        Observation::leader_mode(self.state.velocity, self.state.position, self.n_max)
    }

    fn step(&mut self, action: [f64; ACTION_DIM]) -> StepOutcome {
        let u = action_to_velocity(action, self.physics.v_max);
        self.state = crate::sim::step_dynamics(
            &self.state,
            &ActuationCommand::VelocityCmd(u),
            &self.physics,
            self.physics.dt,
        );
        self.t += 1;
        let e = self.state.position;
        StepOutcome {
            reward: -e.norm_squared() / self.t_max as f64,
            done: self.t >= self.t_max,
            error: e.norm(),
            collided: false,
        }
    }
}
