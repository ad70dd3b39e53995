//! Scenario description and the per-step control logic shared by training
//! environments and evaluation missions.

use std::fmt;
use std::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::comm::{comm_view, CommConfig, CommView};
use crate::control::{
    angle_follower, displacement_follower, distance_follower, leader_track, signed_plane_angle,
    DistanceTarget, FormationSpec, Gains, Reference,
};
use crate::sim::{
    ActuationCommand, PhysicsParams, SpawnRegion, SpawnSphere, Trajectory, TrajectoryKind, WorldState,
};
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Where a leader trajectory is placed in the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryAnchor {
    /// The shape starts at a point drawn per episode from `start`.
    Start,
    /// The shape is centred on `offset`.
    Fixed,
}

/// Shape parameters for every trajectory in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub anchor: TrajectoryAnchor,
    /// Distribution of the reference's initial point `p*_1(0)`
    /// (`anchor = "start"`).
    pub start: SpawnSphere,
    /// World position the shapes are centred on (`anchor = "fixed"`).
    pub offset: Vec3,
    /// Angular rate of the periodic shapes (rad/s).
    pub rate: f64,
    pub circle_radius: f64,
    pub line_length: f64,
    pub square_side: f64,
    /// Traversal speed of the piecewise-linear shapes (m/s).
    pub path_speed: f64,
    pub figure_eight_amplitude: f64,
    pub lemniscate_amplitude: f64,
    /// Randomise the start phase of training episodes.
    pub random_phase: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            anchor: TrajectoryAnchor::Start,
            start: SpawnSphere {
                center: Vec3::new(0.0, 0.0, 4.0),
                radius: 0.5,
            },
            offset: Vec3::new(0.0, 1.0, 2.0),
            rate: 0.25,
            circle_radius: 2.0,
            line_length: 4.0,
            square_side: 3.0,
            path_speed: 0.5,
            figure_eight_amplitude: 1.2,
            lemniscate_amplitude: 1.2,
            random_phase: true,
        }
    }
}

impl TrajectoryConfig {
    pub fn circle(&self) -> TrajectoryKind {
        TrajectoryKind::Circle {
            radius: self.circle_radius,
            rate: self.rate,
        }
    }

    pub fn line_x(&self) -> TrajectoryKind {
        TrajectoryKind::StraightLineX {
            length: self.line_length,
            speed: self.path_speed,
        }
    }

    pub fn line_z(&self) -> TrajectoryKind {
        TrajectoryKind::StraightLineZ {
            length: self.line_length,
            speed: self.path_speed,
        }
    }

    pub fn square(&self) -> TrajectoryKind {
        TrajectoryKind::Square {
            side: self.square_side,
            speed: self.path_speed,
        }
    }

    pub fn figure_eight(&self) -> TrajectoryKind {
        TrajectoryKind::FigureEight {
            amplitude: self.figure_eight_amplitude,
            rate: self.rate,
        }
    }

    pub fn lemniscate(&self) -> TrajectoryKind {
        TrajectoryKind::Lemniscate3D {
            amplitude: self.lemniscate_amplitude,
            rate: self.rate,
        }
    }

    /// The training pool (the lemniscate is held out for evaluation).
    pub fn pool(&self) -> [TrajectoryKind; 5] {
        [
            self.circle(),
            self.line_x(),
            self.line_z(),
            self.square(),
            self.figure_eight(),
        ]
    }

    /// Longest period among the pool shapes, used to draw start phases.
    pub fn phase_span(&self, kind: &TrajectoryKind) -> f64 {
        use std::f64::consts::PI;
        match *kind {
            TrajectoryKind::Circle { rate, .. } | TrajectoryKind::Lemniscate3D { rate, .. } => {
                2.0 * PI / rate
            }
            TrajectoryKind::FigureEight { rate, .. } => 4.0 * PI / rate,
            TrajectoryKind::StraightLineX { length, speed }
            | TrajectoryKind::StraightLineZ { length, speed } => 2.0 * length / speed,
            TrajectoryKind::Square { side, speed } => 4.0 * side / speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.center.is_finite() && self.start.radius.is_finite() && self.start.radius >= 0.0) {
            return Err(Error::config("trajectory.start", "needs a finite centre and radius >= 0"));
        }
        if !self.offset.is_finite() {
            return Err(Error::config("trajectory.offset", "must be finite"));
        }
        for k in self.pool().iter().chain([&self.lemniscate()]) {
            k.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub physics: PhysicsParams,
    pub comm: CommConfig,
    pub gains: Gains,
    /// Adds the broadcast leader acceleration `p̈_1` to the displacement
    /// follower law while the leader link is alive (dropped under DoS like
    /// the rest of the broadcast). `false` gives the `p̈_1 ≈ 0` form.
    pub leader_feedforward: bool,
    /// `p*_1i` for followers 1..N, in order.
    pub formation: Vec<Vec3>,
    pub collision_threshold: f64,
    /// Episode length in steps.
    pub t_max: usize,
    pub spawn: SpawnRegion,
    pub trajectory: TrajectoryConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 7,
            physics: PhysicsParams::default(),
            comm: CommConfig::default(),
            gains: Gains::default(),
            leader_feedforward: true,
            formation: crate::control::default_offsets(),
            collision_threshold: 0.15,
            t_max: 1000,
            spawn: SpawnRegion::default(),
            trajectory: TrajectoryConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::config("n_agents", "need at least a leader and one follower"));
        }
        if self.formation.len() != self.n_agents - 1 {
            return Err(Error::config(
                "formation",
                format!("{} offsets for {} followers", self.formation.len(), self.n_agents - 1),
            ));
        }
        let p = &self.physics;
        for (name, v) in [
            ("physics.mass", p.mass),
            ("physics.dt", p.dt),
            ("physics.k_track", p.k_track),
            ("physics.v_max", p.v_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(p.gravity.is_finite() && p.gravity >= 0.0) {
            return Err(Error::config("physics.gravity", "must be >= 0"));
        }
        if !(self.collision_threshold.is_finite() && self.collision_threshold > 0.0) {
            return Err(Error::config("collision_threshold", "must be > 0"));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be > 0"));
        }
        self.comm.validate()?;
        if let Some(&bad) = self.comm.attacked_ids.iter().find(|&&i| i >= self.n_agents) {
            return Err(Error::config("attacked_ids", format!("agent {bad} does not exist")));
        }
        self.gains.validate()?;
        let s = &self.spawn;
        if ![s.leader.base, s.leader.scale, s.follower.base, s.follower.scale]
            .iter()
            .all(Vec3::is_finite)
        {
            return Err(Error::config("spawn", "must be finite"));
        }
        self.trajectory.validate()
    }

    pub fn formation_spec(&self) -> FormationSpec {
        FormationSpec::new(&self.formation)
    }

    /// The agent whose metrics are reported and which the learned policy
    /// drives: the lowest attackable follower, or follower 1.
    pub fn agent_a(&self) -> usize {
        self.comm.attacked_ids.iter().next().copied().unwrap_or(1)
    }

    /// Desired position of agent `i` at time `t`: `p*_1(t) + p*_1i`.
    pub fn desired_position(&self, traj: &Trajectory, spec: &FormationSpec, i: usize, t: f64) -> Vec3 {
        traj.position(t) + spec.offset(i)
    }
}

/// Rows of Table II: a leader trajectory plus whether DoS gating is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mission {
    CircleNoAttack,
    Circle,
    ZDirection,
    XDirection,
    Square,
    FigureEight,
    Lemniscate,
}

impl Mission {
    pub const ALL: [Mission; 7] = [
        Mission::CircleNoAttack,
        Mission::Circle,
        Mission::ZDirection,
        Mission::XDirection,
        Mission::Square,
        Mission::FigureEight,
        Mission::Lemniscate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mission::CircleNoAttack => "CircleNoAttack",
            Mission::Circle => "Circle",
            Mission::ZDirection => "Z-direction",
            Mission::XDirection => "X-direction",
            Mission::Square => "Square",
            Mission::FigureEight => "Figure-eight",
            Mission::Lemniscate => "Lemniscate",
        }
    }

    pub fn under_attack(self) -> bool {
        self != Mission::CircleNoAttack
    }

    pub fn trajectory_kind(self, cfg: &TrajectoryConfig) -> TrajectoryKind {
        match self {
            Mission::CircleNoAttack | Mission::Circle => cfg.circle(),
            Mission::ZDirection => cfg.line_z(),
            Mission::XDirection => cfg.line_x(),
            Mission::Square => cfg.square(),
            Mission::FigureEight => cfg.figure_eight(),
            Mission::Lemniscate => cfg.lemniscate(),
        }
    }
}

impl fmt::Display for Mission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mission {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Mission::ALL
            .into_iter()
            .find(|m| {
                m.name()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .eq_ignore_ascii_case(&key)
            })
            .ok_or_else(|| Error::UnknownMission(s.to_string()))
    }
}

/// Follower control law used for every non-learned follower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FollowerLaw {
    Distance,
    Displacement,
    Angle,
}

impl FollowerLaw {
    pub fn name(self) -> &'static str {
        match self {
            FollowerLaw::Distance => "Distance",
            FollowerLaw::Displacement => "Displacement",
            FollowerLaw::Angle => "Angle",
        }
    }
}

/// Per-episode runtime context.
#[derive(Debug, Clone)]
pub struct Episode {
    pub cfg: ScenarioConfig,
    pub comm: CommConfig,
    pub spec: FormationSpec,
    pub trajectory: Trajectory,
}

impl Episode {
    /// With `attack == false` no follower is ever jammed.
    pub fn new(cfg: &ScenarioConfig, kind: TrajectoryKind, phase: f64, attack: bool) -> Self {
        let mut comm = cfg.comm.clone();
        if !attack {
            comm.attacked_ids.clear();
        }
        Self {
            cfg: cfg.clone(),
            comm,
            spec: cfg.formation_spec(),
            trajectory: Trajectory::new(kind, cfg.trajectory.offset, cfg.physics.up_axis)
                .with_phase(phase),
        }
    }

    /// Places the reference according to the configured anchor; with
    /// `start` the initial point is drawn from `rng` (at least three draws).
    pub fn place(&mut self, rng: &mut crate::rng::Rng) {
        if self.cfg.trajectory.anchor == TrajectoryAnchor::Start {
            let p0 = self.cfg.trajectory.start.sample(|| rng.random::<f64>());
            self.trajectory = self.trajectory.anchored_at(p0);
        }
    }

    pub fn views(&self, world: &WorldState) -> Vec<CommView> {
        (0..world.len()).map(|i| comm_view(world, i, &self.comm)).collect()
    }

    pub fn leader_command(&self, world: &WorldState) -> ActuationCommand {
        let t = world.time;
        let r = Reference {
            pos: self.trajectory.position(t),
            vel: self.trajectory.velocity(t),
            acc: self.trajectory.acceleration(t),
        };
        leader_track(world.leader(), &r, self.cfg.physics.gravity_vec(), &self.cfg.gains)
    }

    /// `p̈_1` commanded by the leader law at the current state.
    pub fn leader_acceleration(&self, world: &WorldState) -> Vec3 {
        match self.leader_command(world) {
            ActuationCommand::Thrust(f) => f * (1.0 / world.leader().mass) - self.cfg.physics.gravity_vec(),
            ActuationCommand::VelocityCmd(_) => Vec3::ZERO,
        }
    }

    pub fn follower_command(
        &self,
        world: &WorldState,
        i: usize,
        view: &CommView,
        law: FollowerLaw,
    ) -> ActuationCommand {
        let state = &world.drones[i];
        let g_vec = self.cfg.physics.gravity_vec();
        let gains = &self.cfg.gains;
        match law {
            FollowerLaw::Displacement => {
                let cmd = displacement_follower(
                    state,
                    view.rel_to_leader,
                    view.leader_velocity,
                    self.spec.offset(i),
                    g_vec,
                    gains,
                );
                match cmd {
                    ActuationCommand::Thrust(f) if self.cfg.leader_feedforward && view.leader_link_alive => {
                        ActuationCommand::Thrust(f + self.leader_acceleration(world) * state.mass)
                    }
                    other => other,
                }
            }
            FollowerLaw::Distance => {
                // leader via the broadcast link (zeroed under DoS, then skipped
                // as coincident), plus in-range followers
                let mut targets = vec![DistanceTarget {
                    to_neighbor: -view.rel_to_leader,
                    desired_distance: self.spec.desired_distance(i, 0),
                }];
                targets.extend(view.neighbors.iter().filter(|n| n.id != 0).map(|n| {
                    DistanceTarget {
                        to_neighbor: -n.rel_pos,
                        desired_distance: self.spec.desired_distance(i, n.id),
                    }
                }));
                distance_follower(state, &targets, g_vec, gains)
            }
            FollowerLaw::Angle => {
                let up = self.cfg.physics.up_axis.unit();
                let to_leader = -view.rel_to_leader;
                match view.neighbors.iter().find(|n| n.id != 0) {
                    Some(k) => {
                        let theta_star = signed_plane_angle(
                            self.spec.offset(0) - self.spec.offset(i),
                            self.spec.offset(k.id) - self.spec.offset(i),
                            up,
                        )
                        .unwrap_or(0.0);
                        angle_follower(state, to_leader, -k.rel_pos, theta_star, up, g_vec, gains)
                    }
                    None => ActuationCommand::Thrust((g_vec - state.velocity * gains.k_v) * state.mass),
                }
            }
        }
    }

    /// Formation error vector used by the reward: `p_i − p_1 − p*_1i`.
    pub fn relative_error(&self, world: &WorldState, i: usize) -> Vec3 {
        world.drones[i].position - world.leader().position - self.spec.offset(i)
    }

    /// Tracking error used by the metrics: `p_i(t) − (p*_1(t) + p*_1i)`.
    pub fn tracking_error(&self, world: &WorldState, i: usize) -> Vec3 {
        world.drones[i].position - self.desired_position(i, world.time)
    }

    pub fn desired_position(&self, i: usize, t: f64) -> Vec3 {
        self.cfg.desired_position(&self.trajectory, &self.spec, i, t)
    }

    /// Commands for every drone: the leader tracks the reference, follower
    /// `i` uses `laws(i)`; `None` leaves the slot to the caller (filled with
    /// hover thrust here).
    pub fn classical_commands(
        &self,
        world: &WorldState,
        views: &[CommView],
        law: impl Fn(usize) -> Option<FollowerLaw>,
    ) -> Vec<ActuationCommand> {
        (0..world.len())
            .map(|i| {
                if i == 0 {
                    self.leader_command(world)
                } else if let Some(l) = law(i) {
                    self.follower_command(world, i, &views[i], l)
                } else {
                    ActuationCommand::Thrust(self.cfg.physics.gravity_vec() * world.drones[i].mass)
                }
            })
            .collect()
    }
}

/// Spawns a fresh world for `cfg` with the given RNG.
pub fn spawn(cfg: &ScenarioConfig, rng: &mut crate::rng::Rng) -> WorldState {
    cfg.spawn.spawn(cfg.n_agents, cfg.physics.mass, rng)
}
