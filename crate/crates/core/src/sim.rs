//! Point-mass world: drone dynamics, reference trajectories, spawning and
//! collision flags.
//!
//! Only translational dynamics are modelled, `m·p̈ = f − m·g`. Attitude is
//! assumed to be handled by an inner flight controller, so a velocity command
//! is turned into thrust by a first-order tracking loop.

use std::f64::consts::PI;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::vec3::Vec3;
use crate::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    #[default]
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::ZERO;
        v[self.index()] = 1.0;
        v
    }

    /// The two horizontal axes, in (first, second) order, for this up axis.
    pub fn horizontal(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Physical constants shared by every drone in a world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsParams {
    pub mass: f64,
    pub gravity: f64,
    pub up_axis: Axis,
    /// Inner velocity-loop gain (1/s).
    pub k_track: f64,
    /// Symmetric velocity command limit (m/s).
    pub v_max: f64,
    pub dt: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: GRAVITY,
            up_axis: Axis::Y,
            k_track: 10.0,
            v_max: 1.0,
            dt: 0.02,
        }
    }
}

impl PhysicsParams {
    pub fn gravity_vec(&self) -> Vec3 {
        self.up_axis.unit() * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
}

impl DroneState {
    pub fn at_rest(position: Vec3, mass: f64) -> Self {
        Self {
            position,
            velocity: Vec3::ZERO,
            mass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActuationCommand {
    /// World-frame thrust force (N).
    Thrust(Vec3),
    /// Desired world-frame velocity (m/s), clamped to `±v_max` when applied.
    VelocityCmd(Vec3),
}

/// Advances one drone by `dt` with semi-implicit Euler.
///
/// A velocity command is converted to `f = m(g + k_track(v_cmd − v))` first,
/// so the velocity relaxes to the command with time constant `1/k_track`.
pub fn step_dynamics(
    state: &DroneState,
    cmd: &ActuationCommand,
    physics: &PhysicsParams,
    dt: f64,
) -> DroneState {
    let g = physics.gravity_vec();
    let thrust = match *cmd {
        ActuationCommand::Thrust(f) => f,
        ActuationCommand::VelocityCmd(v) => {
            let v = v.clamp_each(-physics.v_max, physics.v_max);
            (g + (v - state.velocity) * physics.k_track) * state.mass
        }
    };
    let accel = thrust * (1.0 / state.mass) - g;
    let velocity = state.velocity + accel * dt;
    DroneState {
        position: state.position + velocity * dt,
        velocity,
        mass: state.mass,
    }
}

/// Reference trajectory shapes. Lengths in metres, rates in rad/s, speeds in
/// m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// `radius·[cos ωt, sin ωt]` in the horizontal plane.
    Circle { radius: f64, rate: f64 },
    /// Back-and-forth along world x, centred on the offset.
    StraightLineX { length: f64, speed: f64 },
    /// Back-and-forth along world z, centred on the offset.
    StraightLineZ { length: f64, speed: f64 },
    /// Closed square loop centred on the offset.
    Square { side: f64, speed: f64 },
    /// `amplitude·[sin ωt, cos(ωt/2)]` in the horizontal plane.
    FigureEight { amplitude: f64, rate: f64 },
    /// Bernoulli-style lemniscate with a vertical component.
    Lemniscate3D { amplitude: f64, rate: f64 },
}

impl TrajectoryKind {
    pub fn validate(&self) -> Result<()> {
        let params = match *self {
            TrajectoryKind::Circle { radius, rate } => [radius, rate],
            TrajectoryKind::StraightLineX { length, speed }
            | TrajectoryKind::StraightLineZ { length, speed } => [length, speed],
            TrajectoryKind::Square { side, speed } => [side, speed],
            TrajectoryKind::FigureEight { amplitude, rate }
            | TrajectoryKind::Lemniscate3D { amplitude, rate } => [amplitude, rate],
        };
        if params.iter().all(|p| p.is_finite() && *p > 0.0) {
            Ok(())
        } else {
            Err(Error::config(
                "trajectory",
                format!("parameters must be positive, got {self:?}"),
            ))
        }
    }

    /// Components in the (horizontal-1, up, horizontal-2) frame.
    fn local(&self, t: f64) -> [f64; 3] {
        match *self {
            TrajectoryKind::Circle { radius, rate } => {
                let w = rate * t;
                [radius * w.cos(), 0.0, radius * w.sin()]
            }
            TrajectoryKind::StraightLineX { length, speed } => {
                [back_and_forth(length, speed, t), 0.0, 0.0]
            }
            TrajectoryKind::StraightLineZ { length, speed } => {
                [0.0, 0.0, back_and_forth(length, speed, t)]
            }
            TrajectoryKind::Square { side, speed } => {
                let (a, b) = square_loop(side, speed, t);
                [a, 0.0, b]
            }
            TrajectoryKind::FigureEight { amplitude, rate } => {
                let w = rate * t;
                [amplitude * w.sin(), 0.0, amplitude * (w / 2.0).cos()]
            }
            TrajectoryKind::Lemniscate3D { amplitude, rate } => {
                let w = rate * t;
                let (s, c) = w.sin_cos();
                let den = 1.0 + s * s;
                [amplitude * c / den, amplitude * c, amplitude * c * s / den]
            }
        }
    }

    fn local_velocity(&self, t: f64) -> [f64; 3] {
        match *self {
            TrajectoryKind::Circle { radius, rate } => {
                let w = rate * t;
                [-radius * rate * w.sin(), 0.0, radius * rate * w.cos()]
            }
            TrajectoryKind::FigureEight { amplitude, rate } => {
                let w = rate * t;
                [
                    amplitude * rate * w.cos(),
                    0.0,
                    -0.5 * amplitude * rate * (w / 2.0).sin(),
                ]
            }
            _ => central_difference(|s| self.local(s), t, 1e-5),
        }
    }

    fn local_acceleration(&self, t: f64) -> [f64; 3] {
        match *self {
            TrajectoryKind::Circle { radius, rate } => {
                let w = rate * t;
                let k = radius * rate * rate;
                [-k * w.cos(), 0.0, -k * w.sin()]
            }
            TrajectoryKind::FigureEight { amplitude, rate } => {
                let w = rate * t;
                let k = amplitude * rate * rate;
                [-k * w.sin(), 0.0, -0.25 * k * (w / 2.0).cos()]
            }
            TrajectoryKind::Lemniscate3D { .. } => {
                central_difference(|s| self.local_velocity(s), t, 1e-4)
            }
            // Piecewise-linear paths: zero almost everywhere.
            _ => [0.0; 3],
        }
    }
}

fn central_difference(f: impl Fn(f64) -> [f64; 3], t: f64, h: f64) -> [f64; 3] {
    let lo = (t - h).max(0.0);
    let hi = t + h;
    let a = f(lo);
    let b = f(hi);
    let span = hi - lo;
    [
        (b[0] - a[0]) / span,
        (b[1] - a[1]) / span,
        (b[2] - a[2]) / span,
    ]
}

/// Triangle wave of peak-to-peak `length` starting at the centre and moving
/// in the positive direction at constant `speed`.
fn back_and_forth(length: f64, speed: f64, t: f64) -> f64 {
    let half = length / 2.0;
    let u = (speed * t).rem_euclid(2.0 * length);
    if u < half {
        u
    } else if u < half + length {
        length - u
    } else {
        u - 2.0 * length
    }
}

/// Counter-clockwise loop around a square of side `side` centred on the
/// origin, starting from the (−, −) corner.
fn square_loop(side: f64, speed: f64, t: f64) -> (f64, f64) {
    let h = side / 2.0;
    let u = (speed * t).rem_euclid(4.0 * side);
    let edge = (u / side).floor();
    let s = u - edge * side;
    match edge as u8 {
        0 => (-h + s, -h),
        1 => (h, -h + s),
        2 => (h - s, h),
        _ => (-h, h - s),
    }
}

/// A trajectory shape placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub offset: Vec3,
    pub up_axis: Axis,
    /// Time shift applied before evaluation (s).
    pub phase: f64,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, offset: Vec3, up_axis: Axis) -> Self {
        Self {
            kind,
            offset,
            up_axis,
            phase: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    /// Shifts the shape so that `position(0) == start`.
    pub fn anchored_at(mut self, start: Vec3) -> Self {
        self.offset += start - self.position(0.0);
        self
    }

    fn to_world(self, local: [f64; 3]) -> Vec3 {
        let (h1, h2) = self.up_axis.horizontal();
        let mut v = Vec3::ZERO;
        v[h1.index()] = local[0];
        v[self.up_axis.index()] = local[1];
        v[h2.index()] = local[2];
        v
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.offset + self.to_world(self.kind.local(t + self.phase))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.to_world(self.kind.local_velocity(t + self.phase))
    }

    pub fn acceleration(&self, t: f64) -> Vec3 {
        self.to_world(self.kind.local_acceleration(t + self.phase))
    }
}

/// Position of `kind` at time `t`, offset by `offset`, with y as the
/// altitude axis.
///
/// Straight lines follow their named world axis regardless of the up axis.
pub fn sample_trajectory(kind: &TrajectoryKind, offset: Vec3, t: f64) -> Vec3 {
    Trajectory::new(*kind, offset, Axis::Y).position(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    /// Index 0 is the leader.
    pub drones: Vec<DroneState>,
    pub collision_flags: Vec<bool>,
}

impl WorldState {
    pub fn new(drones: Vec<DroneState>) -> Self {
        let n = drones.len();
        Self {
            time: 0.0,
            drones,
            collision_flags: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.drones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drones.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.drones.iter().map(|d| d.position).collect()
    }

    pub fn leader(&self) -> &DroneState {
        &self.drones[0]
    }

    /// Applies one command per drone, advances time and refreshes the
    /// collision flags.
    pub fn step(
        &mut self,
        cmds: &[ActuationCommand],
        physics: &PhysicsParams,
        collision_threshold: f64,
    ) -> Result<()> {
        if cmds.len() != self.drones.len() {
            return Err(Error::Length {
                expected: self.drones.len(),
                got: cmds.len(),
            });
        }
        let dt = physics.dt;
        for (i, (d, c)) in self.drones.iter_mut().zip(cmds).enumerate() {
            let next = step_dynamics(d, c, physics, dt);
            if !(next.position.is_finite() && next.velocity.is_finite()) {
                return Err(Error::NonFinite {
                    drone: i,
                    time: self.time + dt,
                });
            }
            *d = next;
        }
        self.time += dt;
        self.collision_flags = detect_collisions(&self.positions(), collision_threshold);
        Ok(())
    }
}

/// Uniform spawn ranges: each component is `base + U·scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnBox {
    pub base: Vec3,
    pub scale: Vec3,
}

impl SpawnBox {
    pub fn sample(&self, mut draw: impl FnMut() -> f64) -> Vec3 {
        let mut p = Vec3::ZERO;
        for k in 0..3 {
            p[k] = self.base[k] + draw() * self.scale[k];
        }
        p
    }
}

/// Uniform distribution inside a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl SpawnSphere {
    /// Rejection sampling from the bounding cube, three draws per attempt.
    pub fn sample(&self, mut draw: impl FnMut() -> f64) -> Vec3 {
        loop {
            let u = Vec3::new(2.0 * draw() - 1.0, 2.0 * draw() - 1.0, 2.0 * draw() - 1.0);
            if u.norm_squared() <= 1.0 {
                return self.center + u * self.radius;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnRegion {
    pub leader: SpawnBox,
    pub follower: SpawnBox,
}

impl Default for SpawnRegion {
    fn default() -> Self {
        Self {
            leader: SpawnBox {
                base: Vec3::new(-1.2, 3.0, -0.2),
                scale: Vec3::new(2.0, -0.5, 2.2),
            },
            follower: SpawnBox {
                base: Vec3::new(-1.2, -0.5, -0.2),
                scale: Vec3::new(3.2, 2.2, 3.2),
            },
        }
    }
}

impl SpawnRegion {
    /// Builds a world at rest, drawing three uniforms per drone in
    /// (leader, follower 1, …) order.
    pub fn spawn_with(&self, n: usize, mass: f64, mut draw: impl FnMut() -> f64) -> WorldState {
        let mut drones = Vec::with_capacity(n);
        for i in 0..n {
            let region = if i == 0 { &self.leader } else { &self.follower };
            drones.push(DroneState::at_rest(region.sample(&mut draw), mass));
        }
        WorldState::new(drones)
    }

    pub fn spawn(&self, n: usize, mass: f64, rng: &mut rng::Rng) -> WorldState {
        self.spawn_with(n, mass, || rng.random::<f64>())
    }
}

/// Random spawn in the default region with a dedicated seed stream.
pub fn spawn_agents(seed: u64, n: usize) -> WorldState {
    let mut rng = rng::stream(seed, Stream::Episode(0));
    SpawnRegion::default().spawn(n, PhysicsParams::default().mass, &mut rng)
}

/// Flags every drone within `threshold` (strictly) of another drone.
pub fn detect_collisions(positions: &[Vec3], threshold: f64) -> Vec<bool> {
    let n = positions.len();
    let mut flags = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (positions[i] - positions[j]).norm() < threshold {
                flags[i] = true;
                flags[j] = true;
            }
        }
    }
    flags
}

/// Circle of the given period instead of rate.
pub fn circle_with_period(radius: f64, period: f64) -> TrajectoryKind {
    TrajectoryKind::Circle {
        radius,
        rate: 2.0 * PI / period,
    }
}

#[cfg(test)]
mod tests {

    #[test]
    fn sphere_samples_stay_inside() {
        let sphere = SpawnSphere { center: Vec3::new(0.0, 0.0, 4.0), radius: 0.5 };
        let mut rng = rng::stream(0, Stream::Episode(0));
        for _ in 0..1000 {
            let p = sphere.sample(|| rng.random::<f64>());
            assert!((p - sphere.center).norm() <= 0.5 + 1e-12);
        }
    }

    use super::*;

    fn physics() -> PhysicsParams {
        PhysicsParams::default()
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let p = physics();
        let s = DroneState::at_rest(Vec3::new(0.3, 2.0, -1.0), p.mass);
        let hover = ActuationCommand::Thrust(p.gravity_vec() * p.mass);
        let mut next = s;
        for _ in 0..1000 {
            next = step_dynamics(&next, &hover, &p, 0.02);
        }
        assert_eq!(next, s);
    }

    #[test]
    fn hover_with_non_unit_mass() {
        let p = PhysicsParams {
            mass: 0.087,
            ..physics()
        };
        let s = DroneState::at_rest(Vec3::new(1.0, 1.0, 1.0), p.mass);
        let next = step_dynamics(&s, &ActuationCommand::Thrust(p.gravity_vec() * p.mass), &p, 0.02);
        assert!((next.position - s.position).norm() < 1e-15);
        assert!(next.velocity.norm() < 1e-14);
    }

    #[test]
    fn velocity_command_converges() {
        let p = physics();
        let mut s = DroneState::at_rest(Vec3::ZERO, p.mass);
        let cmd = ActuationCommand::VelocityCmd(Vec3::new(1.0, 0.0, 0.0));
        for _ in 0..50 {
            s = step_dynamics(&s, &cmd, &p, 0.02);
        }
        assert!((s.velocity - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-3);
        // discrete first-order response: 1 − (1 − k·dt)^n
        let expected = 1.0 - (1.0 - 10.0 * 0.02f64).powi(50);
        assert!((s.velocity.x() - expected).abs() < 1e-12);
    }

    #[test]
    fn velocity_command_is_clamped() {
        let p = physics();
        let mut s = DroneState::at_rest(Vec3::ZERO, p.mass);
        let cmd = ActuationCommand::VelocityCmd(Vec3::new(5.0, -5.0, 0.5));
        for _ in 0..500 {
            s = step_dynamics(&s, &cmd, &p, 0.02);
        }
        assert!((s.velocity - Vec3::new(1.0, -1.0, 0.5)).norm() < 1e-9);
    }

    #[test]
    fn halving_dt_halves_displacement() {
        let p = physics();
        let s = DroneState {
            position: Vec3::ZERO,
            velocity: Vec3::new(0.5, -0.2, 0.1),
            mass: 1.0,
        };
        let cmd = ActuationCommand::Thrust(Vec3::new(0.3, 9.0, 0.0));
        let d1 = step_dynamics(&s, &cmd, &p, 1e-3).position.norm();
        let d2 = step_dynamics(&s, &cmd, &p, 5e-4).position.norm();
        assert!((d1 / d2 - 2.0).abs() < 1e-2);
    }

    #[test]
    fn integrator_converges_to_parabola_at_first_order() {
        let p = physics();
        let f = Vec3::new(1.0, p.gravity + 0.5, -2.0);
        let a = f - p.gravity_vec();
        let v0 = Vec3::new(0.2, 0.0, 0.3);
        let t_end = 1.0;
        let exact = v0 * t_end + a * (0.5 * t_end * t_end);
        let err = |dt: f64| {
            let mut s = DroneState {
                position: Vec3::ZERO,
                velocity: v0,
                mass: 1.0,
            };
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                s = step_dynamics(&s, &ActuationCommand::Thrust(f), &p, dt);
            }
            (s.position - exact).norm()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn trajectory_anchor_values() {
        let c = sample_trajectory(&TrajectoryKind::Circle { radius: 2.0, rate: 1.0 }, Vec3::ZERO, 0.0);
        assert_eq!([c.x(), c.z()], [2.0, 0.0]);
        let f = sample_trajectory(
            &TrajectoryKind::FigureEight { amplitude: 1.2, rate: 1.0 },
            Vec3::ZERO,
            0.0,
        );
        assert_eq!([f.x(), f.z()], [0.0, 1.2]);
        let l = sample_trajectory(
            &TrajectoryKind::Lemniscate3D { amplitude: 1.2, rate: 1.0 },
            Vec3::ZERO,
            0.0,
        );
        assert_eq!(l, Vec3::new(1.2, 1.2, 0.0));
    }

    #[test]
    fn circle_matches_literal_formula() {
        let k = TrajectoryKind::Circle { radius: 2.0, rate: 1.0 };
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let p = sample_trajectory(&k, Vec3::ZERO, t);
            assert!((p.x() - 2.0 * t.cos()).abs() < 1e-15);
            assert!((p.z() - 2.0 * t.sin()).abs() < 1e-15);
            assert_eq!(p.y(), 0.0);
        }
    }

    #[test]
    fn straight_line_and_square_shapes() {
        let line = TrajectoryKind::StraightLineX { length: 4.0, speed: 0.5 };
        let at = |t| sample_trajectory(&line, Vec3::ZERO, t).x();
        assert_eq!(at(0.0), 0.0);
        assert!((at(4.0) - 2.0).abs() < 1e-12);
        assert!((at(12.0) + 2.0).abs() < 1e-12);
        assert!(at(16.0).abs() < 1e-12);
        let lz = TrajectoryKind::StraightLineZ { length: 4.0, speed: 0.5 };
        let p = sample_trajectory(&lz, Vec3::ZERO, 2.0);
        assert_eq!((p.x(), p.z()), (0.0, 1.0));

        let sq = TrajectoryKind::Square { side: 3.0, speed: 0.5 };
        let corners = [0.0, 6.0, 12.0, 18.0, 24.0]
            .map(|t| sample_trajectory(&sq, Vec3::ZERO, t))
            .map(|p| (p.x(), p.z()));
        assert_eq!(
            corners,
            [(-1.5, -1.5), (1.5, -1.5), (1.5, 1.5), (-1.5, 1.5), (-1.5, -1.5)]
        );
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let kinds = [
            TrajectoryKind::Circle { radius: 2.0, rate: 0.7 },
            TrajectoryKind::FigureEight { amplitude: 1.2, rate: 0.9 },
        ];
        for k in kinds {
            let tr = Trajectory::new(k, Vec3::new(1.0, 2.0, 3.0), Axis::Y);
            for i in 1..20 {
                let t = i as f64 * 0.41;
                let h = 1e-5;
                let v_fd = (tr.position(t + h) - tr.position(t - h)) * (0.5 / h);
                assert!((v_fd - tr.velocity(t)).norm() < 1e-8);
                let a_fd = (tr.velocity(t + h) - tr.velocity(t - h)) * (0.5 / h);
                assert!((a_fd - tr.acceleration(t)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn up_axis_remaps_the_horizontal_plane() {
        let k = TrajectoryKind::Circle { radius: 2.0, rate: 1.0 };
        let z_up = Trajectory::new(k, Vec3::ZERO, Axis::Z).position(PI / 2.0);
        assert!(z_up.x().abs() < 1e-12);
        assert!((z_up.y() - 2.0).abs() < 1e-12);
        assert_eq!(z_up.z(), 0.0);
    }

    #[test]
    fn spawn_corners() {
        let region = SpawnRegion::default();
        let lo = region.spawn_with(3, 1.0, || 0.0);
        assert_eq!(lo.drones[0].position, Vec3::new(-1.2, 3.0, -0.2));
        assert_eq!(lo.drones[1].position, Vec3::new(-1.2, -0.5, -0.2));
        let hi = region.spawn_with(3, 1.0, || 1.0);
        let p = hi.drones[0].position;
        assert!((p - Vec3::new(0.8, 2.5, 2.0)).norm() < 1e-15);
        assert!(hi.drones.iter().all(|d| d.velocity == Vec3::ZERO));
    }

    #[test]
    fn spawn_is_deterministic() {
        assert_eq!(spawn_agents(42, 7), spawn_agents(42, 7));
        assert_ne!(spawn_agents(42, 7), spawn_agents(43, 7));
    }

    #[test]
    fn collision_threshold_is_strict() {
        let near = [Vec3::ZERO, Vec3::new(0.10, 0.0, 0.0)];
        assert_eq!(detect_collisions(&near, 0.15), vec![true, true]);
        let edge = [Vec3::ZERO, Vec3::new(0.15, 0.0, 0.0)];
        assert_eq!(detect_collisions(&edge, 0.15), vec![false, false]);
        assert_eq!(detect_collisions(&[Vec3::ZERO], 0.15), vec![false]);
        let three = [Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)];
        assert_eq!(detect_collisions(&three, 0.15), vec![true, true, false]);
    }

    #[test]
    fn world_step_rejects_blow_up() {
        let p = physics();
        let mut w = WorldState::new(vec![DroneState::at_rest(Vec3::ZERO, 1.0); 2]);
        let cmds = [
            ActuationCommand::Thrust(Vec3::new(f64::INFINITY, 0.0, 0.0)),
            ActuationCommand::Thrust(Vec3::ZERO),
        ];
        assert!(matches!(w.step(&cmds, &p, 0.15), Err(Error::NonFinite { drone: 0, .. })));
    }

    #[test]
    fn period_helper() {
        let k = circle_with_period(2.0, 2.0 * PI);
        assert_eq!(k, TrajectoryKind::Circle { radius: 2.0, rate: 1.0 });
        assert!(TrajectoryKind::Circle { radius: 0.0, rate: 1.0 }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pool() -> Vec<TrajectoryKind> {
            vec![
                TrajectoryKind::Circle { radius: 2.0, rate: 0.25 },
                TrajectoryKind::StraightLineX { length: 4.0, speed: 0.5 },
                TrajectoryKind::StraightLineZ { length: 4.0, speed: 0.5 },
                TrajectoryKind::Square { side: 3.0, speed: 0.5 },
                TrajectoryKind::FigureEight { amplitude: 1.2, rate: 0.25 },
                TrajectoryKind::Lemniscate3D { amplitude: 1.2, rate: 0.25 },
            ]
        }

        proptest! {
            #[test]
            fn trajectories_stay_within_four_metres(t in 0.0f64..1e4) {
                let offset = Vec3::new(0.0, 1.0, 2.0);
                for k in pool() {
                    let p = Trajectory::new(k, offset, Axis::Y).position(t);
                    prop_assert!((p - offset).norm() <= 4.0);
                    prop_assert!(p.is_finite());
                }
            }
        }
    }
}
