//! Classical control laws: the leader's trajectory tracker and the three
//! baseline follower laws (displacement, distance, angle).
//!
//! All laws are acceleration laws with gravity compensation and return
//! thrust commands.

use serde::{Deserialize, Serialize};

use crate::sim::{ActuationCommand, DroneState};
use crate::vec3::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub k_p: f64,
    pub k_v: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { k_p: 6.0, k_v: 0.5 }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p.is_finite() && self.k_p > 0.0) {
            return Err(Error::config("k_p", "must be > 0"));
        }
        if !(self.k_v.is_finite() && self.k_v > 0.0) {
            return Err(Error::config("k_v", "must be > 0"));
        }
        Ok(())
    }
}

/// Desired formation as offsets from the leader, `p*_1i = p*_i − p*_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    /// Index `i` holds `p*_1i`; index 0 (the leader) is zero.
    offsets: Vec<Vec3>,
}

impl FormationSpec {
    /// `follower_offsets[k]` is the offset of agent `k + 1`.
    pub fn new(follower_offsets: &[Vec3]) -> Self {
        let mut offsets = Vec::with_capacity(follower_offsets.len() + 1);
        offsets.push(Vec3::ZERO);
        offsets.extend_from_slice(follower_offsets);
        Self { offsets }
    }

    pub fn paper_default() -> Self {
        Self::new(&default_offsets())
    }

    pub fn n_agents(&self) -> usize {
        self.offsets.len()
    }

    pub fn offset(&self, i: usize) -> Vec3 {
        self.offsets[i]
    }

    /// `‖p*_ij‖` between any two agents (leader included).
    pub fn desired_distance(&self, i: usize, j: usize) -> f64 {
        (self.offsets[j] - self.offsets[i]).norm()
    }

    /// Desired angle at agent `i` subtended by agents `j` and `k`.
    pub fn desired_angle(&self, j: usize, i: usize, k: usize) -> f64 {
        unsigned_angle(
            self.offsets[j] - self.offsets[i],
            self.offsets[k] - self.offsets[i],
        )
    }
}

pub fn default_offsets() -> Vec<Vec3> {
    vec![
        Vec3::new(-0.5, 0.0, 1.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.5, 0.0, 1.0),
        Vec3::new(-0.5, 0.0, 2.0),
        Vec3::new(0.0, 0.0, 2.0),
        Vec3::new(0.5, 0.0, 2.0),
    ]
}

/// Reference for the leader at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
}

/// `u_1 = m[g + p̈* − k_v(ṗ − ṗ*) − k_p(p − p*)]`.
pub fn leader_track(state: &DroneState, r: &Reference, g_vec: Vec3, gains: &Gains) -> ActuationCommand {
    let acc = g_vec + r.acc
        - (state.velocity - r.vel) * gains.k_v
        - (state.position - r.pos) * gains.k_p;
    ActuationCommand::Thrust(acc * state.mass)
}

/// `u_i = m[g − k_v(ṗ_i − ṗ_1) − k_p(p_1i − p*_1i)]` with `p̈_1 ≈ 0`.
///
/// `rel_to_leader` is `p_i − p_1` as received; under DoS the caller passes
/// the gated zero vector and the law chases a phantom leader at the origin
/// of the measurement.
pub fn displacement_follower(
    state: &DroneState,
    rel_to_leader: Vec3,
    leader_velocity: Vec3,
    desired_offset: Vec3,
    g_vec: Vec3,
    gains: &Gains,
) -> ActuationCommand {
    let acc = g_vec
        - (state.velocity - leader_velocity) * gains.k_v
        - (rel_to_leader - desired_offset) * gains.k_p;
    ActuationCommand::Thrust(acc * state.mass)
}

/// One relative measurement used by the distance law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceTarget {
    /// `p_j − p_i`.
    pub to_neighbor: Vec3,
    pub desired_distance: f64,
}

const COINCIDENT: f64 = 1e-6;

/// `u = m[g − k_v·ṗ_i + k_p Σ_j (‖p_j − p_i‖ − d*_ij)·(p_j − p_i)/‖p_j − p_i‖]`.
///
/// Coincident neighbours (no defined direction) are skipped.
pub fn distance_follower(
    state: &DroneState,
    targets: &[DistanceTarget],
    g_vec: Vec3,
    gains: &Gains,
) -> ActuationCommand {
    let mut pull = Vec3::ZERO;
    for t in targets {
        let d = t.to_neighbor.norm();
        if d < COINCIDENT {
            continue;
        }
        pull += t.to_neighbor * ((d - t.desired_distance) / d);
    }
    let acc = g_vec - state.velocity * gains.k_v + pull * gains.k_p;
    ActuationCommand::Thrust(acc * state.mass)
}

/// Angle between two vectors via a clamped arccos; `0.0` if either is
/// (near) zero.
pub fn unsigned_angle(a: Vec3, b: Vec3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na < COINCIDENT || nb < COINCIDENT {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Signed angle from `a` to `b` about `up`: positive when `a × b` points
/// along `up`. Both vectors are projected onto the plane normal to `up`.
pub fn signed_plane_angle(a: Vec3, b: Vec3, up: Vec3) -> Option<f64> {
    let project = |v: Vec3| v - up * v.dot(&up);
    let (a, b) = (project(a), project(b));
    if a.norm() < COINCIDENT || b.norm() < COINCIDENT {
        return None;
    }
    let cross = a.cross(&b);
    if cross.norm() < COINCIDENT * a.norm() * b.norm() && a.dot(&b) > 0.0 {
        return None;
    }
    let theta = unsigned_angle(a, b);
    Some(if cross.dot(&up) >= 0.0 { theta } else { -theta })
}

/// `u = m[g − k_v·ṗ_i + k_p(θ_jik − θ*)(û_ij + û_ik)]`.
///
/// `to_j`, `to_k` are `p_j − p_i`, `p_k − p_i`. The measured angle is the
/// signed in-plane angle about `up`; `theta_star` uses the same sign
/// convention. Degenerate geometry leaves only gravity compensation and
/// damping.
pub fn angle_follower(
    state: &DroneState,
    to_j: Vec3,
    to_k: Vec3,
    theta_star: f64,
    up: Vec3,
    g_vec: Vec3,
    gains: &Gains,
) -> ActuationCommand {
    let base = g_vec - state.velocity * gains.k_v;
    let Some(theta) = signed_plane_angle(to_j, to_k, up) else {
        log::debug!("angle law: degenerate neighbour geometry, corrective term dropped");
        return ActuationCommand::Thrust(base * state.mass);
    };
    let u_ij = to_j * (1.0 / to_j.norm());
    let u_ik = to_k * (1.0 / to_k.norm());
    let acc = base + (u_ij + u_ik) * (gains.k_p * (theta - theta_star));
    ActuationCommand::Thrust(acc * state.mass)
}
