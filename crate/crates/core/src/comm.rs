//! Communication topology: range-limited neighbours, the DoS gate on the
//! leader broadcast link, and graph matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sim::WorldState;
use crate::vec3::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommConfig {
    /// Neighbour range (m).
    pub d_c: f64,
    /// Attack range around the attacker (m).
    pub kappa: f64,
    pub p_dos: Vec3,
    /// Followers whose leader link can be jammed. Never contains 0.
    pub attacked_ids: BTreeSet<usize>,
    /// Neighbour buffer capacity.
    pub n_max: usize,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            d_c: 0.8,
            kappa: 3.0,
            p_dos: Vec3::new(0.0, -1.0, 4.0),
            attacked_ids: BTreeSet::from([1]),
            n_max: 6,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_c.is_finite() && self.d_c > 0.0) {
            return Err(Error::config("d_c", "must be > 0"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::config("kappa", "must be > 0"));
        }
        if !self.p_dos.is_finite() {
            return Err(Error::config("p_dos", "must be finite"));
        }
        if self.attacked_ids.contains(&0) {
            return Err(Error::config("attacked_ids", "the leader (0) cannot be attacked"));
        }
        if self.n_max == 0 {
            return Err(Error::config("n_max", "must be >= 1"));
        }
        Ok(())
    }

    pub fn is_attackable(&self, id: usize) -> bool {
        self.attacked_ids.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    /// `p_i − p_j`: position of the observing agent relative to the neighbour.
    pub rel_pos: Vec3,
    pub velocity: Vec3,
    pub distance: f64,
}

/// What agent `i` can see this step.
#[derive(Debug, Clone, PartialEq)]
pub struct CommView {
    pub leader_link_alive: bool,
    /// `p_i − p_1`, or exactly zero when the link is dead.
    pub rel_to_leader: Vec3,
    /// Leader velocity as broadcast; zero when the link is dead.
    pub leader_velocity: Vec3,
    /// Nearest first, at most `n_max` entries.
    pub neighbors: Vec<Neighbor>,
}

/// Agents within `d_c` of agent `i`, nearest first, truncated to `n_max`.
/// Equal distances are ordered by id.
pub fn neighbors_of(world: &WorldState, i: usize, cfg: &CommConfig) -> Vec<Neighbor> {
    let pi = world.drones[i].position;
    let mut out: Vec<Neighbor> = world
        .drones
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .filter_map(|(j, d)| {
            let rel = pi - d.position;
            let distance = rel.norm();
            (distance <= cfg.d_c).then_some(Neighbor {
                id: j,
                rel_pos: rel,
                velocity: d.velocity,
                distance,
            })
        })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    out.truncate(cfg.n_max);
    out
}

/// Leader-relative position of an attackable agent `a`: dead (and exactly
/// zero) iff `‖p_a − p_DoS‖ ≤ κ`.
pub fn dos_gate(p_a: Vec3, p_1: Vec3, cfg: &CommConfig) -> (bool, Vec3) {
    if (p_a - cfg.p_dos).norm() <= cfg.kappa {
        (false, Vec3::ZERO)
    } else {
        (true, p_a - p_1)
    }
}

/// Assembles agent `i`'s view. Agents outside `attacked_ids` always receive
/// the leader broadcast.
pub fn comm_view(world: &WorldState, i: usize, cfg: &CommConfig) -> CommView {
    let p_i = world.drones[i].position;
    let leader = world.leader();
    let (alive, rel) = if i == 0 {
        (true, Vec3::ZERO)
    } else if cfg.is_attackable(i) {
        dos_gate(p_i, leader.position, cfg)
    } else {
        (true, p_i - leader.position)
    };
    CommView {
        leader_link_alive: alive,
        rel_to_leader: rel,
        leader_velocity: if alive { leader.velocity } else { Vec3::ZERO },
        neighbors: neighbors_of(world, i, cfg),
    }
}

/// Dense `N×N` matrices in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatrices {
    pub n: usize,
    pub adjacency: Vec<f64>,
    pub degree: Vec<f64>,
    pub laplacian: Vec<f64>,
}

impl GraphMatrices {
    pub fn at(m: &[f64], n: usize, i: usize, j: usize) -> f64 {
        m[i * n + j]
    }
}

/// Unit-weight range graph; `L = D − W`. Uses the untruncated range rule, so
/// `W` is symmetric.
pub fn build_matrices(world: &WorldState, cfg: &CommConfig) -> GraphMatrices {
    let n = world.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j
                && (world.drones[i].position - world.drones[j].position).norm() <= cfg.d_c
            {
                w[i * n + j] = 1.0;
            }
        }
    }
    let mut d = vec![0.0; n * n];
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let deg: f64 = w[i * n..(i + 1) * n].iter().sum();
        d[i * n + i] = deg;
        for j in 0..n {
            l[i * n + j] = d[i * n + j] - w[i * n + j];
        }
    }
    GraphMatrices {
        n,
        adjacency: w,
        degree: d,
        laplacian: l,
    }
}
