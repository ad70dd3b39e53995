//! Dual-mode observations: the leader channel while the broadcast link is
//! alive, the neighbour channel (fed to the attention encoder) while it is
//! jammed. The unused channel is zero-padded.

use crate::comm::CommView;
use crate::sim::DroneState;
use crate::vec3::Vec3;

/// `[ṗ_i ‖ p_1i]`.
pub const NORMAL_DIM: usize = 6;
/// `[p_ji ‖ ṗ_j]` per neighbour row.
pub const NEIGHBOR_DIM: usize = 6;
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub normal: [f64; NORMAL_DIM],
    /// `n_max` rows, nearest first; padding rows are zero.
    pub neighbor_buffer: Vec<[f64; NEIGHBOR_DIM]>,
    pub neighbor_mask: Vec<bool>,
}

impl Observation {
    /// Leader-channel observation; the neighbour buffer is empty.
    pub fn leader_mode(velocity: Vec3, rel_to_leader: Vec3, n_max: usize) -> Self {
        let mut normal = [0.0; NORMAL_DIM];
        normal[..3].copy_from_slice(velocity.as_slice());
        normal[3..].copy_from_slice(rel_to_leader.as_slice());
        Self {
            normal,
            neighbor_buffer: vec![[0.0; NEIGHBOR_DIM]; n_max],
            neighbor_mask: vec![false; n_max],
        }
    }

    pub fn n_max(&self) -> usize {
        self.neighbor_mask.len()
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.normal[0], self.normal[1], self.normal[2])
    }

    pub fn rel_to_leader(&self) -> Vec3 {
        Vec3::new(self.normal[3], self.normal[4], self.normal[5])
    }

    /// Query row for the attention encoder: the ego agent in neighbour
    /// layout (zero relative position, own velocity).
    pub fn ego_row(&self) -> [f64; NEIGHBOR_DIM] {
        let mut row = [0.0; NEIGHBOR_DIM];
        row[3..].copy_from_slice(&self.normal[..3]);
        row
    }
}

/// Builds agent `i`'s observation from its communication view.
///
/// Alive link: `normal = [ṗ_i ‖ p_1i]`, buffer all zero and masked. Dead
/// link: `normal = [ṗ_i ‖ 0]`, buffer holds up to `n_max` nearest neighbours.
pub fn assemble_observation(state: &DroneState, view: &CommView, n_max: usize) -> Observation {
    if view.leader_link_alive {
        return Observation::leader_mode(state.velocity, view.rel_to_leader, n_max);
    }
    let mut obs = Observation::leader_mode(state.velocity, Vec3::ZERO, n_max);
    for (k, n) in view.neighbors.iter().take(n_max).enumerate() {
        obs.neighbor_buffer[k][..3].copy_from_slice(n.rel_pos.as_slice());
        obs.neighbor_buffer[k][3..].copy_from_slice(n.velocity.as_slice());
        obs.neighbor_mask[k] = true;
    }
    obs
}

/// Row-major batch of observations ready for the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch {
    pub len: usize,
    pub n_max: usize,
    /// `[len, NORMAL_DIM]`.
    pub normal: Vec<f64>,
    /// `[len, NEIGHBOR_DIM]`.
    pub ego: Vec<f64>,
    /// `[len·n_max, NEIGHBOR_DIM]`.
    pub neighbors: Vec<f64>,
    /// `[len·n_max]`.
    pub mask: Vec<bool>,
}

impl ObsBatch {
    pub fn from_refs(obs: &[&Observation]) -> Self {
        let n_max = obs.first().map_or(0, |o| o.n_max());
        let mut b = Self {
            len: obs.len(),
            n_max,
            normal: Vec::with_capacity(obs.len() * NORMAL_DIM),
            ego: Vec::with_capacity(obs.len() * NEIGHBOR_DIM),
            neighbors: Vec::with_capacity(obs.len() * n_max * NEIGHBOR_DIM),
            mask: Vec::with_capacity(obs.len() * n_max),
        };
        for o in obs {
            assert_eq!(o.n_max(), n_max, "mixed neighbour buffer sizes in one batch");
            b.normal.extend_from_slice(&o.normal);
            b.ego.extend_from_slice(&o.ego_row());
            for row in &o.neighbor_buffer {
                b.neighbors.extend_from_slice(row);
            }
            b.mask.extend_from_slice(&o.neighbor_mask);
        }
        b
    }

    pub fn single(obs: &Observation) -> Self {
        Self::from_refs(&[obs])
    }
}
