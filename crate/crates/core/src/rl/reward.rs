//! The compound penalty reward.

use crate::vec3::Vec3;

/// `r = −(‖e‖² + λ1‖u‖ + λ2·c) / T_max`.
pub fn compute_reward(e: Vec3, u: Vec3, collided: bool, lambda1: f64, lambda2: f64, t_max: usize) -> f64 {
    let c = if collided { 1.0 } else { 0.0 };
    -(e.norm_squared() + lambda1 * u.norm() + lambda2 * c) / t_max as f64
}
