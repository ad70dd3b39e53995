//! Generalised advantage estimation.

use crate::{Error, Result};

/// Advantages and returns for one contiguous segment.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap
/// value of the state following the segment. `dones[t]` marks that the
/// episode ended with transition `t`, which cuts the bootstrap from
/// `values[t + 1]`.
///
/// `δ_t = r_t + γV_{t+1}(1 − done_t) − V_t`, `A_t = Σ_k (γλ)^k δ_{t+k}`
/// (the sum also stops at episode ends), `R_t = A_t + V_t`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::EmptyBuffer);
    }
    if values.len() != n + 1 {
        return Err(Error::Length {
            expected: n + 1,
            got: values.len(),
        });
    }
    if dones.len() != n {
        return Err(Error::Length {
            expected: n,
            got: dones.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit variance (population std, floored at 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rewards_and_values_give_zero() {
        let (a, r) = compute_advantages(&[0.0; 5], &[0.0; 6], &[false; 5], 0.99, 0.95).unwrap();
        assert!(a.iter().chain(&r).all(|&x| x == 0.0));
    }

    #[test]
    fn three_step_oracle() {
        let (a, _) = compute_advantages(&[1.0; 3], &[0.0; 4], &[false; 3], 0.99, 0.95).unwrap();
        let gl: f64 = 0.99 * 0.95;
        // δ ≡ 1, so A_t = Σ_{k<3−t} (γλ)^k
        let expect = [1.0 + gl + gl * gl, 1.0 + gl, 1.0];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn done_cuts_bootstrap() {
        let (a, _) = compute_advantages(&[0.0, 0.0], &[0.0, 0.0, 100.0], &[false, true], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_advantages(&[], &[0.0], &[], 0.99, 0.95), Err(Error::EmptyBuffer)));
        assert!(compute_advantages(&[0.0], &[0.0], &[false], 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let mut a = vec![1.0, -2.0, 0.5, 3.0];
        let mut b: Vec<f64> = a.iter().map(|x| 7.5 * x).collect();
        normalize_advantages(&mut a);
        normalize_advantages(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
    }
}
