//! Clipped-surrogate PPO update.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gae::normalize_advantages;
use super::obs::{ObsBatch, Observation, ACTION_DIM};
use super::policy::{gaussian_entropy, Policy};
use crate::nn::{Adam, Graph, Parameters};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub batch: usize,
    pub buffer: usize,
    /// Initial learning rate, decayed linearly to zero over `total_steps`.
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub max_grad_norm: f64,
    /// Segment length after which the critic's value bootstraps the return.
    pub horizon: usize,
    pub total_steps: u64,
    /// Weight of the control-effort term in the reward.
    pub lambda1: f64,
    /// Weight of the collision term in the reward.
    pub lambda2: f64,
    /// Parallel environment instances during rollout collection.
    pub num_envs: usize,
    /// Evenly spaced checkpoints after the initial one.
    pub checkpoints: usize,
    /// Deterministic evaluation episodes per checkpoint.
    pub eval_episodes: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip: 0.2,
            gae_lambda: 0.95,
            epochs: 3,
            batch: 1024,
            buffer: 10240,
            lr: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            horizon: 128,
            total_steps: 3_000_000,
            lambda1: 0.1,
            lambda2: 0.5,
            num_envs: 8,
            checkpoints: 10,
            eval_episodes: 4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(name, "must be in (0, 1]"))
            }
        };
        unit("ppo.gamma", self.gamma)?;
        unit("ppo.clip", self.clip)?;
        unit("ppo.gae_lambda", self.gae_lambda)?;
        unit("ppo.lr", self.lr)?;
        for (name, v) in [
            ("ppo.entropy_coef", self.entropy_coef),
            ("ppo.value_coef", self.value_coef),
            ("ppo.max_grad_norm", self.max_grad_norm),
            ("ppo.lambda1", self.lambda1),
            ("ppo.lambda2", self.lambda2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        for (name, v) in [
            ("ppo.epochs", self.epochs),
            ("ppo.batch", self.batch),
            ("ppo.horizon", self.horizon),
            ("ppo.num_envs", self.num_envs),
            ("ppo.checkpoints", self.checkpoints),
            ("ppo.eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.buffer == 0 || !self.buffer.is_multiple_of(self.batch) {
            return Err(Error::config("ppo.buffer", "must be a positive multiple of ppo.batch"));
        }
        Ok(())
    }
}

/// One transition ready for the update.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Observation,
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Scalar diagnostics of one minibatch loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Averages over the minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    /// The update hit a non-finite loss or gradient and was rolled back.
    pub aborted: bool,
}

/// Records the PPO loss for `batch` (advantages already normalised):
///
/// `L = −mean(min(ρA, clip(ρ, 1−ε, 1+ε)A)) + c_v·mean((V − R)²) − β·H`.
pub fn ppo_loss<'p>(
    policy: &'p Policy,
    g: &mut Graph<'p>,
    batch: &[&Sample],
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<(crate::nn::Var, Vec<crate::nn::Var>, LossStats)> {
    let b = batch.len();
    let vars = policy.bind(g);
    let obs: Vec<&Observation> = batch.iter().map(|s| &s.obs).collect();
    let f = Policy::forward(&vars, g, &ObsBatch::from_refs(&obs))?;

    let actions = g.input(batch.iter().flat_map(|s| s.action).collect(), &[b, ACTION_DIM])?;
    let old_lp = g.input(batch.iter().map(|s| s.log_prob).collect(), &[b])?;
    let adv = g.input(advantages.to_vec(), &[b])?;
    let returns = g.input(batch.iter().map(|s| s.ret).collect(), &[b, 1])?;

    let lp = Policy::log_prob_var(g, f.mean, vars.log_std(), actions)?;
    let log_ratio = g.sub(lp, old_lp)?;
    let ratio = g.exp(log_ratio);
    let surr1 = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let surr2 = g.mul(clipped, adv)?;
    let surr = g.minimum(surr1, surr2)?;
    let surr_mean = g.mean(surr);
    let policy_loss = g.scale(surr_mean, -1.0);

    let verr = g.sub(f.value, returns)?;
    let vsq = g.square(verr);
    let value_loss = g.mean(vsq);

    // entropy of a diagonal Gaussian is Σ log σ + const
    let ls_sum = g.sum(vars.log_std());
    let entropy_const = gaussian_entropy(&[0.0; ACTION_DIM]);

    let v_term = g.scale(value_loss, cfg.value_coef);
    let e_term = g.scale(ls_sum, -cfg.entropy_coef);
    let loss = g.add(policy_loss, v_term)?;
    let loss = g.add(loss, e_term)?;

    let ratios = g.value(ratio);
    let lr_vals = g.value(log_ratio);
    let stats = LossStats {
        policy_loss: g.scalar(policy_loss),
        value_loss: g.scalar(value_loss),
        entropy: g.scalar(ls_sum) + entropy_const,
        approx_kl: lr_vals.iter().map(|x| (x.exp() - 1.0) - x).sum::<f64>() / b as f64,
        clip_fraction: ratios
            .iter()
            .filter(|r| (*r - 1.0).abs() > cfg.clip)
            .count() as f64
            / b as f64,
    };
    Ok((loss, vars.vars(), stats))
}

/// Gradients of the PPO loss with respect to every policy parameter, in
/// [`Parameters::named_params`] order.
pub fn ppo_gradients(
    policy: &Policy,
    batch: &[&Sample],
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<(Vec<Vec<f64>>, f64, LossStats)> {
    let mut g = Graph::new();
    let (loss, vars, stats) = ppo_loss(policy, &mut g, batch, advantages, cfg)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    g.backward(loss)?;
    let grads = vars
        .iter()
        .map(|&v| match g.grad(v) {
            Some(gr) => gr.to_vec(),
            None => vec![0.0; g.value(v).len()],
        })
        .collect();
    Ok((grads, value, stats))
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|x| *x *= s);
    }
    norm
}

/// `epochs` passes over shuffled minibatches of `samples`.
///
/// A non-finite loss or gradient aborts the whole update: parameters and
/// optimiser state are restored to their values on entry.
pub fn ppo_update(
    policy: &mut Policy,
    adam: &mut Adam,
    samples: &[Sample],
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let saved = (policy.clone(), adam.clone());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut acc = LossStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
            normalize_advantages(&mut adv);
            let outcome = ppo_gradients(policy, &batch, &adv, cfg).and_then(|(mut grads, _, stats)| {
                let norm = clip_grad_norm(&mut grads, cfg.max_grad_norm);
                if norm.is_finite() {
                    Ok((grads, stats))
                } else {
                    Err(Error::NonFiniteLoss)
                }
            });
            let (grads, stats) = match outcome {
                Ok(x) => x,
                Err(Error::NonFiniteLoss) => {
                    log::warn!("non-finite PPO loss or gradient; update rolled back");
                    (*policy, *adam) = saved;
                    return Ok(UpdateStats {
                        aborted: true,
                        ..Default::default()
                    });
                }
                Err(e) => return Err(e),
            };
            adam.step(&mut policy.params_mut(), &grads, lr);
            acc.policy_loss += stats.policy_loss;
            acc.value_loss += stats.value_loss;
            acc.entropy += stats.entropy;
            acc.approx_kl += stats.approx_kl;
            acc.clip_fraction += stats.clip_fraction;
            count += 1;
        }
    }
    let n = count as f64;
    Ok(UpdateStats {
        loss: LossStats {
            policy_loss: acc.policy_loss / n,
            value_loss: acc.value_loss / n,
            entropy: acc.entropy / n,
            approx_kl: acc.approx_kl / n,
            clip_fraction: acc.clip_fraction / n,
        },
        minibatches: count,
        aborted: false,
    })
}

/// Optimiser sized for `policy`.
pub fn adam_for(policy: &Policy) -> Adam {
    let sizes: Vec<usize> = policy.named_params().iter().map(|(_, t)| t.len()).collect();
    Adam::new(Default::default(), &sizes)
}
