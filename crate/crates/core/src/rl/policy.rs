//! Actor–critic networks.
//!
//! Both heads read the same assembled observation: the attention encoder
//! summarises the neighbour buffer (queried by the ego row) and its output
//! is concatenated with the normal channel before the MLP. The actor emits a
//! tanh-squashed Gaussian mean with a state-independent learnable log-std;
//! the critic emits a scalar value. Actor and critic share no weights.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::obs::{ObsBatch, Observation, ACTION_DIM, NEIGHBOR_DIM, NORMAL_DIM};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Activation, GatParams, GatVars, Graph, Mlp, MlpVars, Parameters, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyArch {
    /// Width of both hidden layers.
    pub hidden: usize,
    /// Attention encoder output width.
    pub gat_dim: usize,
    pub leaky_slope: f64,
    pub log_std_init: f64,
    /// Scale applied to the initial actor output weights.
    pub actor_out_scale: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            hidden: 256,
            gat_dim: 32,
            leaky_slope: 0.01,
            log_std_init: -0.5,
            actor_out_scale: 0.01,
        }
    }
}

impl PolicyArch {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("policy.hidden", "must be >= 1"));
        }
        if self.gat_dim == 0 {
            return Err(Error::config("policy.gat_dim", "must be >= 1"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("policy.leaky_slope", "must be in (0, 1)"));
        }
        if !self.log_std_init.is_finite() {
            return Err(Error::config("policy.log_std_init", "must be finite"));
        }
        if !(self.actor_out_scale.is_finite() && self.actor_out_scale > 0.0) {
            return Err(Error::config("policy.actor_out_scale", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub arch: PolicyArch,
    pub actor_gat: GatParams,
    pub actor: Mlp,
    /// `[ACTION_DIM]`.
    pub log_std: Tensor,
    pub critic_gat: GatParams,
    pub critic: Mlp,
}

/// Graph handles for one forward pass.
pub struct PolicyVars {
    actor_gat: GatVars,
    actor: MlpVars,
    log_std: Var,
    critic_gat: GatVars,
    critic: MlpVars,
}

impl PolicyVars {
    /// Parameter handles in [`Parameters::named_params`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.actor_gat.vars();
        v.extend(self.actor.vars());
        v.push(self.log_std);
        v.extend(self.critic_gat.vars());
        v.extend(self.critic.vars());
        v
    }

    pub fn log_std(&self) -> Var {
        self.log_std
    }
}

/// Outputs of a batched forward pass.
pub struct Forward {
    /// `[B, ACTION_DIM]`.
    pub mean: Var,
    /// `[B, 1]`.
    pub value: Var,
}

/// One sampled (or deterministic) action with its statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Act {
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub value: f64,
}

const LOG_2PI: f64 = 1.837_877_066_409_345_3; // ln(2π)

/// Diagonal Gaussian log density.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LOG_2PI
        })
        .sum()
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + LOG_2PI)).sum()
}

impl Policy {
    pub fn new(arch: PolicyArch, rng: &mut Rng) -> Self {
        let input = NORMAL_DIM + arch.gat_dim;
        let h = arch.hidden;
        let actor_gat = GatParams::new(NEIGHBOR_DIM, arch.gat_dim, arch.leaky_slope, rng);
        let actor = Mlp::new(
            &[input, h, h, ACTION_DIM],
            Activation::Relu,
            Activation::Tanh,
            arch.actor_out_scale,
            rng,
        );
        let critic_gat = GatParams::new(NEIGHBOR_DIM, arch.gat_dim, arch.leaky_slope, rng);
        let critic = Mlp::new(&[input, h, h, 1], Activation::Relu, Activation::Identity, 1.0, rng);
        Self {
            arch,
            actor_gat,
            actor,
            log_std: Tensor::from_vec(vec![arch.log_std_init; ACTION_DIM], &[ACTION_DIM])
                .expect("static shape"),
            critic_gat,
            critic,
        }
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> PolicyVars {
        PolicyVars {
            actor_gat: self.actor_gat.bind(g),
            actor: self.actor.bind(g),
            log_std: g.param(&self.log_std),
            critic_gat: self.critic_gat.bind(g),
            critic: self.critic.bind(g),
        }
    }

    /// Records the actor mean and critic value for a batch.
    pub fn forward(vars: &PolicyVars, g: &mut Graph, batch: &ObsBatch) -> Result<Forward> {
        let b = batch.len;
        let normal = g.input(batch.normal.clone(), &[b, NORMAL_DIM])?;
        let ego = g.input(batch.ego.clone(), &[b, NEIGHBOR_DIM])?;
        let nbr = g.input(batch.neighbors.clone(), &[b * batch.n_max, NEIGHBOR_DIM])?;
        let inputs = (normal, ego, nbr, batch.mask.as_slice());
        let mean = head(g, &vars.actor_gat, &vars.actor, inputs)?;
        let value = head(g, &vars.critic_gat, &vars.critic, inputs)?;
        Ok(Forward { mean, value })
    }

    /// Per-row Gaussian log-probability `[B]` of `actions: [B, ACTION_DIM]`.
    pub fn log_prob_var(g: &mut Graph, mean: Var, log_std: Var, actions: Var) -> Result<Var> {
        let b = g.shape(mean)[0];
        let diff = g.sub(actions, mean)?;
        let ls = g.broadcast_rows(log_std, b);
        let neg = g.scale(ls, -1.0);
        let inv_std = g.exp(neg);
        let z = g.mul(diff, inv_std)?;
        let z2 = g.square(z);
        let half = g.scale(z2, 0.5);
        let per = g.add(half, ls)?;
        let s = g.sum_last(per);
        let neg = g.scale(s, -1.0);
        Ok(g.add_scalar(neg, -0.5 * LOG_2PI * ACTION_DIM as f64))
    }

    /// Actor means `[B·ACTION_DIM]` and values `[B]`.
    pub fn evaluate(&self, batch: &ObsBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let f = Self::forward(&vars, &mut g, batch)?;
        Ok((g.value(f.mean).to_vec(), g.value(f.value).to_vec()))
    }

    /// Samples an action (or takes the mean when `rng` is `None`).
    pub fn act(&self, obs: &Observation, rng: Option<&mut Rng>) -> Result<Act> {
        let (mean, value) = self.evaluate(&ObsBatch::single(obs))?;
        let ls = &self.log_std.data;
        let mut action = [0.0; ACTION_DIM];
        match rng {
            Some(rng) => {
                for k in 0..ACTION_DIM {
                    let eps: f64 = StandardNormal.sample(rng);
                    action[k] = mean[k] + ls[k].exp() * eps;
                }
            }
            None => action.copy_from_slice(&mean),
        }
        let log_prob = gaussian_log_prob(&action, &mean, ls);
        if !log_prob.is_finite() || !value[0].is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(Act {
            action,
            log_prob,
            value: value[0],
        })
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.evaluate(&ObsBatch::single(obs))?.1[0])
    }

    pub fn checkpoint(&self, config_hash: &str, seed: u64, step: u64) -> Checkpoint {
        let meta = serde_json::to_value(self.arch).expect("arch serialises");
        Checkpoint::new(config_hash, seed, step, meta, self.named_params())
    }

    pub fn save(&self, path: &Path, config_hash: &str, seed: u64, step: u64) -> Result<()> {
        self.checkpoint(config_hash, seed, step).save(path)
    }

    /// Rebuilds a policy from a checkpoint file.
    pub fn load(path: &Path) -> Result<(Self, Checkpoint)> {
        let ck = Checkpoint::load(path)?;
        let policy = Self::from_checkpoint(&ck)?;
        Ok((policy, ck))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let arch: PolicyArch = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
        arch.validate()?;
        // values are overwritten; the init stream is irrelevant
        let mut policy = Self::new(arch, &mut crate::rng::stream(0, crate::rng::Stream::Init));
        let names: Vec<String> = policy.named_params().into_iter().map(|(n, _)| n).collect();
        let targets = names.into_iter().zip(policy.params_mut()).collect();
        ck.restore_into(targets)?;
        Ok(policy)
    }
}

fn head(g: &mut Graph, gat: &GatVars, mlp: &MlpVars, (normal, ego, nbr, mask): (Var, Var, Var, &[bool])) -> Result<Var> {
    let s = gat.encode(g, ego, nbr, mask)?;
    let x = g.concat(normal, s)?;
    mlp.forward(g, x)
}

impl Parameters for Policy {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.actor_gat.named("actor.gat");
        v.extend(self.actor.named("actor.mlp"));
        v.push(("actor.log_std".into(), &self.log_std));
        v.extend(self.critic_gat.named("critic.gat"));
        v.extend(self.critic.named("critic.mlp"));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.actor_gat.params_mut();
        v.extend(self.actor.params_mut());
        v.push(&mut self.log_std);
        v.extend(self.critic_gat.params_mut());
        v.extend(self.critic.params_mut());
        v
    }
}
