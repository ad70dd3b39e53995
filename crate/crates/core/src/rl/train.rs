//! The training loop: parallel rollout collection, GAE per segment, PPO
//! updates, and evenly spaced checkpoints with deterministic evaluation.

use std::path::{Path, PathBuf};

use super::env::Env;
use super::gae::compute_advantages;
use super::obs::Observation;
use super::policy::Policy;
use super::ppo::{adam_for, ppo_update, PpoConfig, Sample, UpdateStats};
use crate::artifact::{csv_writer, Provenance};
use crate::par::{self, ExecMode};
use crate::rng::{stream, Rng, Stream};
use crate::Result;

/// Deterministic evaluation of one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    /// Mean undiscounted episode return.
    pub mean_reward: f64,
    /// Population standard deviation of the episode returns.
    pub std_reward: f64,
    /// Mean over episodes of the time-averaged tracking error (m).
    pub mean_e_f: f64,
    /// Mean over episodes of collisions per step.
    pub collision_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Initial point plus one per checkpoint.
    pub curve: Vec<CurvePoint>,
    pub checkpoints: Vec<PathBuf>,
    pub updates: Vec<UpdateStats>,
    /// Mean per-step reward of each round's (stochastic) rollouts.
    pub rollout_rewards: Vec<f64>,
    pub steps: u64,
}

pub struct TrainOptions<'a> {
    pub seed: u64,
    pub mode: ExecMode,
    /// Where checkpoints and the curve CSV go; `None` keeps everything in
    /// memory.
    pub out_dir: Option<&'a Path>,
    pub config_hash: &'a str,
}

pub const CURVE_FILE: &str = "training_curve.csv";

pub fn checkpoint_file(k: usize) -> String {
    format!("checkpoint_{k:02}.json")
}

struct Worker<E> {
    env: E,
    rng: Rng,
}

impl<E: Env> Worker<E> {
    /// Collects `n` transitions in segments of at most `horizon` steps,
    /// bootstrapping each segment with the critic's value of the next state.
    /// Returns the samples and the sum of their rewards.
    fn collect(&mut self, policy: &Policy, n: usize, cfg: &PpoConfig) -> Result<(Vec<Sample>, f64)> {
        let mut samples = Vec::with_capacity(n);
        let mut reward_sum = 0.0;
        let mut remaining = n;
        while remaining > 0 {
            let len = remaining.min(cfg.horizon);
            let mut seg: Vec<(Observation, [f64; 3], f64)> = Vec::with_capacity(len);
            let mut rewards = Vec::with_capacity(len);
            let mut values = Vec::with_capacity(len + 1);
            let mut dones = Vec::with_capacity(len);
            for _ in 0..len {
                let obs = self.env.observe();
                let act = policy.act(&obs, Some(&mut self.rng))?;
                let out = self.env.step(act.action);
                seg.push((obs, act.action, act.log_prob));
                rewards.push(out.reward);
                values.push(act.value);
                dones.push(out.done);
                if out.done {
                    self.env.reset(&mut self.rng);
                }
            }
            let bootstrap = if *dones.last().unwrap_or(&true) {
                0.0
            } else {
                policy.value(&self.env.observe())?
            };
            values.push(bootstrap);
            reward_sum += rewards.iter().sum::<f64>();
            let (adv, ret) = compute_advantages(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda)?;
            samples.extend(seg.into_iter().zip(adv).zip(ret).map(|(((obs, action, log_prob), advantage), ret)| {
                Sample {
                    obs,
                    action,
                    log_prob,
                    advantage,
                    ret,
                }
            }));
            remaining -= len;
        }
        Ok((samples, reward_sum))
    }
}

/// Runs `episodes` deterministic (mean-action) episodes on the evaluation
/// seed streams.
pub fn evaluate_policy<E: Env, F: Fn() -> E + Sync>(
    make_env: &F,
    policy: &Policy,
    episodes: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<CurvePoint> {
    let per: Vec<Result<(f64, f64, f64)>> = par::map_range(mode, episodes, |e| {
        let mut rng = stream(seed, Stream::Eval(e as u64));
        let mut env = make_env();
        env.reset(&mut rng);
        let (mut ret, mut err, mut coll, mut n) = (0.0, 0.0, 0usize, 0usize);
        loop {
            let act = policy.act(&env.observe(), None)?;
            let out = env.step(act.action);
            ret += out.reward;
            err += out.error;
            coll += usize::from(out.collided);
            n += 1;
            if out.done {
                break;
            }
        }
        Ok((ret, err / n as f64, coll as f64 / n as f64))
    });
    let per = per.into_iter().collect::<Result<Vec<_>>>()?;
    let k = per.len().max(1) as f64;
    let mean = per.iter().map(|p| p.0).sum::<f64>() / k;
    let var = per.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / k;
    Ok(CurvePoint {
        step: 0,
        mean_reward: mean,
        std_reward: var.sqrt(),
        mean_e_f: per.iter().map(|p| p.1).sum::<f64>() / k,
        collision_rate: per.iter().map(|p| p.2).sum::<f64>() / k,
    })
}

/// Trains `policy` in place.
///
/// Checkpoint `k` (0..=`cfg.checkpoints`) is taken after the first update
/// that reaches `k/checkpoints · total_steps`; checkpoint 0 is the initial
/// policy. With `total_steps == 0` only the initial checkpoint is emitted.
pub fn train<E: Env, F: Fn() -> E + Sync>(
    make_env: F,
    policy: &mut Policy,
    cfg: &PpoConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.validate()?;
    let prov = Provenance::new(opts.config_hash, opts.seed);
    let mut workers: Vec<Worker<E>> = (0..cfg.num_envs)
        .map(|k| {
            let mut rng = stream(opts.seed, Stream::Env(k as u64));
            let mut env = make_env();
            env.reset(&mut rng);
            Worker { env, rng }
        })
        .collect();
    let mut shuffle = stream(opts.seed, Stream::Shuffle);
    let mut adam = adam_for(policy);
    let mut report = TrainReport {
        curve: Vec::new(),
        checkpoints: Vec::new(),
        updates: Vec::new(),
        rollout_rewards: Vec::new(),
        steps: 0,
    };

    let total = cfg.total_steps;
    let n_ck = cfg.checkpoints as u64;
    let threshold = |k: u64| total * k / n_ck;
    let take_checkpoint = |k: usize, steps: u64, policy: &Policy, report: &mut TrainReport| -> Result<()> {
        let mut point = evaluate_policy(&make_env, policy, cfg.eval_episodes, opts.seed, opts.mode)?;
        point.step = steps;
        log::info!(
            "checkpoint {k}: step {steps}, reward {:.5} ± {:.5}, e_f {:.4}, cr {:.4}",
            point.mean_reward,
            point.std_reward,
            point.mean_e_f,
            point.collision_rate
        );
        report.curve.push(point);
        if let Some(dir) = opts.out_dir {
            let path = dir.join(checkpoint_file(k));
            policy.save(&path, opts.config_hash, opts.seed, steps)?;
            report.checkpoints.push(path);
        }
        Ok(())
    };

    take_checkpoint(0, 0, policy, &mut report)?;
    let mut next_ck = 1u64;
    let mut steps = 0u64;
    while steps < total {
        let round = (total - steps).min(cfg.buffer as u64) as usize;
        let per_env = round.div_ceil(cfg.num_envs);
        let frozen: &Policy = policy;
        let collected = par::map_mut(opts.mode, &mut workers, |_, w| w.collect(frozen, per_env, cfg));
        let mut samples = Vec::with_capacity(per_env * cfg.num_envs);
        let mut reward_sum = 0.0;
        for c in collected {
            let (s, r) = c?;
            samples.extend(s);
            reward_sum += r;
        }
        report.rollout_rewards.push(reward_sum / samples.len() as f64);
        let lr = cfg.lr * (1.0 - steps as f64 / total as f64).max(0.0);
        steps += samples.len() as u64;
        let stats = ppo_update(policy, &mut adam, &samples, cfg, lr, &mut shuffle)?;
        log::debug!(
            "update at step {steps}: rollout reward {:.3e} policy {:.4e} value {:.4e} entropy {:.3} kl {:.2e} clip {:.3}",
            reward_sum / samples.len() as f64,
            stats.loss.policy_loss,
            stats.loss.value_loss,
            stats.loss.entropy,
            stats.loss.approx_kl,
            stats.loss.clip_fraction
        );
        report.updates.push(stats);
        while next_ck <= n_ck && steps >= threshold(next_ck) {
            take_checkpoint(next_ck as usize, steps, policy, &mut report)?;
            next_ck += 1;
        }
    }
    report.steps = steps;

    if let Some(dir) = opts.out_dir {
        write_curve(&dir.join(CURVE_FILE), &report.curve, &prov)?;
    }
    Ok(report)
}

pub fn write_curve(path: &Path, curve: &[CurvePoint], prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["step", "mean_reward", "std_reward", "mean_e_f", "collision_rate"])?;
    for p in curve {
        w.write_record([
            p.step.to_string(),
            p.mean_reward.to_string(),
            p.std_reward.to_string(),
            p.mean_e_f.to_string(),
            p.collision_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
