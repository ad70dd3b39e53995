//! Command-line entry points: `train`, `eval`, `compare`, `trace`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use formation_core::artifact::Provenance;
use formation_core::config::{ControllerKind, RunConfig};
use formation_core::eval::{self, Controller, MissionReport};
use formation_core::rl::{self, FormationEnv, Policy, TrainOptions};
use formation_core::rng::{stream, Stream};
use formation_core::scenario::Mission;

pub const COMPARE_FILE: &str = "compare.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(name = "formation", version, about = "Resilient multi-drone formation control: train, evaluate, compare")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the resilient policy with PPO; writes checkpoints and the
    /// training curve.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one controller on one or all missions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint (required for the gat controller).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Mission name; all missions when omitted.
        #[arg(long)]
        mission: Option<String>,
        /// distance | displacement | angle | gat
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Table of e_f / cr for every mission and controller.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint for the GAT column (n/a when omitted).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Full per-agent trajectory of one episode.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "CircleNoAttack")]
        mission: String,
        #[arg(long)]
        controller: Option<String>,
    },
}

/// Loads the config and applies command-line overrides, then validates.
pub fn resolve_config(common: &Common, episodes: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig) -> Result<Provenance> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    cfg.save(&cfg.out_dir.join(CONFIG_FILE))?;
    Ok(Provenance::new(cfg.config_hash(), cfg.seed))
}

fn load_policy(path: &Path) -> Result<Policy> {
    if !path.is_file() {
        bail!("checkpoint not found: {}", path.display());
    }
    let (policy, ck) = Policy::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    log::info!(
        "loaded checkpoint {} (step {}, config {}, seed {})",
        path.display(),
        ck.step,
        ck.config_hash,
        ck.seed
    );
    Ok(policy)
}

fn controller_kind(arg: Option<&str>, cfg: &RunConfig, has_checkpoint: bool) -> Result<ControllerKind> {
    Ok(match arg {
        Some(s) => s.parse()?,
        None if has_checkpoint => ControllerKind::Gat,
        None => cfg.controller,
    })
}

fn controller<'a>(kind: ControllerKind, policy: Option<&'a Policy>) -> Result<Controller<'a>> {
    match (kind.law(), policy) {
        (Some(law), _) => Ok(Controller::Law(law)),
        (None, Some(p)) => Ok(Controller::Learned(p)),
        (None, None) => bail!("the gat controller needs --checkpoint"),
    }
}

pub fn cmd_train(common: &Common) -> Result<PathBuf> {
    let cfg = resolve_config(common, None)?;
    let prov = prepare_out(&cfg)?;
    let mut policy = Policy::new(cfg.policy, &mut stream(cfg.seed, Stream::Init));
    let scenario = cfg.scenario.clone();
    let (l1, l2) = (cfg.ppo.lambda1, cfg.ppo.lambda2);
    let report = rl::train(
        || FormationEnv::new(scenario.clone(), l1, l2),
        &mut policy,
        &cfg.ppo,
        &TrainOptions {
            seed: cfg.seed,
            mode: cfg.exec,
            out_dir: Some(&cfg.out_dir),
            config_hash: &prov.config_hash,
        },
    )?;
    log::info!("trained {} steps; {} checkpoints", report.steps, report.checkpoints.len());
    Ok(cfg.out_dir.join(rl::train::CURVE_FILE))
}

pub fn cmd_eval(
    common: &Common,
    checkpoint: Option<&Path>,
    mission: Option<&str>,
    controller_arg: Option<&str>,
    episodes: Option<usize>,
) -> Result<PathBuf> {
    let cfg = resolve_config(common, episodes)?;
    let policy = checkpoint.map(load_policy).transpose()?;
    let missions = match mission {
        Some(m) => vec![m.parse::<Mission>()?],
        None => Mission::ALL.to_vec(),
    };
    let kind = controller_kind(controller_arg, &cfg, policy.is_some())?;
    let ctrl = controller(kind, policy.as_ref())?;
    let prov = prepare_out(&cfg)?;
    let reports = missions
        .iter()
        .map(|&m| eval::run_mission(&cfg.scenario, ctrl, m, cfg.episodes, cfg.seed, cfg.exec))
        .collect::<formation_core::Result<Vec<MissionReport>>>()?;
    for r in &reports {
        log::info!("{} / {}: e_f {:.4}, cr {:.4}", r.mission, r.controller, r.e_f, r.cr);
    }
    let path = cfg.out_dir.join(EVAL_FILE);
    eval::write_reports(&path, &reports, &prov)?;
    Ok(path)
}

pub fn cmd_compare(common: &Common, checkpoint: Option<&Path>, episodes: Option<usize>) -> Result<PathBuf> {
    let cfg = resolve_config(common, episodes)?;
    let policy = checkpoint.map(load_policy).transpose()?;
    let prov = prepare_out(&cfg)?;
    let table = eval::compare(&cfg.scenario, policy.as_ref(), &Mission::ALL, cfg.episodes, cfg.seed, cfg.exec)?;
    let path = cfg.out_dir.join(COMPARE_FILE);
    eval::write_compare(&path, &table, &prov)?;
    Ok(path)
}

pub fn cmd_trace(
    common: &Common,
    checkpoint: Option<&Path>,
    mission: &str,
    controller_arg: Option<&str>,
) -> Result<PathBuf> {
    let cfg = resolve_config(common, None)?;
    let mission: Mission = mission.parse()?;
    let policy = checkpoint.map(load_policy).transpose()?;
    let kind = controller_kind(controller_arg, &cfg, policy.is_some())?;
    let ctrl = controller(kind, policy.as_ref())?;
    let prov = prepare_out(&cfg)?;
    let (report, rows) = eval::run_episode(&cfg.scenario, ctrl, mission, cfg.seed, 0, true)?;
    log::info!("{} / {}: e_f {:.4}, cr {:.4}", mission, report.controller, report.e_f, report.cr);
    let path = cfg.out_dir.join(TRACE_FILE);
    eval::write_trace(&path, &rows, &prov)?;
    Ok(path)
}

/// Dispatches a parsed command line; returns the main artifact's path.
pub fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Train { common } => cmd_train(&common),
        Command::Eval {
            common,
            checkpoint,
            mission,
            controller,
            episodes,
        } => cmd_eval(
            &common,
            checkpoint.as_deref(),
            mission.as_deref(),
            controller.as_deref(),
            episodes,
        ),
        Command::Compare {
            common,
            checkpoint,
            episodes,
        } => cmd_compare(&common, checkpoint.as_deref(), episodes),
        Command::Trace {
            common,
            checkpoint,
            mission,
            controller,
        } => cmd_trace(&common, checkpoint.as_deref(), &mission, controller.as_deref()),
    }
}
