//! Mission evaluation: formation error and collision rate per episode,
//! averages over episodes, traces, and the controller comparison table.

use std::path::Path;

use crate::artifact::{csv_writer, Provenance};
use crate::par::{self, ExecMode};
use crate::rl::{action_to_velocity, assemble_observation, Policy};
use crate::rng::{stream, Stream};
use crate::scenario::{spawn, Episode, FollowerLaw, Mission, ScenarioConfig};
use crate::sim::ActuationCommand;
use crate::vec3::Vec3;
use crate::{Error, Result};

/// `e_f = Σ_t ‖p(t) − p*(t)‖ / T_max`.
pub fn formation_error(actual: &[Vec3], desired: &[Vec3], t_max: usize) -> Result<f64> {
    if actual.len() != t_max {
        return Err(Error::Length {
            expected: t_max,
            got: actual.len(),
        });
    }
    if desired.len() != t_max {
        return Err(Error::Length {
            expected: t_max,
            got: desired.len(),
        });
    }
    let sum: f64 = actual.iter().zip(desired).map(|(p, d)| (*p - *d).norm()).sum();
    Ok(sum / t_max as f64)
}

/// `cr = Σ_t c(t) / T_max`.
pub fn collision_rate(flags: &[bool], t_max: usize) -> Result<f64> {
    if flags.len() != t_max {
        return Err(Error::Length {
            expected: t_max,
            got: flags.len(),
        });
    }
    Ok(flags.iter().filter(|&&c| c).count() as f64 / t_max as f64)
}

/// Column order of the comparison table.
pub const CONTROLLER_COLUMNS: [&str; 4] = ["Distance", "Displacement", "Angle", "GAT"];

/// Who drives the followers. With a learned policy only the evaluated agent
/// uses it; the other followers run the displacement law.
#[derive(Clone, Copy)]
pub enum Controller<'a> {
    Law(FollowerLaw),
    Learned(&'a Policy),
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Law(l) => l.name(),
            Controller::Learned(_) => "GAT",
        }
    }
}

/// One row per agent per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub agent: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub desired: Vec3,
    /// Leader link jammed when the command was computed.
    pub attacked: bool,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub mission: Mission,
    pub controller: &'static str,
    pub episode: usize,
    /// Evaluated (attackable) agent.
    pub e_f: f64,
    pub cr: f64,
    /// Mean of `e_f` over all agents, leader included.
    pub e_f_all: f64,
    /// `‖p_a(t) − p*_a(t)‖` per step.
    pub errors: Vec<f64>,
    /// Whether agent a's leader link was jammed at each step.
    pub attacked: Vec<bool>,
}

/// Runs one episode of `mission`. Spawns come from the episode stream of
/// `seed`, so every controller sees the same initial conditions.
pub fn run_episode(
    cfg: &ScenarioConfig,
    controller: Controller,
    mission: Mission,
    seed: u64,
    episode: usize,
    record_trace: bool,
) -> Result<(EpisodeReport, Vec<TraceRow>)> {
    let mut rng = stream(seed, Stream::Episode(episode as u64));
    let mut world = spawn(cfg, &mut rng);
    let mut ep = Episode::new(cfg, mission.trajectory_kind(&cfg.trajectory), 0.0, mission.under_attack());
    ep.place(&mut rng);
    let n = cfg.n_agents;
    let a = cfg.agent_a();
    let t_max = cfg.t_max;

    let mut actual = vec![Vec::with_capacity(t_max); n];
    let mut desired = vec![Vec::with_capacity(t_max); n];
    let mut flags_a = Vec::with_capacity(t_max);
    let mut attacked_a = Vec::with_capacity(t_max);
    let mut trace = Vec::with_capacity(if record_trace { t_max * n } else { 0 });

    for step in 0..t_max {
        let views = ep.views(&world);
        let cmds = match controller {
            Controller::Law(law) => ep.classical_commands(&world, &views, |_| Some(law)),
            Controller::Learned(policy) => {
                let mut c = ep.classical_commands(&world, &views, |i| (i != a).then_some(FollowerLaw::Displacement));
                let obs = assemble_observation(&world.drones[a], &views[a], cfg.comm.n_max);
                let act = policy.act(&obs, None)?;
                c[a] = ActuationCommand::VelocityCmd(action_to_velocity(act.action, cfg.physics.v_max));
                c
            }
        };
        world.step(&cmds, &cfg.physics, cfg.collision_threshold)?;
        for i in 0..n {
            let d = ep.desired_position(i, world.time);
            actual[i].push(world.drones[i].position);
            desired[i].push(d);
            if record_trace {
                trace.push(TraceRow {
                    step,
                    time: world.time,
                    agent: i,
                    position: world.drones[i].position,
                    velocity: world.drones[i].velocity,
                    desired: d,
                    attacked: !views[i].leader_link_alive,
                    collided: world.collision_flags[i],
                });
            }
        }
        flags_a.push(world.collision_flags[a]);
        attacked_a.push(!views[a].leader_link_alive);
    }

    let e_f = formation_error(&actual[a], &desired[a], t_max)?;
    let mut all = 0.0;
    for i in 0..n {
        all += formation_error(&actual[i], &desired[i], t_max)?;
    }
    let report = EpisodeReport {
        mission,
        controller: controller.name(),
        episode,
        e_f,
        cr: collision_rate(&flags_a, t_max)?,
        e_f_all: all / n as f64,
        errors: actual[a].iter().zip(&desired[a]).map(|(p, d)| (*p - *d).norm()).collect(),
        attacked: attacked_a,
    };
    Ok((report, trace))
}

/// Per-episode reports and their averages.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub mission: Mission,
    pub controller: &'static str,
    pub episodes: Vec<EpisodeReport>,
    pub e_f: f64,
    pub cr: f64,
    pub e_f_all: f64,
}

/// Averages `episodes` independent episodes (evaluated concurrently in
/// parallel mode, merged by episode index).
pub fn run_mission(
    cfg: &ScenarioConfig,
    controller: Controller,
    mission: Mission,
    episodes: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<MissionReport> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be >= 1"));
    }
    let reports = par::map_range(mode, episodes, |e| {
        run_episode(cfg, controller, mission, seed, e, false).map(|(r, _)| r)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let k = episodes as f64;
    Ok(MissionReport {
        mission,
        controller: controller.name(),
        e_f: reports.iter().map(|r| r.e_f).sum::<f64>() / k,
        cr: reports.iter().map(|r| r.cr).sum::<f64>() / k,
        e_f_all: reports.iter().map(|r| r.e_f_all).sum::<f64>() / k,
        episodes: reports,
    })
}

/// One `(e_f, cr)` cell; `None` when no learned policy was supplied.
pub type CompareCell = Option<(f64, f64)>;

/// Table II layout: one row per mission, one cell per controller column.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<(Mission, Vec<CompareCell>)>,
}

pub fn compare(
    cfg: &ScenarioConfig,
    policy: Option<&Policy>,
    missions: &[Mission],
    episodes: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<CompareTable> {
    let controllers: Vec<Option<Controller>> = vec![
        Some(Controller::Law(FollowerLaw::Distance)),
        Some(Controller::Law(FollowerLaw::Displacement)),
        Some(Controller::Law(FollowerLaw::Angle)),
        policy.map(Controller::Learned),
    ];
    let mut rows = Vec::with_capacity(missions.len());
    for &m in missions {
        let mut cells = Vec::with_capacity(controllers.len());
        for c in &controllers {
            cells.push(match c {
                Some(c) => {
                    let r = run_mission(cfg, *c, m, episodes, seed, mode)?;
                    Some((r.e_f, r.cr))
                }
                None => None,
            });
        }
        rows.push((m, cells));
    }
    Ok(CompareTable { rows })
}

pub fn write_compare(path: &Path, table: &CompareTable, prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    let mut header = vec!["mission"];
    header.extend(CONTROLLER_COLUMNS);
    w.write_record(&header)?;
    for (m, cells) in &table.rows {
        let mut rec = vec![m.name().to_string()];
        rec.extend(cells.iter().map(|c| match c {
            Some((e, cr)) => format!("{e:.6} / {cr:.6}"),
            None => "n/a".to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-episode rows followed by one `mean` row per mission report.
pub fn write_reports(path: &Path, reports: &[MissionReport], prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["mission", "controller", "episode", "e_f", "cr", "e_f_all_agents"])?;
    for r in reports {
        for e in &r.episodes {
            w.write_record([
                r.mission.name().to_string(),
                r.controller.to_string(),
                e.episode.to_string(),
                e.e_f.to_string(),
                e.cr.to_string(),
                e.e_f_all.to_string(),
            ])?;
        }
        w.write_record([
            r.mission.name().to_string(),
            r.controller.to_string(),
            "mean".to_string(),
            r.e_f.to_string(),
            r.cr.to_string(),
            r.e_f_all.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 14] = [
    "step", "time", "agent", "x", "y", "z", "vx", "vy", "vz", "x_des", "y_des", "z_des", "attacked", "collided",
];

pub fn write_trace(path: &Path, rows: &[TraceRow], prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.time.to_string(), r.agent.to_string()];
        for v in [r.position, r.velocity, r.desired] {
            rec.extend(v.0.iter().map(|x| x.to_string()));
        }
        rec.push(u8::from(r.attacked).to_string());
        rec.push(u8::from(r.collided).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
