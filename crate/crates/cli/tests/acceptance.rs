//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! value, the tolerance and the runtime.
//!
//! Results are reported, not asserted, so a failing criterion stays visible
//! without hiding the rest of the workspace tests. Environment switches:
//! - `ACCEPTANCE_STRICT=1`: exit non-zero if any criterion fails.
//! - `ACCEPTANCE_SKIP_TRAINING=1`: report the two training criteria as SKIP.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::RngExt;

use formation_cli::{cmd_compare, Common, COMPARE_FILE};
use formation_core::artifact::Provenance;
use formation_core::comm::{comm_view, dos_gate, CommConfig};
use formation_core::eval::{run_episode, run_mission, write_trace, Controller};
use formation_core::nn::{attention_coefficients, Activation, GatParams, Graph, Mlp, Tensor};
use formation_core::par::ExecMode;
use formation_core::rl::{
    assemble_observation, compute_advantages, train, FormationEnv, PointMassEnv, Policy, PolicyArch, PpoConfig,
    TrainOptions, TrainReport,
};
use formation_core::rng::{stream, Rng, Stream};
use formation_core::scenario::{FollowerLaw, Mission, ScenarioConfig};
use formation_core::sim::{DroneState, WorldState};
use formation_core::vec3::Vec3;

struct Outcome {
    pass: bool,
    detail: String,
}

enum Status {
    Done(Outcome),
    Skipped(&'static str),
}

fn outcome(pass: bool, detail: String) -> Status {
    Status::Done(Outcome { pass, detail })
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

// ---------------------------------------------------------------- GAT

fn gat_normalization() -> Status {
    const D: usize = 6;
    let mut rng = stream(101, Stream::Eval(0));
    let (mut worst_sum, mut min_alpha, mut masked_leak) = (0.0f64, f64::INFINITY, 0.0f64);
    for draw in 0..1000u64 {
        let params = GatParams::new(D, 4, 0.2, &mut stream(draw, Stream::Init));
        let n = 1 + rng.random_range(0..6usize);
        let scale = [0.1, 1.0, 10.0][draw as usize % 3];
        let h: Vec<f64> = (0..D).map(|_| uniform(&mut rng, -scale, scale)).collect();
        let nbrs: Vec<f64> = (0..n * D).map(|_| uniform(&mut rng, -scale, scale)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        let live = rng.random_range(0..n);
        mask[live] = true;
        let alpha = attention_coefficients(&h, &nbrs, &mask, &params).expect("attention");
        let sum: f64 = alpha.iter().zip(&mask).filter(|(_, &m)| m).map(|(a, _)| a).sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        for (&a, &m) in alpha.iter().zip(&mask) {
            min_alpha = min_alpha.min(a);
            if !m {
                masked_leak = masked_leak.max(a.abs());
            }
        }
    }
    outcome(
        worst_sum <= 1e-12 && min_alpha >= 0.0 && masked_leak == 0.0,
        format!(
            "1000 draws: max |Σα−1| = {worst_sum:.2e} (≤ 1e-12), min α = {min_alpha:.3e} (≥ 0), masked max = {masked_leak:.1e}"
        ),
    )
}

// ------------------------------------------------------- gradient check

const G_IN: usize = 6;
const G_OUT: usize = 8;
const G_NORMAL: usize = 6;
const G_BATCH: usize = 3;
const G_NMAX: usize = 6;

struct Composite {
    gat: GatParams,
    mlp: Mlp,
    inputs: [Vec<f64>; 4],
    mask: Vec<bool>,
}

impl Composite {
    fn random(seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Init);
        let gat = GatParams::new(G_IN, G_OUT, 0.2, &mut rng);
        let hidden = if seed.is_multiple_of(2) { Activation::Tanh } else { Activation::Relu };
        let mlp = Mlp::new(&[G_NORMAL + G_OUT, 12, 12, 3], hidden, Activation::Tanh, 1.0, &mut rng);
        let mut u = |n: usize| (0..n).map(|_| uniform(&mut rng, -2.0, 2.0)).collect::<Vec<_>>();
        let inputs = [
            u(G_BATCH * G_NORMAL),
            u(G_BATCH * G_IN),
            u(G_BATCH * G_NMAX * G_IN),
            u(G_BATCH * 3),
        ];
        let mut mask: Vec<bool> = (0..G_BATCH * G_NMAX).map(|k| k % G_NMAX == 0 || rng.random::<f64>() < 0.6).collect();
        mask[0] = true;
        Self { gat, mlp, inputs, mask }
    }

    fn loss(&self, grads: bool) -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let gv = self.gat.bind(&mut g);
        let mv = self.mlp.bind(&mut g);
        let [normal, ego, nbrs, w] = &self.inputs;
        let normal = g.input(normal.clone(), &[G_BATCH, G_NORMAL]).unwrap();
        let ego = g.input(ego.clone(), &[G_BATCH, G_IN]).unwrap();
        let nbrs = g.input(nbrs.clone(), &[G_BATCH * G_NMAX, G_IN]).unwrap();
        let s = gv.encode(&mut g, ego, nbrs, &self.mask).unwrap();
        let x = g.concat(normal, s).unwrap();
        let y = mv.forward(&mut g, x).unwrap();
        let w = g.input(w.clone(), &[G_BATCH, 3]).unwrap();
        let wy = g.mul(y, w).unwrap();
        let loss = g.sum(wy);
        let value = g.scalar(loss);
        if !grads {
            return (value, Vec::new());
        }
        g.backward(loss).unwrap();
        let vars: Vec<_> = gv.vars().into_iter().chain(mv.vars()).collect();
        (value, vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect())
    }

    fn param_mut(&mut self, k: usize) -> &mut Tensor {
        let mut all: Vec<&mut Tensor> = self.gat.params_mut();
        all.extend(self.mlp.params_mut());
        all.swap_remove(k)
    }
}

fn gradient_fidelity() -> Status {
    const EPS: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..100 {
        let mut c = Composite::random(seed);
        let (_, analytic) = c.loss(true);
        for (k, grad) in analytic.iter().enumerate() {
            for (idx, &a) in grad.iter().enumerate() {
                let orig = c.param_mut(k).data[idx];
                c.param_mut(k).data[idx] = orig + EPS;
                let fp = c.loss(false).0;
                c.param_mut(k).data[idx] = orig - EPS;
                let fm = c.loss(false).0;
                c.param_mut(k).data[idx] = orig;
                let n = (fp - fm) / (2.0 * EPS);
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("100 composites, {checked} parameters: max relative error {worst:.3e} (< 1e-4)"),
    )
}

// ------------------------------------------------------ classical laws

fn classical_stability() -> Status {
    let cfg = ScenarioConfig::default();
    let tail = (5.0 / cfg.physics.dt).round() as usize;
    let mut worst = 0.0f64;
    for ep in 0..10 {
        let (r, _) = run_episode(
            &cfg,
            Controller::Law(FollowerLaw::Displacement),
            Mission::CircleNoAttack,
            0,
            ep,
            false,
        )
        .expect("episode");
        let e = &r.errors[cfg.t_max - tail..];
        worst = worst.max(e.iter().sum::<f64>() / tail as f64);
    }
    outcome(
        worst < 0.05,
        format!("Circle, link alive, 10 spawns: worst e_f over last 5 s = {worst:.4} m (< 0.05)"),
    )
}

fn dos_gating() -> Status {
    let cfg = CommConfig::default();
    let mut problems = Vec::new();
    // sweep along +x: exactly representable distances, one flip at κ
    let steps = 4096;
    let mut flips = Vec::new();
    let mut prev = None;
    for k in 0..=steps {
        let r = 6.0 * k as f64 / steps as f64;
        let (alive, rel) = dos_gate(cfg.p_dos + Vec3::new(r, 0.0, 0.0), Vec3::new(0.3, 0.2, 0.1), &cfg);
        if !alive && rel.0.iter().any(|x| x.to_bits() != 0) {
            problems.push(format!("non-zero rel at r = {r}"));
        }
        if prev.is_some_and(|p| p != alive) {
            flips.push(r);
        }
        prev = Some(alive);
    }
    let boundary_dead = !dos_gate(cfg.p_dos + Vec3::new(cfg.kappa, 0.0, 0.0), Vec3::ZERO, &cfg).0;
    let next_up = f64::from_bits(cfg.kappa.to_bits() + 1);
    let just_out_alive = dos_gate(cfg.p_dos + Vec3::new(next_up, 0.0, 0.0), Vec3::ZERO, &cfg).0;
    if flips.len() != 1 || !boundary_dead || !just_out_alive {
        problems.push(format!("flips at {flips:?}, boundary dead {boundary_dead}, next float alive {just_out_alive}"));
    }

    // random placements against an independent closed-ball oracle
    let mut rng = stream(202, Stream::Eval(1));
    let mut dead_count = 0;
    for _ in 0..10_000 {
        let p = cfg.p_dos
            + Vec3::new(
                uniform(&mut rng, -5.0, 5.0),
                uniform(&mut rng, -5.0, 5.0),
                uniform(&mut rng, -5.0, 5.0),
            );
        let leader = Vec3::new(
            uniform(&mut rng, -5.0, 5.0),
            uniform(&mut rng, -5.0, 5.0),
            uniform(&mut rng, -5.0, 5.0),
        );
        let d = [p[0] - cfg.p_dos[0], p[1] - cfg.p_dos[1], p[2] - cfg.p_dos[2]];
        let dead = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= cfg.kappa;
        let world = WorldState::new(vec![
            DroneState::at_rest(leader, 1.0),
            DroneState::at_rest(p, 1.0),
        ]);
        let view = comm_view(&world, 1, &cfg);
        let obs = assemble_observation(&world.drones[1], &view, cfg.n_max);
        let zeroed = view.rel_to_leader.0.iter().chain(&view.leader_velocity.0).all(|x| x.to_bits() == 0)
            && obs.normal[3..].iter().all(|x| x.to_bits() == 0);
        if view.leader_link_alive == dead || (dead && !zeroed) {
            problems.push(format!("placement {p:?}: alive {} oracle dead {dead}", view.leader_link_alive));
        }
        dead_count += usize::from(dead);
    }
    let detail = if problems.is_empty() {
        format!(
            "sweep flips once at r = {:.6} (κ = {}), boundary dead; 10000 placements ({dead_count} dead) match oracle, dead links bitwise zero",
            flips[0], cfg.kappa
        )
    } else {
        format!("{} problems, first: {}", problems.len(), problems[0])
    };
    outcome(problems.is_empty(), detail)
}

fn negative_control() -> Status {
    let cfg = ScenarioConfig::default();
    let run = |m| {
        run_mission(&cfg, Controller::Law(FollowerLaw::Displacement), m, 10, 0, ExecMode::default())
            .expect("mission")
            .e_f
    };
    let attacked = run(Mission::Circle);
    let clean = run(Mission::CircleNoAttack);
    let ratio = attacked / clean;
    outcome(
        ratio >= 3.0,
        format!("displacement e_f: Circle under DoS {attacked:.4} vs no attack {clean:.4}, ratio {ratio:.2}× (≥ 3×)"),
    )
}

// ----------------------------------------------------------- training

fn desk_ppo() -> PpoConfig {
    PpoConfig {
        buffer: 4096,
        batch: 256,
        epochs: 10,
        num_envs: 8,
        horizon: 128,
        eval_episodes: 8,
        lr: 1e-3,
        ..Default::default()
    }
}

fn desk_arch() -> PolicyArch {
    PolicyArch {
        hidden: 64,
        gat_dim: 16,
        ..Default::default()
    }
}

fn run_training<E, F>(make_env: F, total_steps: u64) -> (Policy, TrainReport)
where
    E: formation_core::rl::Env,
    F: Fn() -> E + Sync,
{
    let mut policy = Policy::new(desk_arch(), &mut stream(0, Stream::Init));
    let cfg = PpoConfig {
        total_steps,
        ..desk_ppo()
    };
    let report = train(
        make_env,
        &mut policy,
        &cfg,
        &TrainOptions {
            seed: 0,
            mode: ExecMode::default(),
            out_dir: None,
            config_hash: "acceptance",
        },
    )
    .expect("training");
    (policy, report)
}

fn ppo_sanity() -> Status {
    let (_, report) = run_training(|| PointMassEnv::new(200, 6), 100_000);
    let first = report.curve.first().unwrap().mean_reward;
    let last = report.curve.last().unwrap().mean_reward;
    let improvement = (last - first) / first.abs();
    outcome(
        improvement >= 0.8,
        format!(
            "point mass, 100k steps, width 64: reward {first:.4} → {last:.4}, improvement {:.1}% (≥ 80%)",
            improvement * 100.0
        ),
    )
}

fn resilience() -> Status {
    let scenario = ScenarioConfig::default();
    let s = scenario.clone();
    let (policy, report) = run_training(move || FormationEnv::new(s.clone(), 0.1, 0.5), 500_000);
    let run = |c| run_mission(&scenario, c, Mission::Circle, 10, 0, ExecMode::default()).expect("mission").e_f;
    let learned = run(Controller::Learned(&policy));
    let baseline = run(Controller::Law(FollowerLaw::Displacement));
    let ratio = learned / baseline;
    // consecutive checkpoints may not drop by more than the larger std
    let curve = &report.curve;
    let drops: Vec<usize> = (1..curve.len())
        .filter(|&k| {
            let band = curve[k].std_reward.max(curve[k - 1].std_reward);
            curve[k].mean_reward < curve[k - 1].mean_reward - band
        })
        .collect();
    let rewards: Vec<String> = curve.iter().map(|p| format!("{:.3}", p.mean_reward)).collect();
    outcome(
        ratio < 0.5 && drops.is_empty(),
        format!(
            "500k steps: Circle under DoS e_f GAT {learned:.4} vs displacement {baseline:.4}, ratio {ratio:.2} (< 0.5); \
             curve [{}] drops beyond std band at checkpoints {drops:?} (none allowed)",
            rewards.join(", ")
        ),
    )
}

// -------------------------------------------------- metrics and GAE

fn metric_oracle() -> Status {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = ScenarioConfig {
        t_max: 400,
        ..Default::default()
    };
    let laws = [FollowerLaw::Displacement, FollowerLaw::Distance, FollowerLaw::Angle];
    let mut worst = 0.0f64;
    for ep in 0..20usize {
        let mission = Mission::ALL[ep % Mission::ALL.len()];
        let (report, rows) =
            run_episode(&cfg, Controller::Law(laws[ep % 3]), mission, 11, ep, true).expect("episode");
        let path = dir.path().join(format!("trace_{ep}.csv"));
        write_trace(&path, &rows, &Provenance::new("acceptance", 11)).expect("trace");
        let text = fs::read_to_string(&path).expect("read trace");
        let mut lines = text.lines().skip(1);
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |n: &str| header.iter().position(|h| *h == n).unwrap();
        let (ia, ix, ixd, ic) = (col("agent"), col("x"), col("x_des"), col("collided"));
        let mut err = vec![0.0; cfg.n_agents];
        let mut hits = vec![0usize; cfg.n_agents];
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            let v = |k: usize| f[k].parse::<f64>().unwrap();
            let i: usize = f[ia].parse().unwrap();
            let d = [v(ix) - v(ixd), v(ix + 1) - v(ixd + 1), v(ix + 2) - v(ixd + 2)];
            err[i] += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            hits[i] += usize::from(f[ic] == "1");
        }
        let t = cfg.t_max as f64;
        let a = cfg.agent_a();
        let all = err.iter().sum::<f64>() / t / cfg.n_agents as f64;
        worst = worst
            .max((err[a] / t - report.e_f).abs())
            .max((hits[a] as f64 / t - report.cr).abs())
            .max((all - report.e_f_all).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("20 episodes recomputed from trace CSVs: max |Δ| over e_f, cr = {worst:.2e} (≤ 1e-12)"),
    )
}

fn gae_degeneracy() -> Status {
    let gamma = 0.99;
    let mut mismatches = 0usize;
    let mut entries = 0usize;
    for seed in 0..1000u64 {
        let mut rng = stream(seed, Stream::Shuffle);
        let n = rng.random_range(1..200usize);
        let r: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let v: Vec<f64> = (0..=n).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.05).collect();
        let (adv, _) = compute_advantages(&r, &v, &d, gamma, 0.0).expect("gae");
        for t in 0..n {
            let next = if d[t] { 0.0 } else { v[t + 1] };
            mismatches += usize::from(adv[t] != r[t] + gamma * next - v[t]);
            entries += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("λ = 0 on 1000 buffers: {mismatches} of {entries} advantages differ from r + γV′ − V (exact)"),
    )
}

fn determinism() -> Status {
    let dir = tempfile::tempdir().expect("tempdir");
    let bytes: Vec<Vec<u8>> = ["first", "second"]
        .iter()
        .map(|run| {
            let out: PathBuf = dir.path().join(run);
            let common = Common {
                config: None,
                seed: Some(7),
                out: Some(out),
            };
            let path = cmd_compare(&common, None, None).expect("compare");
            assert!(path.ends_with(COMPARE_FILE));
            fs::read(path).expect("read compare")
        })
        .collect();
    outcome(
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!(
            "cmd_compare seed 7 twice: {} and {} bytes, identical = {}",
            bytes[0].len(),
            bytes[1].len(),
            bytes[0] == bytes[1]
        ),
    )
}

fn main() -> ExitCode {
    let skip_training = std::env::var_os("ACCEPTANCE_SKIP_TRAINING").is_some();
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    type Check = fn() -> Status;
    let training_skip = || Status::Skipped("ACCEPTANCE_SKIP_TRAINING is set");
    let checks: [(&str, Duration, Check); 10] = [
        ("GAT normalization", Duration::from_secs(5), gat_normalization),
        ("Gradient fidelity", Duration::from_secs(120), gradient_fidelity),
        ("Classical stability", Duration::from_secs(30), classical_stability),
        ("DoS gating exactness", Duration::MAX, dos_gating),
        ("Negative control", Duration::from_secs(60), negative_control),
        ("PPO sanity task", Duration::from_secs(600), ppo_sanity),
        ("Resilience headline", Duration::from_secs(7200), resilience),
        ("Metric oracle", Duration::MAX, metric_oracle),
        ("GAE degeneracy", Duration::MAX, gae_degeneracy),
        ("Determinism", Duration::MAX, determinism),
    ];
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (name, budget, check) in checks {
        let is_training = matches!(name, "PPO sanity task" | "Resilience headline");
        let start = Instant::now();
        let status = if is_training && skip_training { training_skip() } else { check() };
        let elapsed = start.elapsed();
        let budget_note = if budget == Duration::MAX {
            String::new()
        } else {
            format!(" / budget {}s", budget.as_secs())
        };
        match status {
            Status::Done(o) => {
                let in_time = elapsed <= budget;
                let pass = o.pass && in_time;
                let time_note = if in_time { "" } else { " — over runtime budget" };
                println!(
                    "{} {name}: {} [{:.1}s{budget_note}{time_note}]",
                    if pass { "PASS" } else { "FAIL" },
                    o.detail,
                    elapsed.as_secs_f64()
                );
                if pass {
                    passed += 1;
                } else {
                    failed += 1;
                }
            }
            Status::Skipped(why) => {
                println!("SKIP {name}: {why}");
                skipped += 1;
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
