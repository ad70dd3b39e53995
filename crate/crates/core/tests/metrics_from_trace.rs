//! Recomputes e_f and cr from emitted trace CSVs with an independent parser
//! and compares them with the values the evaluator reported.

use std::fs;

use formation_core::artifact::Provenance;
use formation_core::eval::{run_episode, write_trace, Controller, TRACE_COLUMNS};
use formation_core::scenario::{FollowerLaw, Mission, ScenarioConfig};

struct Row {
    agent: usize,
    p: [f64; 3],
    d: [f64; 3],
    collided: bool,
}

fn parse_trace(text: &str) -> (Provenance, Vec<Row>) {
    let mut lines = text.lines();
    let prov = Provenance::parse_header(lines.next().expect("header line")).expect("provenance header");
    let header: Vec<&str> = lines.next().expect("column line").split(',').collect();
    assert_eq!(header, TRACE_COLUMNS);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (ia, ix, ixd, ic) = (col("agent"), col("x"), col("x_des"), col("collided"));
    let rows = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |k: usize| f[k].parse::<f64>().unwrap();
            Row {
                agent: f[ia].parse().unwrap(),
                p: [num(ix), num(ix + 1), num(ix + 2)],
                d: [num(ixd), num(ixd + 1), num(ixd + 2)],
                collided: f[ic] == "1",
            }
        })
        .collect();
    (prov, rows)
}

fn brute_force(rows: &[Row], agent: usize, t_max: usize) -> (f64, f64) {
    let mine: Vec<&Row> = rows.iter().filter(|r| r.agent == agent).collect();
    assert_eq!(mine.len(), t_max);
    let mut e = 0.0;
    let mut c = 0usize;
    for r in mine {
        let dx = r.p[0] - r.d[0];
        let dy = r.p[1] - r.d[1];
        let dz = r.p[2] - r.d[2];
        e += (dx * dx + dy * dy + dz * dz).sqrt();
        c += usize::from(r.collided);
    }
    (e / t_max as f64, c as f64 / t_max as f64)
}

#[test]
fn reported_metrics_match_trace_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        t_max: 400,
        ..Default::default()
    };
    let laws = [FollowerLaw::Displacement, FollowerLaw::Distance, FollowerLaw::Angle];
    for ep in 0..20usize {
        let mission = Mission::ALL[ep % Mission::ALL.len()];
        let law = laws[ep % laws.len()];
        let (report, rows) = run_episode(&cfg, Controller::Law(law), mission, 7, ep, true).unwrap();
        let path = dir.path().join(format!("trace_{ep}.csv"));
        let prov = Provenance::new("0123456789abcdef", 7);
        write_trace(&path, &rows, &prov).unwrap();

        let (read_prov, parsed) = parse_trace(&fs::read_to_string(&path).unwrap());
        assert_eq!(read_prov, prov);
        assert_eq!(parsed.len(), cfg.t_max * cfg.n_agents);

        let (e_f, cr) = brute_force(&parsed, cfg.agent_a(), cfg.t_max);
        assert!((e_f - report.e_f).abs() <= 1e-12, "episode {ep}: {e_f} vs {}", report.e_f);
        assert!((cr - report.cr).abs() <= 1e-12, "episode {ep}: {cr} vs {}", report.cr);
        let all: f64 = (0..cfg.n_agents).map(|i| brute_force(&parsed, i, cfg.t_max).0).sum::<f64>()
            / cfg.n_agents as f64;
        assert!((all - report.e_f_all).abs() <= 1e-12, "episode {ep}");
    }
}
