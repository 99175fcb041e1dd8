use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use takeover_core::physio::{write_gaze, GazeSample};

fn takeover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_takeover"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = takeover(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--seed", "3", "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn theta_rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(String::from).collect())
        .collect()
}

#[test]
fn fixed_theta_trace_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "sim", &["--fixed-theta", "0.3,1.5,4,6"]);
    let rows = theta_rows(&out.join("episodes/ep_0000.theta.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r == &["0.3", "1.5", "4", "6"]));
    assert!(out.join("manifest.toml").exists());
    assert!(read(out.join("summary.csv")).starts_with("episode,outcome,t_col,frames,total_reward"));
}

#[test]
fn drift_changes_every_five_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "sim", &["--schedule", "drift", "--count", "2"]);
    for i in 0..2 {
        let rows = theta_rows(&out.join(format!("episodes/ep_{i:04}.theta.csv")));
        for t in 1..rows.len() {
            if t % 5 != 0 {
                assert_eq!(rows[t], rows[t - 1]);
            }
        }
    }
}

#[test]
fn same_arguments_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &["--count", "3"]);
    let b = simulate(dir.path(), "b", &["--count", "3"]);
    for f in ["summary.csv", "episodes/ep_0002.csv", "episodes/ep_0002.theta.csv", "episodes/ep_0002.scenario.toml"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
}

#[test]
fn infer_writes_trace_and_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &[]);
    let traj = sim.join("episodes/ep_0000.csv");
    let (a, b) = (dir.path().join("i1"), dir.path().join("i2"));
    for out in [&a, &b] {
        ok(&["infer", "--seed", "5", "--trajectory", p(&traj), "--out", p(out)]);
    }
    let trace = read(a.join("posterior.csv"));
    assert!(trace.starts_with("t,mean_sigma0,mean_sigmax,mean_c,mean_d,"));
    assert_eq!(trace, read(b.join("posterior.csv")));
    let recovery = read(a.join("recovery.csv"));
    assert_eq!(recovery.lines().count(), 5);
    assert!(recovery.lines().skip(1).map(|l| l.split(',').next().unwrap()).eq(["sigma0", "sigma_max", "c", "d"]));
}

#[test]
fn missing_trajectory_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = takeover(&["infer", "--trajectory", "/nonexistent/ep.csv", "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ep.csv"));
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = p(dir.path());
    assert_eq!(takeover(&["simulate", "--out", o, "--fixed-theta", "3,0,0,0"]).status.code(), Some(1));
    assert_eq!(takeover(&["simulate", "--out", o, "--fixed-theta", "0.1,0.2"]).status.code(), Some(1));
    assert_eq!(takeover(&["simulate"]).status.code(), Some(1));
    assert_eq!(takeover(&["bogus"]).status.code(), Some(1));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[filter]\nn_particles = 1\n").unwrap();
    assert_eq!(takeover(&["simulate", "--out", o, "--config", p(&cfg)]).status.code(), Some(1));
    std::fs::write(&cfg, "[nope]\n").unwrap();
    assert_eq!(takeover(&["simulate", "--out", o, "--config", p(&cfg)]).status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_takeover"))
        .args(["simulate", "--out", o])
        .env("TC_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[simulate]\nmax_steps = 7\n").unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&out), "--count", "2"]);
    for line in read(out.join("summary.csv")).lines().skip(1) {
        let frames: usize = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(frames <= 8, "{line}");
    }
}

#[test]
fn empty_corpus_warns_and_reports_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let out = dir.path().join("bench");
    let res = ok(&["bench", "--corpus", p(&corpus), "--out", p(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("no episodes"));
    assert_eq!(read(out.join("coverage.csv")).lines().count(), 1);
}

#[test]
fn bench_threshold_override_and_method_subset() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--count", "2"]);
    let out = dir.path().join("bench");
    ok(&[
        "bench", "--corpus", p(&sim), "--out", p(&out), "--thresholds", "0.5,1,2,3", "--method", "cv,off",
    ]);
    let cov = read(out.join("coverage.csv"));
    let mut lines = cov.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.iter().filter(|h| h.starts_with("coverage_")).count(), 4);
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["cv", "cognition_off"]);
    assert!(read(out.join("bench.csv")).starts_with("episode,method,"));

    let bad = takeover(&["bench", "--corpus", p(&sim), "--out", p(&out), "--method", "psychic"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn physio_from_gaze_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &[]);
    let inf = dir.path().join("inf");
    ok(&["infer", "--trajectory", p(&sim.join("episodes/ep_0000.csv")), "--out", p(&inf)]);

    // still gaze, steady pupil
    let gaze: Vec<GazeSample> = (0..400)
        .map(|t| GazeSample {
            t,
            x: 960.0,
            y: 540.0,
            pupil: 3.5,
            valid: true,
        })
        .collect();
    let gaze_path = dir.path().join("gaze.csv");
    write_gaze(&gaze_path, &gaze).unwrap();

    let groups = dir.path().join("groups.csv");
    let mut text = String::from("dimension,level,parameter,value\n");
    for (level, vals) in [("a", [1, 2, 3]), ("b", [4, 5, 6])] {
        for v in vals {
            text.push_str(&format!("tor,{level},c,{v}\n"));
        }
    }
    std::fs::write(&groups, text).unwrap();

    let out = dir.path().join("phys");
    ok(&[
        "physio",
        "--gaze",
        p(&gaze_path),
        "--posterior",
        p(&inf.join("posterior.csv")),
        "--groups",
        p(&groups),
        "--out",
        p(&out),
    ]);
    let m = read(out.join("match.csv"));
    assert_eq!(m.lines().count(), 4);
    for line in m.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        // no physiological segments on a still gaze
        assert_eq!(cols[3], "0", "{line}");
    }
    let report = read(out.join("report.csv"));
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..2], ["tor", "c"]);
    assert!((row[2].parse::<f64>().unwrap() - 13.5).abs() < 1e-9);

    let lonely = takeover(&["physio", "--gaze", p(&gaze_path), "--out", p(&out)]);
    assert_eq!(lonely.status.code(), Some(1));
}

#[test]
fn rerun_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--count", "2", "--schedule", "drift"]);
    let again = dir.path().join("again");
    ok(&["rerun", "--manifest", p(&sim.join("manifest.toml")), "--out", p(&again)]);
    for f in ["summary.csv", "episodes/ep_0001.csv", "episodes/ep_0001.theta.csv"] {
        assert_eq!(read(sim.join(f)), read(again.join(f)), "{f}");
    }
    assert!(read(again.join("manifest.toml")).contains(p(&again)));
}
