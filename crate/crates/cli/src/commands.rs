use std::path::{Path, PathBuf};

use anyhow::Context;
use log::warn;
use takeover_core::filter::{read_posterior_means, run_filter, write_posterior_trace, EpisodeContext};
use takeover_core::io::{csv_bytes, fmt_f64, load_toml, read_trajectory, save_toml, write_atomic, write_trajectory};
use takeover_core::physio::{self, GroupedObservation, PARAMETERS};
use takeover_core::predict::{
    bench_csv, evaluate_corpus, false_flag_rate, lead_time_coverage, EpisodeEvaluation, Method,
};
use takeover_core::sim::{self, prior_mean, read_theta_trace, write_theta_trace, ThetaSchedule};
use takeover_core::{CognitiveParams, Error, ScenarioConfig, DT};

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::{BenchArgs, Cli, Command, Common, InferArgs, PhysioArgs, RerunArgs, ScheduleKind, SimulateArgs};

pub fn dispatch(command: Command, args: Vec<String>) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => simulate(&a, args),
        Command::Infer(a) => infer(&a, args),
        Command::Bench(a) => bench(&a, args),
        Command::Physio(a) => physio_cmd(&a, args),
        Command::Rerun(a) => rerun(&a),
    }
}

fn start(name: &str, common: &Common, args: Vec<String>) -> anyhow::Result<RunConfig> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    RunManifest::new(name, common.config.as_deref(), common.seed, &common.out, args).write()?;
    Ok(cfg)
}

fn episode_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf, PathBuf) {
    let stem = format!("ep_{i:04}");
    (
        dir.join(format!("{stem}.csv")),
        dir.join(format!("{stem}.theta.csv")),
        dir.join(format!("{stem}.scenario.toml")),
    )
}

/// `ep_0003.csv` -> (`ep_0003.theta.csv`, `ep_0003.scenario.toml`).
fn sidecars(trajectory: &Path) -> (PathBuf, PathBuf) {
    let stem = trajectory.file_stem().and_then(|s| s.to_str()).unwrap_or("episode");
    let dir = trajectory.parent().unwrap_or(Path::new("."));
    (dir.join(format!("{stem}.theta.csv")), dir.join(format!("{stem}.scenario.toml")))
}

fn simulate(a: &SimulateArgs, args: Vec<String>) -> anyhow::Result<()> {
    if let Some(v) = &a.fixed_theta {
        if v.len() != 4 {
            return Err(Error::Config(format!("--fixed-theta takes 4 values, got {}", v.len())).into());
        }
    }
    let cfg = start("simulate", &a.common, args)?;
    let schedule = match (&a.fixed_theta, a.schedule) {
        (Some(v), _) => ThetaSchedule::fixed(CognitiveParams::new(v[0], v[1], v[2], v[3])?),
        (None, ScheduleKind::Resample) => ThetaSchedule::resample(),
        (None, ScheduleKind::Drift) => ThetaSchedule::drift(),
    };
    let configs: Vec<_> = (0..a.count as u64)
        .map(|i| {
            let mut c = sim::corpus_episode_config(a.common.seed, i, &schedule, cfg.gains);
            c.max_steps = cfg.simulate.max_steps;
            c.perception_noise = cfg.simulate.perception_noise;
            c
        })
        .collect();
    let episodes = {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(sim::simulate_episode)
            .collect::<takeover_core::Result<Vec<_>>>()?
    };
    let dir = a.common.out.join("episodes");
    std::fs::create_dir_all(&dir)?;
    let mut rows = Vec::new();
    for (i, ep) in episodes.iter().enumerate() {
        let (traj, theta, scenario) = episode_paths(&dir, i);
        write_trajectory(&ep.frames, &traj)?;
        write_theta_trace(&theta, &ep.theta)?;
        save_toml(&ep.config.scenario, &scenario)?;
        rows.push(vec![
            i.to_string(),
            format!("{:?}", ep.outcome).to_lowercase(),
            ep.t_col().map(|t| t.to_string()).unwrap_or_default(),
            ep.frames.len().to_string(),
            fmt_f64(ep.total_reward),
        ]);
    }
    write_atomic(
        &a.common.out.join("summary.csv"),
        &csv_bytes(&["episode", "outcome", "t_col", "frames", "total_reward"], rows)?,
    )?;
    Ok(())
}

fn load_episode(trajectory: &Path, scenario: Option<&Path>) -> anyhow::Result<EpisodeContext> {
    let frames = read_trajectory(trajectory).with_context(|| format!("reading {}", trajectory.display()))?;
    let scenario_path = scenario.map_or_else(|| sidecars(trajectory).1, Path::to_path_buf);
    let scenario: ScenarioConfig =
        load_toml(&scenario_path).with_context(|| format!("reading {}", scenario_path.display()))?;
    Ok(EpisodeContext::new(scenario, frames)?)
}

fn infer(a: &InferArgs, args: Vec<String>) -> anyhow::Result<()> {
    let cfg = start("infer", &a.common, args)?;
    let ctx = load_episode(&a.trajectory, a.scenario.as_deref())?;
    let mut fc = cfg.filter.clone();
    fc.seed = a.common.seed;
    if let Some(w) = a.window {
        fc.window = w;
    }
    let steps = run_filter(&ctx, &fc, &cfg.gains)?;
    write_posterior_trace(&a.common.out.join("posterior.csv"), &steps)?;

    let theta_path = sidecars(&a.trajectory).0;
    if theta_path.exists() {
        let truth = read_theta_trace(&theta_path)?;
        let last = steps.last().expect("run_filter yields at least one step");
        let t_true = truth
            .get(last.t)
            .ok_or_else(|| Error::Validation(format!("theta trace has no row for t = {}", last.t)))?
            .to_array();
        let prior = prior_mean(&fc.bounds).to_array();
        let post = last.posterior.mean.to_array();
        let rows = (0..4).map(|k| {
            vec![
                CognitiveParams::NAMES[k].to_string(),
                fmt_f64(t_true[k]),
                fmt_f64(post[k]),
                fmt_f64((post[k] - t_true[k]).abs()),
                fmt_f64((prior[k] - t_true[k]).abs()),
            ]
        });
        write_atomic(
            &a.common.out.join("recovery.csv"),
            &csv_bytes(
                &["parameter", "true_value", "posterior_mean", "abs_error", "prior_abs_error"],
                rows,
            )?,
        )?;
    }
    Ok(())
}

fn corpus_files(corpus: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let dir = if corpus.join("episodes").is_dir() {
        corpus.join("episodes")
    } else {
        corpus.to_path_buf()
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading corpus {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(".theta.csv")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn parse_method(s: &str) -> takeover_core::Result<Method> {
    if s == "off" {
        Ok(Method::CognitionOff)
    } else {
        s.parse()
    }
}

fn bench(a: &BenchArgs, args: Vec<String>) -> anyhow::Result<()> {
    let cfg = start("bench", &a.common, args)?;
    let methods = a.method.iter().map(|m| parse_method(m)).collect::<takeover_core::Result<Vec<_>>>()?;
    if a.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Config(format!("thresholds must be >= 0, got {:?}", a.thresholds)).into());
    }
    let mut fc = cfg.filter.clone();
    fc.seed = a.common.seed;
    if let Some(w) = a.window {
        fc.window = w;
    }
    fc.validate()?;
    let mut pc = cfg.predict.clone();
    if let Some(h) = a.horizon {
        pc.horizon = h;
    }
    let files = corpus_files(&a.corpus)?;
    if files.is_empty() {
        warn!("corpus {} holds no episodes", a.corpus.display());
    }
    let mut contexts = Vec::new();
    for f in &files {
        let ctx = load_episode(f, None)?;
        if ctx.len() <= fc.window {
            warn!("{}: {} frames, too short for a window of {}; skipped", f.display(), ctx.len(), fc.window);
            continue;
        }
        contexts.push(ctx);
    }
    let evals = evaluate_corpus(&contexts, &methods, &fc, &cfg.gains, &pc)?;

    let rows: Vec<(usize, &EpisodeEvaluation)> = evals
        .iter()
        .enumerate()
        .flat_map(|(i, per)| per.iter().map(move |e| (i, e)))
        .collect();
    write_atomic(&a.common.out.join("bench.csv"), &bench_csv(&rows)?)?;

    let mut header: Vec<String> = vec!["method".into(), "n_collision".into()];
    header.extend(a.thresholds.iter().map(|t| format!("coverage_{}", fmt_f64(*t))));
    header.extend(["false_flag_rate", "mean_rmse_pos", "mean_rmse_vel"].map(String::from));
    let coverage_rows = methods.iter().enumerate().filter(|_| !evals.is_empty()).map(|(mi, m)| {
        let es: Vec<&EpisodeEvaluation> = evals.iter().map(|per| &per[mi]).collect();
        let n_col = es.iter().filter(|e| e.t_col.is_some()).count();
        let mut row = vec![m.name().to_string(), n_col.to_string()];
        row.extend(lead_time_coverage(&es, &a.thresholds).into_iter().map(fmt_f64));
        row.push(false_flag_rate(&es).map(fmt_f64).unwrap_or_default());
        let mean = |f: fn(&EpisodeEvaluation) -> Option<f64>| {
            let v: Vec<f64> = es.iter().filter_map(|e| f(e)).collect();
            if v.is_empty() {
                String::new()
            } else {
                fmt_f64(v.iter().sum::<f64>() / v.len() as f64)
            }
        };
        row.push(mean(EpisodeEvaluation::mean_rmse_pos));
        row.push(mean(EpisodeEvaluation::mean_rmse_vel));
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_atomic(&a.common.out.join("coverage.csv"), &csv_bytes(&header_refs, coverage_rows)?)?;
    Ok(())
}

/// Posterior means per decision step, held back to step 0 and forward to
/// the gaze length.
fn parameter_series(posterior: &Path, gaze_len: usize, fs: f64) -> anyhow::Result<Vec<Vec<f64>>> {
    let means = read_posterior_means(posterior)?;
    let first = means
        .first()
        .ok_or_else(|| Error::Validation(format!("{} has no rows", posterior.display())))?;
    let mut per_step: Vec<CognitiveParams> = vec![first.1; first.0];
    per_step.extend(means.iter().map(|(_, m)| *m));
    let factor = (fs * DT).round().max(1.0) as usize;
    let pick = |f: fn(&CognitiveParams) -> f64| -> Vec<f64> {
        physio::hold_to_rate(&per_step.iter().map(f).collect::<Vec<_>>(), factor, gaze_len)
    };
    Ok(vec![pick(|p| p.sigma0), pick(|p| p.sigma_max), pick(|p| p.c)])
}

fn read_groups(path: &Path) -> anyhow::Result<Vec<GroupedObservation>> {
    use takeover_core::io::{parse_field, read_csv_records};
    read_csv_records(path, &["dimension", "level", "parameter", "value"])?
        .into_iter()
        .map(|(line, rec)| {
            Ok(GroupedObservation {
                dimension: rec[0].to_string(),
                level: rec[1].to_string(),
                parameter: rec[2].to_string(),
                value: parse_field(&rec, 3, line, "value")?,
            })
        })
        .collect()
}

fn physio_cmd(a: &PhysioArgs, args: Vec<String>) -> anyhow::Result<()> {
    if a.gaze.is_none() && a.groups.is_none() {
        return Err(Error::Config("pass --gaze with --posterior, or --groups".into()).into());
    }
    let cfg = start("physio", &a.common, args)?;
    if let (Some(gaze), Some(posterior)) = (&a.gaze, &a.posterior) {
        let samples = physio::read_gaze(gaze)?;
        let params = parameter_series(posterior, samples.len(), cfg.physio.fs)?;
        let analysis = physio::analyze_session(&samples, &params, &cfg.physio)?;
        let rows = analysis.parameters.iter().zip(PARAMETERS).map(|((name, segs, rep), (_, channel))| {
            let phys = match channel {
                physio::Channel::Perception => analysis.perception.len(),
                physio::Channel::Looming => analysis.looming.len(),
            };
            vec![
                name.clone(),
                format!("{channel:?}").to_lowercase(),
                segs.len().to_string(),
                phys.to_string(),
                fmt_f64(rep.match_rate),
                u8::from(rep.match_defined).to_string(),
                fmt_f64(rep.miss_rate),
            ]
        });
        write_atomic(
            &a.common.out.join("match.csv"),
            &csv_bytes(
                &["parameter", "channel", "n_cog", "n_phys", "match_rate", "match_defined", "miss_rate"],
                rows,
            )?,
        )?;
        let mut all = analysis.perception.clone();
        all.extend(analysis.looming.iter().cloned());
        for (_, segs, _) in &analysis.parameters {
            all.extend(segs.iter().cloned());
        }
        write_atomic(&a.common.out.join("segments.csv"), &physio::segments_csv(&all)?)?;
    }
    if let Some(groups) = &a.groups {
        let rows = physio::grouped_report(&read_groups(groups)?)?;
        write_atomic(&a.common.out.join("report.csv"), &physio::report_csv(&rows)?)?;
    }
    Ok(())
}

/// Replace the value following `--out` (or in `--out=...`).
fn with_out(args: &[String], out: &Path) -> Vec<String> {
    let mut res = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            res.push(a.clone());
            res.push(out.display().to_string());
        } else if a.starts_with("--out=") {
            res.push(format!("--out={}", out.display()));
        } else {
            res.push(a.clone());
        }
    }
    res
}

fn rerun(a: &RerunArgs) -> anyhow::Result<()> {
    use clap::Parser;
    let m = RunManifest::load(&a.manifest)?;
    let args = match &a.out {
        Some(out) => with_out(&m.args, out),
        None => m.args.clone(),
    };
    let cli = Cli::try_parse_from(std::iter::once("takeover".to_string()).chain(args.iter().cloned()))
        .map_err(|e| Error::Validation(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Error::Validation("a manifest cannot record a rerun".into()).into());
    }
    dispatch(cli.command, args)
}
