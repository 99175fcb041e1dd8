//! Rolling-horizon collision prediction and warning metrics.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Obb, Terminated, WorldState};
use crate::error::{Error, Result};
use crate::filter::{pf_step, EpisodeContext, FilterConfig, FilterState};
use crate::io::{csv_bytes, fmt_f64, write_atomic};
use crate::policy::{cognition_off, ControllerGains, DriverState, PerceptionNoise};
use crate::rng::{child_seed, stream_id, streams};
use crate::types::{CognitiveParams, VehicleState, DT};

pub const DEFAULT_HORIZON: usize = 30;
pub const LEAD_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];
pub const BENCH_HEADER: [&str; 10] = [
    "episode",
    "method",
    "t_col",
    "t_flag",
    "lead_s",
    "hit_0.5",
    "hit_1",
    "hit_2",
    "mean_rmse_pos",
    "mean_rmse_vel",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// Issue step.
    pub k: usize,
    pub horizon: usize,
    /// Ego states at `k+1 ..= k+H`; frozen after a predicted crash.
    pub predicted: Vec<VehicleState>,
    pub collision_flag: bool,
    pub flagged_step: Option<usize>,
    pub flagged_position: Option<(f64, f64)>,
}

impl PredictionRecord {
    fn from_rollout(k: usize, horizon: usize, mut predicted: Vec<VehicleState>, hit: Option<usize>) -> Self {
        if let Some(last) = predicted.last().copied() {
            predicted.resize(horizon, last);
        }
        let flagged_position = hit.map(|s| {
            let e = &predicted[s - k - 1];
            (e.x, e.y)
        });
        PredictionRecord {
            k,
            horizon,
            predicted,
            collision_flag: hit.is_some(),
            flagged_step: hit,
            flagged_position,
        }
    }
}

fn check_horizon(h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::Contract("horizon must be >= 1".into()));
    }
    Ok(())
}

/// Closed-loop rollout of the driver model for `horizon` steps.
///
/// `driver` holds the driver's internal state at the anchor; its parameters
/// are the estimate to predict with. Only a crash raises the flag.
pub fn rollout_adaptive(anchor: &WorldState, mut driver: DriverState, horizon: usize) -> Result<PredictionRecord> {
    check_horizon(horizon)?;
    if !anchor.is_running() {
        return Err(Error::Contract(format!("anchor at t = {} is not running", anchor.t)));
    }
    let mut world = anchor.clone();
    let mut predicted = Vec::with_capacity(horizon);
    let mut hit = None;
    while predicted.len() < horizon && world.is_running() {
        let action = driver.act(&world)?;
        world.advance(action)?;
        predicted.push(world.ego);
        if world.terminated == Terminated::Crash {
            hit = Some(world.t);
        }
    }
    Ok(PredictionRecord::from_rollout(anchor.t, horizon, predicted, hit))
}

/// Constant-velocity baseline: every agent keeps its velocity and heading.
pub fn rollout_cv(anchor: &WorldState, horizon: usize) -> Result<PredictionRecord> {
    check_horizon(horizon)?;
    let wz = Obb::of_workzone(&anchor.workzone, &anchor.road);
    let mut ego = anchor.ego;
    let mut others = anchor.background.clone();
    let mut predicted = Vec::with_capacity(horizon);
    let mut hit = None;
    for s in 1..=horizon {
        for v in std::iter::once(&mut ego).chain(others.iter_mut()) {
            v.x += v.vx * DT;
            v.y += v.vy * DT;
        }
        predicted.push(ego);
        let b = Obb::of_vehicle(&ego);
        if b.overlaps(&wz) || others.iter().any(|o| b.overlaps(&Obb::of_vehicle(o))) {
            hit = Some(anchor.t + s);
            break;
        }
    }
    Ok(PredictionRecord::from_rollout(anchor.t, horizon, predicted, hit))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub pos: f64,
    pub vel: f64,
    pub weighted: f64,
}

/// Position, velocity and weighted RMSE between paired ego sequences.
pub fn rmse(predicted: &[VehicleState], realized: &[VehicleState], alpha: f64, beta: f64) -> Result<Rmse> {
    if predicted.len() != realized.len() {
        return Err(Error::Contract(format!(
            "{} predicted states against {} realized",
            predicted.len(),
            realized.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Contract("empty sequences".into()));
    }
    if alpha < 0.0 || beta < 0.0 || (alpha + beta - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("weights ({alpha}, {beta}) must be >= 0 and sum to 1")));
    }
    let n = predicted.len() as f64;
    let (mut sp, mut sv) = (0.0, 0.0);
    for (p, r) in predicted.iter().zip(realized) {
        sp += (p.x - r.x).powi(2) + (p.y - r.y).powi(2);
        sv += (p.vx - r.vx).powi(2) + (p.vy - r.vy).powi(2);
    }
    let (pos, vel) = ((sp / n).sqrt(), (sv / n).sqrt());
    Ok(Rmse {
        pos,
        vel,
        weighted: (alpha * pos * pos + beta * vel * vel).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adaptive,
    Cv,
    CognitionOff,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Adaptive, Method::Cv, Method::CognitionOff];

    pub fn name(self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Cv => "cv",
            Method::CognitionOff => "cognition_off",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub horizon: usize,
    /// Rollouts per flag decision; the flag needs a strict majority.
    pub votes: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Draw perception noise inside adaptive rollouts.
    pub rollout_noise: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            horizon: DEFAULT_HORIZON,
            votes: 1,
            alpha: 0.5,
            beta: 0.5,
            rollout_noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeEvaluation {
    pub method: Method,
    pub records: Vec<PredictionRecord>,
    pub t_flag: Option<usize>,
    pub t_col: Option<usize>,
    pub rmse_pos: Vec<f64>,
    pub rmse_vel: Vec<f64>,
    pub rmse_weighted: Vec<f64>,
    /// Posterior mean used at each issue step (adaptive only).
    pub theta_hat: Vec<CognitiveParams>,
}

impl EpisodeEvaluation {
    pub fn lead_steps(&self) -> Option<i64> {
        Some(self.t_col? as i64 - self.t_flag? as i64)
    }

    pub fn lead_s(&self) -> Option<f64> {
        self.lead_steps().map(|s| s as f64 * DT)
    }

    pub fn mean_rmse_pos(&self) -> Option<f64> {
        mean(&self.rmse_pos)
    }

    pub fn mean_rmse_vel(&self) -> Option<f64> {
        mean(&self.rmse_vel)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Whether a warning was issued at least `lead` seconds before the crash.
pub fn early_warning_hit(eval: &EpisodeEvaluation, lead: f64) -> bool {
    match eval.lead_steps() {
        Some(steps) => steps as f64 * DT >= lead - 1e-9,
        None => false,
    }
}

/// Fraction of collision episodes warned at least `tau` seconds early, per
/// threshold. Episodes without a collision are ignored.
pub fn lead_time_coverage(evals: &[&EpisodeEvaluation], thresholds: &[f64]) -> Vec<f64> {
    let crashes: Vec<_> = evals.iter().filter(|e| e.t_col.is_some()).collect();
    thresholds
        .iter()
        .map(|&tau| {
            if crashes.is_empty() {
                0.0
            } else {
                crashes.iter().filter(|e| early_warning_hit(e, tau)).count() as f64 / crashes.len() as f64
            }
        })
        .collect()
}

/// Fraction of collision-free episodes that were flagged at some step.
pub fn false_flag_rate(evals: &[&EpisodeEvaluation]) -> Option<f64> {
    let clean: Vec<_> = evals.iter().filter(|e| e.t_col.is_none()).collect();
    (!clean.is_empty()).then(|| clean.iter().filter(|e| e.t_flag.is_some()).count() as f64 / clean.len() as f64)
}

/// Issue a prediction at every step `k >= L` of an episode.
pub fn rolling_evaluate(
    ctx: &EpisodeContext,
    method: Method,
    filter: &FilterConfig,
    gains: &ControllerGains,
    cfg: &PredictConfig,
) -> Result<EpisodeEvaluation> {
    check_horizon(cfg.horizon)?;
    if cfg.votes == 0 {
        return Err(Error::Config("votes must be >= 1".into()));
    }
    let l = filter.window;
    if ctx.len() < l + 1 {
        return Err(Error::Validation(format!(
            "episode has {} frames; need at least {}",
            ctx.len(),
            l + 1
        )));
    }
    let t_col = ctx.frames.iter().find(|f| f.collision).map(|f| f.t);
    let mut pf = match method {
        Method::Adaptive => Some(FilterState::new(filter.clone())?),
        _ => None,
    };
    let end = ctx.running_len();
    let mut eval = EpisodeEvaluation {
        method,
        records: Vec::new(),
        t_flag: None,
        t_col,
        rmse_pos: Vec::new(),
        rmse_vel: Vec::new(),
        rmse_weighted: Vec::new(),
        theta_hat: Vec::new(),
    };
    for k in l..end {
        let anchor = ctx.world(k);
        let record = match method {
            Method::Cv => rollout_cv(anchor, cfg.horizon)?,
            Method::Adaptive => {
                let state = pf.as_mut().expect("adaptive keeps a filter");
                let theta = pf_step(state, ctx, k, gains)?.posterior.mean;
                eval.theta_hat.push(theta);
                voted_rollout(ctx, k, theta, gains, filter.seed, cfg)?
            }
            Method::CognitionOff => {
                let theta = cognition_off(&CognitiveParams::ZERO);
                let driver = ctx.replay_driver(k, theta, *gains, PerceptionNoise::Off, filter.replay_steps)?;
                rollout_adaptive(anchor, driver, cfg.horizon)?
            }
        };
        let realized: Vec<VehicleState> = ctx.frames[k + 1..].iter().take(cfg.horizon).map(|f| f.ego).collect();
        if !realized.is_empty() {
            let r = rmse(&record.predicted[..realized.len()], &realized, cfg.alpha, cfg.beta)?;
            eval.rmse_pos.push(r.pos);
            eval.rmse_vel.push(r.vel);
            eval.rmse_weighted.push(r.weighted);
        }
        if record.collision_flag && eval.t_flag.is_none() {
            eval.t_flag = Some(k);
        }
        eval.records.push(record);
    }
    Ok(eval)
}

fn voted_rollout(
    ctx: &EpisodeContext,
    k: usize,
    theta: CognitiveParams,
    gains: &ControllerGains,
    seed: u64,
    cfg: &PredictConfig,
) -> Result<PredictionRecord> {
    let noise = |m: usize| {
        if cfg.rollout_noise {
            PerceptionNoise::Seeded(child_seed(seed, stream_id(&[streams::ROLLOUT, k as u64, m as u64, 1])))
        } else {
            PerceptionNoise::Off
        }
    };
    let records = (0..cfg.votes)
        .map(|m| {
            let driver = ctx.replay_driver(k, theta, *gains, noise(m), None)?;
            rollout_adaptive(ctx.world(k), driver, cfg.horizon)
        })
        .collect::<Result<Vec<_>>>()?;
    let flags = records.iter().filter(|r| r.collision_flag).count();
    let majority = 2 * flags > cfg.votes;
    // Report the first rollout that agrees with the vote.
    let chosen = records
        .into_iter()
        .find(|r| r.collision_flag == majority)
        .expect("at least one rollout agrees with the majority");
    Ok(chosen)
}

/// Evaluate a batch of episodes with every method in parallel.
pub fn evaluate_corpus(
    episodes: &[EpisodeContext],
    methods: &[Method],
    filter: &FilterConfig,
    gains: &ControllerGains,
    cfg: &PredictConfig,
) -> Result<Vec<Vec<EpisodeEvaluation>>> {
    episodes
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| {
            let f = FilterConfig {
                seed: child_seed(filter.seed, i as u64),
                ..filter.clone()
            };
            methods.iter().map(|m| rolling_evaluate(ctx, *m, &f, gains, cfg)).collect()
        })
        .collect()
}

pub fn bench_csv(rows: &[(usize, &EpisodeEvaluation)]) -> Result<Vec<u8>> {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let rows = rows.iter().map(|(i, e)| {
        vec![
            i.to_string(),
            e.method.name().to_string(),
            opt(e.t_col.map(|t| t.to_string())),
            opt(e.t_flag.map(|t| t.to_string())),
            opt(e.lead_s().map(fmt_f64)),
            u8::from(early_warning_hit(e, 0.5)).to_string(),
            u8::from(early_warning_hit(e, 1.0)).to_string(),
            u8::from(early_warning_hit(e, 2.0)).to_string(),
            opt(e.mean_rmse_pos().map(fmt_f64)),
            opt(e.mean_rmse_vel().map(fmt_f64)),
        ]
    });
    csv_bytes(&BENCH_HEADER, rows)
}

pub fn write_bench_csv(path: &Path, rows: &[(usize, &EpisodeEvaluation)]) -> Result<()> {
    write_atomic(path, &bench_csv(rows)?)
}
