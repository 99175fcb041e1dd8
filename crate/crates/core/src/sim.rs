//! Closed-loop episode generation with ground-truth parameter schedules.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{make_scenario, ScenarioConfig, Terminated, WorldState};
use crate::error::{Error, Result};
use crate::io::{csv_bytes, fmt_f64, parse_field, read_csv_records, write_atomic};
use crate::policy::{reward_step, ControllerGains, DriverState, PerceptionNoise, RewardConfig};
use crate::rng::{child_seed, derive_rng, streams, RngStream};
use crate::types::{Action, CognitiveParams, Frame, ParamBounds};

/// Steps between parameter refreshes in the resampling schedules.
pub const REFRESH_EVERY: usize = 5;
pub const THETA_HEADER: [&str; 5] = ["t", "sigma0", "sigma_max", "c", "d"];

/// Uniform draw from the parameter box subject to `sigma0 <= sigma_max`,
/// with the delay rounded to whole steps.
pub fn sample_prior<R: Rng + ?Sized>(bounds: &ParamBounds, rng: &mut R) -> CognitiveParams {
    let draw = |rng: &mut R, k: usize| bounds.lower[k] + rng.random::<f64>() * bounds.width(k);
    for _ in 0..1000 {
        let theta = CognitiveParams {
            sigma0: draw(rng, 0),
            sigma_max: draw(rng, 1),
            c: draw(rng, 2),
            d: draw(rng, 3).round(),
        };
        if theta.sigma0 <= theta.sigma_max {
            return theta;
        }
    }
    bounds.project(bounds.midpoint())
}

/// Mean of the distribution sampled by [`sample_prior`].
pub fn prior_mean(bounds: &ParamBounds) -> CognitiveParams {
    let (a0, b0, a1, b1) = (bounds.lower[0], bounds.upper[0], bounds.lower[1], bounds.upper[1]);
    let unit = |v: f64| v.clamp(0.0, 1.0);
    // P(sigma_max >= x) and P(sigma0 <= y) for the unconstrained uniforms.
    let above = |x: f64| if b1 > a1 { unit((b1 - x) / (b1 - a1)) } else { f64::from(u8::from(x <= a1)) };
    let below = |y: f64| if b0 > a0 { unit((y - a0) / (b0 - a0)) } else { f64::from(u8::from(y >= a0)) };
    let s0 = if b0 > a0 {
        simpson(a0, b0, |x| x * above(x)) / simpson(a0, b0, above)
    } else {
        a0
    };
    let smax = if b1 > a1 {
        simpson(a1, b1, |y| y * below(y)) / simpson(a1, b1, below)
    } else {
        a1
    };
    let (a3, b3) = (bounds.lower[3], bounds.upper[3]);
    let d = if b3 > a3 {
        let mut acc = 0.0;
        let mut k = a3.round();
        while k <= b3.round() {
            let lo = (k - 0.5).max(a3);
            let hi = (k + 0.5).min(b3);
            acc += k * (hi - lo).max(0.0);
            k += 1.0;
        }
        acc / (b3 - a3)
    } else {
        a3.round()
    };
    CognitiveParams {
        sigma0: s0,
        sigma_max: smax,
        c: 0.5 * (bounds.lower[2] + bounds.upper[2]),
        d,
    }
}

fn simpson(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// How the true parameters evolve over an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSchedule {
    Fixed {
        theta: CognitiveParams,
    },
    /// Fresh prior draw every `every` steps, held constant in between.
    Resample {
        every: usize,
        bounds: ParamBounds,
    },
    /// Gaussian random walk refreshed every `every` steps from a prior draw.
    Drift {
        every: usize,
        step: [f64; 4],
        bounds: ParamBounds,
    },
    /// Constant `before`, switching to `after` at step `at`.
    Jump {
        before: CognitiveParams,
        after: CognitiveParams,
        at: usize,
    },
}

impl ThetaSchedule {
    pub fn fixed(theta: CognitiveParams) -> Self {
        ThetaSchedule::Fixed { theta }
    }

    pub fn resample() -> Self {
        ThetaSchedule::Resample {
            every: REFRESH_EVERY,
            bounds: ParamBounds::default(),
        }
    }

    pub fn drift() -> Self {
        ThetaSchedule::Drift {
            every: REFRESH_EVERY,
            step: [0.05, 0.25, 0.5, 1.0],
            bounds: ParamBounds::default(),
        }
    }

    /// Parameters in force at each of `len` steps.
    pub fn trace(&self, seed: u64, len: usize) -> Result<Vec<CognitiveParams>> {
        let mut rng = derive_rng(seed, streams::THETA_SCHEDULE);
        let out = match self {
            ThetaSchedule::Fixed { theta } => vec![*theta; len],
            ThetaSchedule::Jump { before, after, at } => {
                (0..len).map(|t| if t < *at { *before } else { *after }).collect()
            }
            ThetaSchedule::Resample { every, bounds } => {
                check_every(*every)?;
                let mut cur = sample_prior(bounds, &mut rng);
                (0..len)
                    .map(|t| {
                        if t > 0 && t % every == 0 {
                            cur = sample_prior(bounds, &mut rng);
                        }
                        cur
                    })
                    .collect()
            }
            ThetaSchedule::Drift { every, step, bounds } => {
                check_every(*every)?;
                let normals = step
                    .iter()
                    .map(|&s| Normal::new(0.0, s).map_err(|e| Error::Config(format!("drift step {s}: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                let mut cur = sample_prior(bounds, &mut rng);
                (0..len)
                    .map(|t| {
                        if t > 0 && t % every == 0 {
                            let mut a = cur.to_array();
                            for (x, n) in a.iter_mut().zip(&normals) {
                                *x += n.sample(&mut rng);
                            }
                            let mut next = bounds.project(CognitiveParams::from_array(a));
                            next.d = next.d.round();
                            cur = next;
                        }
                        cur
                    })
                    .collect()
            }
        };
        Ok(out)
    }
}

fn check_every(every: usize) -> Result<()> {
    if every == 0 {
        return Err(Error::Config("refresh interval must be >= 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub scenario: ScenarioConfig,
    pub schedule: ThetaSchedule,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Draw perception noise; `false` runs the noise-free driver.
    #[serde(default = "default_true")]
    pub perception_noise: bool,
}

fn default_max_steps() -> usize {
    400
}

fn default_true() -> bool {
    true
}

impl EpisodeConfig {
    pub fn new(scenario: ScenarioConfig, schedule: ThetaSchedule) -> Self {
        EpisodeConfig {
            scenario,
            schedule,
            gains: ControllerGains::default(),
            max_steps: default_max_steps(),
            perception_noise: true,
        }
    }

    /// Seed of the perception noise stream used by the generating driver.
    pub fn perception_seed(&self) -> u64 {
        child_seed(self.scenario.seed, streams::PERCEPTION)
    }

    pub fn noise(&self) -> PerceptionNoise {
        if self.perception_noise {
            PerceptionNoise::Seeded(self.perception_seed())
        } else {
            PerceptionNoise::Off
        }
    }
}

/// A generated episode: frames, the parameters in force at each frame, and
/// the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub config: EpisodeConfig,
    pub frames: Vec<Frame>,
    pub theta: Vec<CognitiveParams>,
    pub outcome: Terminated,
    pub total_reward: f64,
}

impl Episode {
    /// Step at which the ego crashed.
    pub fn t_col(&self) -> Option<usize> {
        match self.outcome {
            Terminated::Crash => self.frames.last().map(|f| f.t),
            _ => None,
        }
    }
}

/// Run the bounded-rational driver until termination or `max_steps`.
pub fn simulate_episode(cfg: &EpisodeConfig) -> Result<Episode> {
    cfg.gains.validate()?;
    let mut world = make_scenario(&cfg.scenario)?;
    let schedule = cfg.schedule.trace(cfg.scenario.seed, cfg.max_steps + 1)?;
    let bounds = ParamBounds::default();
    for theta in &schedule {
        bounds.check(theta)?;
    }
    let mut driver = DriverState::new(schedule[0], cfg.gains, cfg.noise());
    let reward_cfg = RewardConfig::default();
    let mut frames = Vec::new();
    let mut total_reward = 0.0;
    while world.is_running() && world.t < cfg.max_steps {
        let theta = schedule[world.t];
        driver.set_params(theta);
        let action = driver.act(&world)?;
        frames.push(world.to_frame(action));
        let prev: WorldState = world.clone();
        world.advance(action)?;
        total_reward += reward_step(&prev, &action, &world, &theta, &reward_cfg)?.total;
    }
    frames.push(world.to_frame(Action::NEUTRAL));
    let theta = schedule[..frames.len()].to_vec();
    Ok(Episode {
        config: cfg.clone(),
        frames,
        theta,
        outcome: world.terminated,
        total_reward,
    })
}

pub fn theta_csv(theta: &[CognitiveParams]) -> Result<Vec<u8>> {
    let rows = theta.iter().enumerate().map(|(t, p)| {
        vec![
            t.to_string(),
            fmt_f64(p.sigma0),
            fmt_f64(p.sigma_max),
            fmt_f64(p.c),
            fmt_f64(p.d),
        ]
    });
    csv_bytes(&THETA_HEADER, rows)
}

pub fn write_theta_trace(path: &Path, theta: &[CognitiveParams]) -> Result<()> {
    write_atomic(path, &theta_csv(theta)?)
}

pub fn read_theta_trace(path: &Path) -> Result<Vec<CognitiveParams>> {
    let mut out = Vec::new();
    for (line, rec) in read_csv_records(path, &THETA_HEADER)? {
        let t: usize = parse_field(&rec, 0, line, "t")?;
        if t != out.len() {
            return Err(Error::Validation(format!("theta trace line {line}: expected t = {}, got {t}", out.len())));
        }
        out.push(CognitiveParams {
            sigma0: parse_field(&rec, 1, line, "sigma0")?,
            sigma_max: parse_field(&rec, 2, line, "sigma_max")?,
            c: parse_field(&rec, 3, line, "c")?,
            d: parse_field(&rec, 4, line, "d")?,
        });
    }
    Ok(out)
}

/// Generator used for the corpus: scenario cell drawn from the design grid.
pub fn random_scenario(rng: &mut RngStream, seed: u64) -> ScenarioConfig {
    let th = ScenarioConfig::TH_LEVELS[rng.random_range(0..ScenarioConfig::TH_LEVELS.len())];
    let tlt = ScenarioConfig::TLT_LEVELS[rng.random_range(0..ScenarioConfig::TLT_LEVELS.len())];
    let tor = rng.random_range(1..=8);
    let ndrt = rng.random_range(1..=4);
    ScenarioConfig::for_levels(th, tlt, tor, ndrt, seed)
}

/// Scenario and configuration of the `index`-th episode of a corpus.
pub fn corpus_episode_config(seed: u64, index: u64, schedule: &ThetaSchedule, gains: ControllerGains) -> EpisodeConfig {
    let episode_seed = child_seed(seed, index);
    let mut rng = derive_rng(episode_seed, streams::PLACEMENT);
    let scenario = random_scenario(&mut rng, episode_seed);
    EpisodeConfig {
        gains,
        ..EpisodeConfig::new(scenario, schedule.clone())
    }
}

/// `count` episodes drawn from the scenario grid, generated in parallel.
pub fn generate_corpus(count: usize, seed: u64, schedule: &ThetaSchedule, gains: ControllerGains) -> Result<Vec<Episode>> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_episode(&corpus_episode_config(seed, i, schedule, gains)))
        .collect()
}

/// Generate corpus episodes in index order until `count` of them end in a
/// collision with at least `min_frames` frames. Returns the kept episodes
/// and how many were generated in total.
pub fn collision_corpus(
    count: usize,
    min_frames: usize,
    seed: u64,
    schedule: &ThetaSchedule,
    gains: ControllerGains,
) -> Result<(Vec<Episode>, usize)> {
    let mut kept = Vec::new();
    let mut generated = 0usize;
    let batch = count.max(8);
    while kept.len() < count {
        let eps: Vec<Episode> = {
            use rayon::prelude::*;
            (generated as u64..(generated + batch) as u64)
                .into_par_iter()
                .map(|i| simulate_episode(&corpus_episode_config(seed, i, schedule, gains)))
                .collect::<Result<_>>()?
        };
        for ep in eps {
            generated += 1;
            if kept.len() < count && ep.t_col().is_some() && ep.frames.len() >= min_frames {
                kept.push(ep);
            }
        }
        if generated > 1000 * count.max(1) {
            return Err(Error::Validation(format!("only {} collision episodes in {generated}", kept.len())));
        }
    }
    Ok((kept, generated))
}
