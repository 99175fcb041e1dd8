//! Windowed particle filter over the cognitive parameters.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{ScenarioConfig, WorldState};
use crate::error::{Error, Result};
use crate::io::{csv_bytes, fmt_f64, write_atomic};
use crate::policy::{ControllerGains, DriverState, PerceptionNoise};
use crate::rng::{child_seed, derive_rng, stream_id, streams, RngStream};
use crate::types::{CognitiveParams, Frame, ParamBounds, TrajectoryWindow, VehicleState};

pub const POSTERIOR_HEADER: [&str; 11] = [
    "t",
    "mean_sigma0",
    "mean_sigmax",
    "mean_c",
    "mean_d",
    "var_sigma0",
    "var_sigmax",
    "var_c",
    "var_d",
    "ess",
    "resampled",
];

/// Where perception noise inside likelihood rollouts comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RolloutNoise {
    /// A seed derived from the filter seed, the particle and the step.
    #[default]
    PerParticle,
    /// One shared seed for every particle and step.
    Common { seed: u64 },
    /// Noise disabled; the parameters act only through the driver's
    /// uncertainty model.
    Expected,
}

impl RolloutNoise {
    pub fn for_particle(&self, filter_seed: u64, step: usize, particle: usize) -> PerceptionNoise {
        match *self {
            RolloutNoise::PerParticle => PerceptionNoise::Seeded(child_seed(
                filter_seed,
                stream_id(&[streams::ROLLOUT, step as u64, particle as u64]),
            )),
            RolloutNoise::Common { seed } => PerceptionNoise::Seeded(seed),
            RolloutNoise::Expected => PerceptionNoise::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub window: usize,
    /// Random-walk standard deviations per step for (sigma0, sigma_max, c, d).
    pub q: [f64; 4],
    /// Observation standard deviations for ego (x, y, vx, vy).
    pub sigma: [f64; 4],
    pub ess_threshold_fraction: f64,
    pub bounds: ParamBounds,
    pub noise: RolloutNoise,
    /// Cap on the number of history steps replayed to rebuild the driver's
    /// internal state; `None` replays from the start of the episode.
    pub replay_steps: Option<usize>,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            n_particles: 20,
            window: TrajectoryWindow::DEFAULT_LEN,
            q: [0.05, 0.25, 0.5, 1.0],
            sigma: [1.0, 0.5, 1.0, 0.5],
            ess_threshold_fraction: 0.5,
            bounds: ParamBounds::default(),
            noise: RolloutNoise::PerParticle,
            replay_steps: None,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config(format!("need at least 2 particles, got {}", self.n_particles)));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.q.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Config(format!("process noise must be >= 0, got {:?}", self.q)));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("observation stddevs must be > 0, got {:?}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold_fraction) {
            return Err(Error::Config(format!(
                "ess_threshold_fraction must be in [0, 1], got {}",
                self.ess_threshold_fraction
            )));
        }
        ParamBounds::new(self.bounds.lower, self.bounds.upper)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub theta: CognitiveParams,
    pub log_weight: f64,
}

impl Particle {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Latin-hypercube initial particles with uniform weights.
pub fn init_particles(config: &FilterConfig, rng: &mut RngStream) -> Vec<Particle> {
    let n = config.n_particles;
    let b = &config.bounds;
    let mut strata: [Vec<usize>; 4] = std::array::from_fn(|_| (0..n).collect());
    for s in strata.iter_mut() {
        s.shuffle(rng);
    }
    let value = |k: usize, stratum: usize, u: f64| b.lower[k] + (stratum as f64 + u) / n as f64 * b.width(k);
    let mut points: Vec<[f64; 4]> = (0..n)
        .map(|i| std::array::from_fn(|k| value(k, strata[k][i], rng.random::<f64>())))
        .collect();

    // Repair sigma0 > sigma_max: swap sigma0 strata with a compatible
    // particle, then redraw inside the strata, then project.
    for i in 0..n {
        if points[i][0] <= points[i][1] {
            continue;
        }
        let partner = (0..n).find(|&j| j != i && points[j][0] <= points[i][1] && points[i][0] <= points[j][1]);
        if let Some(j) = partner {
            let tmp = points[i][0];
            points[i][0] = points[j][0];
            points[j][0] = tmp;
            strata[0].swap(i, j);
            continue;
        }
        for _ in 0..100 {
            points[i][0] = value(0, strata[0][i], rng.random::<f64>());
            points[i][1] = value(1, strata[1][i], rng.random::<f64>());
            if points[i][0] <= points[i][1] {
                break;
            }
        }
    }
    let log_w = -(n as f64).ln();
    points
        .into_iter()
        .map(|p| Particle {
            theta: b.project(CognitiveParams::from_array(p)),
            log_weight: log_w,
        })
        .collect()
}

/// Gaussian random walk on every particle, clamped to the bounds.
pub fn propagate(particles: &mut [Particle], q: &[f64; 4], bounds: &ParamBounds, rng: &mut RngStream) {
    for p in particles.iter_mut() {
        let mut a = p.theta.to_array();
        for k in 0..4 {
            let z: f64 = StandardNormal.sample(rng);
            a[k] += q[k] * z;
        }
        p.theta = bounds.project(CognitiveParams::from_array(a));
    }
}

/// Log-density of an ego state under a diagonal Gaussian around `mean`.
pub fn ego_log_density(observed: &VehicleState, mean: &VehicleState, sigma: &[f64; 4]) -> f64 {
    let r = [
        observed.x - mean.x,
        observed.y - mean.y,
        observed.vx - mean.vx,
        observed.vy - mean.vy,
    ];
    r.iter()
        .zip(sigma)
        .map(|(r, s)| -0.5 * (r / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum()
}

/// Log-normaliser of one frame: the density at zero residual.
pub fn frame_log_normalizer(sigma: &[f64; 4]) -> f64 {
    sigma
        .iter()
        .map(|s| -s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum()
}

/// Log-likelihood of the observed window under a closed-loop rollout from
/// `anchor` with the parameters held constant.
///
/// `driver` carries the driver's internal state at the anchor step. If the
/// rollout terminates early the remaining frames are scored against the
/// frozen terminal state.
pub fn window_loglik(
    anchor: &WorldState,
    mut driver: DriverState,
    observed: &TrajectoryWindow,
    sigma: &[f64; 4],
) -> Result<f64> {
    if observed.first_step() != anchor.t + 1 {
        return Err(Error::Contract(format!(
            "window starts at t = {} but the anchor is at t = {}",
            observed.first_step(),
            anchor.t
        )));
    }
    let mut world = anchor.clone();
    let mut ll = 0.0;
    for frame in observed.frames() {
        if world.is_running() {
            let action = driver.act(&world)?;
            world.advance(action)?;
        }
        ll += ego_log_density(&frame.ego, &world.ego, sigma);
    }
    Ok(ll)
}

/// Geometric-mean weight update; weights are renormalised in log space.
pub fn reweight(particles: &mut [Particle], logliks: &[f64], window: usize) -> Result<()> {
    if logliks.len() != particles.len() {
        return Err(Error::Contract(format!(
            "{} log-likelihoods for {} particles",
            logliks.len(),
            particles.len()
        )));
    }
    if let Some(i) = logliks.iter().position(|l| l.is_nan()) {
        return Err(Error::Filter(format!("log-likelihood of particle {i} is NaN")));
    }
    let l = window.max(1) as f64;
    for (p, ll) in particles.iter_mut().zip(logliks) {
        p.log_weight += ll / l;
    }
    normalize(particles);
    Ok(())
}

fn normalize(particles: &mut [Particle]) {
    let n = particles.len();
    let max = particles.iter().map(|p| p.log_weight).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        if max == f64::NEG_INFINITY {
            log::warn!("all particle weights vanished; resetting to uniform");
        }
        let u = -(n as f64).ln();
        for p in particles.iter_mut() {
            p.log_weight = u;
        }
        return;
    }
    let lse = max + particles.iter().map(|p| (p.log_weight - max).exp()).sum::<f64>().ln();
    for p in particles.iter_mut() {
        p.log_weight -= lse;
    }
}

pub fn weights(particles: &[Particle]) -> Vec<f64> {
    particles.iter().map(Particle::weight).collect()
}

/// Effective sample size `1 / sum w^2`.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Low-variance resampling with one uniform offset.
pub fn systematic_resample(particles: &[Particle], rng: &mut RngStream) -> Vec<Particle> {
    let n = particles.len();
    if n == 0 {
        return Vec::new();
    }
    let step = 1.0 / n as f64;
    let u0 = rng.random::<f64>() * step;
    let log_w = -(n as f64).ln();
    let mut out = Vec::with_capacity(n);
    let mut cum = particles[0].weight();
    let mut i = 0;
    for m in 0..n {
        let u = u0 + m as f64 * step;
        while u > cum && i + 1 < n {
            i += 1;
            cum += particles[i].weight();
        }
        out.push(Particle {
            theta: particles[i].theta,
            log_weight: log_w,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: CognitiveParams,
    pub variance: [f64; 4],
}

impl PosteriorSummary {
    pub fn d_rounded(&self) -> usize {
        self.mean.delay_steps()
    }
}

pub fn posterior_summary(particles: &[Particle]) -> PosteriorSummary {
    let mut mean = [0.0; 4];
    for p in particles {
        let w = p.weight();
        for (m, x) in mean.iter_mut().zip(p.theta.to_array()) {
            *m += w * x;
        }
    }
    let mut var = [0.0; 4];
    for p in particles {
        let w = p.weight();
        for (k, x) in p.theta.to_array().into_iter().enumerate() {
            var[k] += w * (x - mean[k]).powi(2);
        }
    }
    PosteriorSummary {
        mean: CognitiveParams::from_array(mean),
        variance: var,
    }
}

/// Frames of one episode together with the worlds reconstructed from them.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub scenario: ScenarioConfig,
    pub frames: Vec<Frame>,
    worlds: Vec<WorldState>,
}

impl EpisodeContext {
    pub fn new(scenario: ScenarioConfig, frames: Vec<Frame>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.t != frames[0].t + i {
                return Err(Error::Validation(format!("frames are not contiguous at index {i}")));
            }
        }
        let worlds = frames
            .iter()
            .map(|f| WorldState::from_frame(f, &scenario))
            .collect::<Result<Vec<_>>>()?;
        Ok(EpisodeContext {
            scenario,
            frames,
            worlds,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn world(&self, k: usize) -> &WorldState {
        &self.worlds[k]
    }

    /// Index one past the last running frame.
    pub fn running_len(&self) -> usize {
        self.worlds.iter().take_while(|w| w.is_running()).count()
    }

    /// Driver state at frame `k` (before acting there), rebuilt by replaying
    /// the recorded history under fixed parameters.
    pub fn replay_driver(
        &self,
        k: usize,
        theta: CognitiveParams,
        gains: ControllerGains,
        noise: PerceptionNoise,
        cap: Option<usize>,
    ) -> Result<DriverState> {
        let mut driver = DriverState::new(theta, gains, noise);
        let start = cap.map_or(0, |c| k.saturating_sub(c));
        for w in &self.worlds[start..k.min(self.worlds.len())] {
            driver.act(w)?;
        }
        Ok(driver)
    }

    pub fn window(&self, k: usize, len: usize) -> Result<TrajectoryWindow> {
        TrajectoryWindow::ending_at(&self.frames, k, len)
    }
}

/// Window log-likelihood for the window ending at frame `k`.
pub fn episode_window_loglik(
    ctx: &EpisodeContext,
    k: usize,
    config: &FilterConfig,
    theta: CognitiveParams,
    gains: ControllerGains,
    noise: PerceptionNoise,
) -> Result<f64> {
    let l = config.window;
    if k < l || k >= ctx.len() {
        return Err(Error::Contract(format!("window end {k} outside [{l}, {})", ctx.len())));
    }
    let anchor = k - l;
    let driver = ctx.replay_driver(anchor, theta, gains, noise, config.replay_steps)?;
    window_loglik(ctx.world(anchor), driver, &ctx.window(k, l)?, &config.sigma)
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub config: FilterConfig,
    pub particles: Vec<Particle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub t: usize,
    pub posterior: PosteriorSummary,
    pub ess: f64,
    pub resampled: bool,
}

impl FilterState {
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = derive_rng(config.seed, streams::FILTER_INIT);
        let particles = init_particles(&config, &mut rng);
        Ok(FilterState { config, particles })
    }

    pub fn summary(&self) -> PosteriorSummary {
        posterior_summary(&self.particles)
    }
}

/// One filter recursion for the window ending at frame `k`.
pub fn pf_step(
    state: &mut FilterState,
    ctx: &EpisodeContext,
    k: usize,
    gains: &ControllerGains,
) -> Result<StepSummary> {
    let cfg = state.config.clone();
    let mut rng = derive_rng(cfg.seed, stream_id(&[streams::FILTER_PROPAGATE, k as u64]));
    propagate(&mut state.particles, &cfg.q, &cfg.bounds, &mut rng);
    let logliks = state
        .particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let noise = cfg.noise.for_particle(cfg.seed, k, i);
            episode_window_loglik(ctx, k, &cfg, p.theta, *gains, noise)
        })
        .collect::<Result<Vec<_>>>()?;
    reweight(&mut state.particles, &logliks, cfg.window)?;
    let e = ess(&weights(&state.particles));
    let resampled = e < cfg.n_particles as f64 * cfg.ess_threshold_fraction;
    if resampled {
        let mut rng = derive_rng(cfg.seed, stream_id(&[streams::FILTER_RESAMPLE, k as u64]));
        state.particles = systematic_resample(&state.particles, &mut rng);
    }
    Ok(StepSummary {
        t: k,
        posterior: posterior_summary(&state.particles),
        ess: e,
        resampled,
    })
}

/// Run the filter over every complete window of an episode.
pub fn run_filter(ctx: &EpisodeContext, config: &FilterConfig, gains: &ControllerGains) -> Result<Vec<StepSummary>> {
    let mut state = FilterState::new(config.clone())?;
    let end = ctx.len();
    if end <= config.window {
        return Err(Error::Validation(format!(
            "episode has {end} frames; need more than the window ({})",
            config.window
        )));
    }
    (config.window..end).map(|k| pf_step(&mut state, ctx, k, gains)).collect()
}

pub fn posterior_trace_csv(steps: &[StepSummary]) -> Result<Vec<u8>> {
    let rows = steps.iter().map(|s| {
        let m = s.posterior.mean.to_array();
        let v = s.posterior.variance;
        vec![
            s.t.to_string(),
            fmt_f64(m[0]),
            fmt_f64(m[1]),
            fmt_f64(m[2]),
            fmt_f64(m[3]),
            fmt_f64(v[0]),
            fmt_f64(v[1]),
            fmt_f64(v[2]),
            fmt_f64(v[3]),
            fmt_f64(s.ess),
            u8::from(s.resampled).to_string(),
        ]
    });
    csv_bytes(&POSTERIOR_HEADER, rows)
}

pub fn write_posterior_trace(path: &Path, steps: &[StepSummary]) -> Result<()> {
    write_atomic(path, &posterior_trace_csv(steps)?)
}

/// Posterior-mean series read back from a trace: `(t, mean)` per row.
pub fn read_posterior_means(path: &Path) -> Result<Vec<(usize, CognitiveParams)>> {
    use crate::io::{parse_field, read_csv_records};
    read_csv_records(path, &POSTERIOR_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok((
                parse_field(&rec, 0, line, "t")?,
                CognitiveParams {
                    sigma0: parse_field(&rec, 1, line, "mean_sigma0")?,
                    sigma_max: parse_field(&rec, 2, line, "mean_sigmax")?,
                    c: parse_field(&rec, 3, line, "mean_c")?,
                    d: parse_field(&rec, 4, line, "mean_d")?,
                },
            ))
        })
        .collect()
}
