use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ControllerGains;
use crate::env::{ScenarioConfig, Terminated};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream_id, streams};
use crate::sim::{sample_prior, simulate_episode, EpisodeConfig, ThetaSchedule};
use crate::types::{CognitiveParams, ParamBounds};

/// Search box for the controller gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainBounds {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl Default for GainBounds {
    fn default() -> Self {
        GainBounds {
            lower: [0.0; 6],
            upper: [3.0, 2.0, 1.0, 4.0, 250.0, 0.3],
        }
    }
}

impl GainBounds {
    pub fn point(g: ControllerGains) -> Self {
        GainBounds {
            lower: g.to_array(),
            upper: g.to_array(),
        }
    }

    fn clamp(&self, mut a: [f64; 6]) -> [f64; 6] {
        for k in 0..6 {
            a[k] = a[k].clamp(self.lower[k], self.upper[k]);
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub iterations: usize,
    pub population: usize,
    pub elite_fraction: f64,
    /// Parameter draws per scenario in the evaluation set.
    pub theta_samples: usize,
    pub max_steps: usize,
    pub bounds: GainBounds,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            iterations: 5,
            population: 16,
            elite_fraction: 0.25,
            theta_samples: 2,
            max_steps: 300,
            bounds: GainBounds::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub gains: ControllerGains,
    pub initial_return: f64,
    pub final_return: f64,
    /// Evaluation return of the elite mean after each iteration.
    pub history: Vec<f64>,
}

/// Fixed evaluation set: every scenario paired with prior parameter draws.
pub fn evaluation_cases(
    scenarios: &[ScenarioConfig],
    theta_prior: &ParamBounds,
    samples: usize,
    seed: u64,
) -> Vec<(ScenarioConfig, CognitiveParams)> {
    let mut rng = derive_rng(seed, streams::CALIBRATION);
    let mut out = Vec::new();
    for s in scenarios {
        for _ in 0..samples {
            out.push((s.clone(), sample_prior(theta_prior, &mut rng)));
        }
    }
    out
}

/// Mean episode return and crash count over the evaluation set.
pub fn evaluate_gains(
    gains: &ControllerGains,
    cases: &[(ScenarioConfig, CognitiveParams)],
    max_steps: usize,
) -> Result<(f64, usize)> {
    let results = cases
        .par_iter()
        .map(|(scenario, theta)| {
            let mut cfg = EpisodeConfig::new(scenario.clone(), ThetaSchedule::fixed(*theta));
            cfg.gains = *gains;
            cfg.max_steps = max_steps;
            simulate_episode(&cfg).map(|ep| (ep.total_reward, ep.outcome == Terminated::Crash))
        })
        .collect::<Result<Vec<_>>>()?;
    if results.is_empty() {
        return Ok((0.0, 0));
    }
    let mean = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
    Ok((mean, results.iter().filter(|r| r.1).count()))
}

/// Cross-entropy search over controller gains maximising mean return.
///
/// Returns the best evaluated elite mean, or `initial` if no iteration
/// improved on it.
pub fn calibrate_gains(
    scenarios: &[ScenarioConfig],
    theta_prior: &ParamBounds,
    initial: &ControllerGains,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    if cfg.population < 8 {
        return Err(Error::Config(format!("population must be >= 8, got {}", cfg.population)));
    }
    if !(cfg.elite_fraction > 0.0 && cfg.elite_fraction <= 1.0) {
        return Err(Error::Config(format!("elite_fraction must be in (0, 1], got {}", cfg.elite_fraction)));
    }
    for k in 0..6 {
        if !(cfg.bounds.lower[k] <= cfg.bounds.upper[k]) || cfg.bounds.lower[k] < 0.0 {
            return Err(Error::Config(format!("bad gain bounds for {}", ControllerGains::NAMES[k])));
        }
    }
    let cases = evaluation_cases(scenarios, theta_prior, cfg.theta_samples, cfg.seed);
    let n_cases = cases.len();
    let mut mean = cfg.bounds.clamp(initial.to_array());
    let mut std: [f64; 6] = std::array::from_fn(|k| (cfg.bounds.upper[k] - cfg.bounds.lower[k]) / 4.0);
    let (initial_return, _) = evaluate_gains(&ControllerGains::from_array(mean), &cases, cfg.max_steps)?;
    let mut best = (mean, initial_return);
    let mut history = Vec::with_capacity(cfg.iterations);
    let n_elite = ((cfg.population as f64 * cfg.elite_fraction).ceil() as usize).max(1);

    for it in 0..cfg.iterations {
        let mut rng = derive_rng(cfg.seed, stream_id(&[streams::CALIBRATION, it as u64 + 1]));
        let candidates: Vec<[f64; 6]> = (0..cfg.population)
            .map(|_| {
                let a: [f64; 6] = std::array::from_fn(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean[k] + std[k] * z
                });
                cfg.bounds.clamp(a)
            })
            .collect();
        let mut scored = candidates
            .iter()
            .map(|c| evaluate_gains(&ControllerGains::from_array(*c), &cases, cfg.max_steps).map(|r| (*c, r)))
            .collect::<Result<Vec<_>>>()?;
        if n_cases > 0 && scored.iter().all(|(_, (_, crashes))| *crashes == n_cases) {
            log::warn!("calibration iteration {it}: every candidate crashed in every case; keeping best so far");
        }
        scored.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0));
        let elites = &scored[..n_elite];
        for k in 0..6 {
            let m = elites.iter().map(|e| e.0[k]).sum::<f64>() / n_elite as f64;
            let v = elites.iter().map(|e| (e.0[k] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mean[k] = m;
            std[k] = v.sqrt();
        }
        let (ret, _) = evaluate_gains(&ControllerGains::from_array(mean), &cases, cfg.max_steps)?;
        log::debug!("calibration iteration {it}: elite-mean return {ret:.3}");
        history.push(ret);
        if ret > best.1 {
            best = (mean, ret);
        }
    }
    Ok(CalibrationResult {
        gains: ControllerGains::from_array(best.0),
        initial_return,
        final_return: best.1,
        history,
    })
}
