//! Shared fixtures for the criterion benches.

use takeover_core::filter::EpisodeContext;
use takeover_core::physio::GazeSample;
use takeover_core::sim::{simulate_episode, EpisodeConfig, ThetaSchedule};
use takeover_core::{CognitiveParams, ScenarioConfig};

/// Scenario used by every bench; moderate traffic, default work zone.
pub fn scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig::for_levels(2.0, 8.0, 1, 1, seed)
}

pub fn episode_config(seed: u64) -> EpisodeConfig {
    EpisodeConfig::new(
        scenario(seed),
        ThetaSchedule::fixed(CognitiveParams::new(0.4, 2.5, 5.0, 6.0).expect("valid parameters")),
    )
}

/// First episode at or after `seed` with at least `min_frames` frames.
pub fn episode_context(seed: u64, min_frames: usize) -> EpisodeContext {
    (seed..)
        .find_map(|s| {
            let cfg = episode_config(s);
            let ep = simulate_episode(&cfg).expect("simulation runs");
            (ep.frames.len() >= min_frames).then(|| EpisodeContext::new(cfg.scenario, ep.frames).expect("frames are contiguous"))
        })
        .expect("some seed yields a long enough episode")
}

/// Gaze wandering over the screen with periodic saccades and a slow pupil drift.
pub fn gaze(len: usize) -> Vec<GazeSample> {
    (0..len)
        .map(|t| {
            let f = t as f64;
            let jump = if t % 97 < 8 { 150.0 } else { 0.0 };
            GazeSample {
                t,
                x: 960.0 + 500.0 * (f / 240.0).sin() + jump,
                y: 540.0 + 300.0 * (f / 370.0).cos(),
                pupil: 3.5 + 0.2 * (f / 600.0).sin() + if t % 500 == 250 { 0.4 } else { 0.0 },
                valid: t % 211 != 0,
            }
        })
        .collect()
}
