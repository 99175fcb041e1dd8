//! Bounded-rationality mechanisms: range-dependent perceptual noise with
//! scalar Kalman fusion, inverse-tau looming appraisal, and a FIFO action
//! delay.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{Action, CognitiveParams};

/// Range at which the noise reaches its saturation level (m).
pub const R_FAR: f64 = 150.0;
/// Default Kalman process variance for moving targets (m² per step).
pub const DEFAULT_PROCESS_VAR: f64 = 0.25;

/// Range-dependent perceptual standard deviation with saturation at
/// `sigma_max`. The slope is chosen so the cap is reached exactly at
/// `r_far`.
pub fn sigma_x(r: f64, sigma0: f64, sigma_max: f64, r_far: f64) -> Result<f64> {
    if !(sigma0 >= 0.0 && sigma0 <= sigma_max) {
        return Err(Error::Domain(format!(
            "need 0 <= sigma0 <= sigma_max, got sigma0 = {sigma0}, sigma_max = {sigma_max}"
        )));
    }
    if !(r >= 0.0) || !(r_far > 0.0) {
        return Err(Error::Domain(format!("need r >= 0 and r_far > 0, got r = {r}, r_far = {r_far}")));
    }
    Ok(sigma_x_unchecked(r, sigma0, sigma_max, r_far))
}

pub(crate) fn sigma_x_unchecked(r: f64, sigma0: f64, sigma_max: f64, r_far: f64) -> f64 {
    let sigma0 = sigma0.max(0.0);
    let sigma_max = sigma_max.max(sigma0);
    if r >= r_far {
        return sigma_max;
    }
    let k = (sigma_max * sigma_max - sigma0 * sigma0).sqrt() / r_far;
    let kr = k * r.max(0.0);
    (sigma0 * sigma0 + kr * kr).sqrt().min(sigma_max)
}

/// Noise level the driver attributes to a range estimate.
pub fn perceptual_sigma(r: f64, params: &CognitiveParams) -> f64 {
    sigma_x_unchecked(r, params.sigma0, params.sigma_max, R_FAR)
}

/// Observed range: the true range plus zero-mean Gaussian noise, clamped at 0.
///
/// Always consumes exactly one normal draw so that streams stay aligned
/// whatever the parameters.
pub fn perturb_range<R: Rng + ?Sized>(r_true: f64, params: &CognitiveParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let sigma = perceptual_sigma(r_true.max(0.0), params);
    (r_true + sigma * z).max(0.0)
}

/// Scalar Gaussian belief over the range to one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTrack {
    pub target_id: u32,
    pub mean: f64,
    pub variance: f64,
    pub last_update: usize,
}

impl RangeTrack {
    pub fn new(target_id: u32, mean: f64, variance: f64, t: usize) -> Result<Self> {
        if !(variance > 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!(
                "track needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(RangeTrack {
            target_id,
            mean,
            variance,
            last_update: t,
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// One predict/correct cycle of the scalar Kalman filter.
pub fn kalman_update(
    track: &RangeTrack,
    z: f64,
    meas_var: f64,
    process_var: f64,
    predicted_motion: f64,
    t: usize,
) -> Result<RangeTrack> {
    if !(meas_var > 0.0) {
        return Err(Error::Domain(format!("measurement variance must be positive, got {meas_var}")));
    }
    if !(process_var >= 0.0) {
        return Err(Error::Domain(format!("process variance must be non-negative, got {process_var}")));
    }
    if !(track.variance > 0.0) {
        return Err(Error::Domain(format!("prior variance must be positive, got {}", track.variance)));
    }
    let prior_mean = track.mean + predicted_motion;
    let prior_var = track.variance + process_var;
    let gain = prior_var / (prior_var + meas_var);
    Ok(RangeTrack {
        target_id: track.target_id,
        mean: prior_mean + gain * (z - prior_mean),
        variance: (1.0 - gain) * prior_var,
        last_update: t,
    })
}

/// Inverse time-to-arrival `v / range`; zero when the gap is opening.
pub fn inverse_tau(range: f64, closing_speed: f64) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::Domain(format!("inverse tau needs a positive range, got {range}")));
    }
    Ok(if closing_speed > 0.0 {
        closing_speed / range
    } else {
        0.0
    })
}

/// Looming-aversion reward `-c tanh(1/tau)` while closing, else zero.
pub fn looming_reward(c: f64, inv_tau: f64, closing_speed: f64) -> f64 {
    if closing_speed > 0.0 {
        -c * inv_tau.tanh()
    } else {
        0.0
    }
}

/// FIFO of decided-but-not-yet-executed actions.
///
/// The queue always holds exactly `delay` entries; it starts filled with
/// neutral actions, so the first `delay` executed actions are neutral.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    queue: VecDeque<Action>,
}

impl DelayBuffer {
    pub fn new(delay: usize) -> Self {
        DelayBuffer {
            queue: std::iter::repeat_n(Action::NEUTRAL, delay).collect(),
        }
    }

    pub fn delay(&self) -> usize {
        self.queue.len()
    }

    pub fn reset(&mut self) {
        let d = self.delay();
        *self = DelayBuffer::new(d);
    }

    /// Change the delay. Growing repeats the next action to execute;
    /// shrinking drops the oldest pending actions.
    pub fn resize(&mut self, delay: usize) {
        while self.queue.len() > delay {
            self.queue.pop_front();
        }
        let fill = self.queue.front().copied().unwrap_or(Action::NEUTRAL);
        while self.queue.len() < delay {
            self.queue.push_front(fill);
        }
    }

    /// Actions that will execute over the next `delay` steps, oldest first.
    pub fn pending(&self) -> impl Iterator<Item = &Action> {
        self.queue.iter()
    }

    /// Enqueue `a` and return the action decided `delay` steps ago.
    pub fn apply(&mut self, a: Action) -> Action {
        if self.queue.is_empty() {
            return a;
        }
        self.queue.push_back(a);
        self.queue.pop_front().unwrap_or(Action::NEUTRAL)
    }
}

pub fn delay_apply(buffer: &mut DelayBuffer, a: Action) -> Action {
    buffer.apply(a)
}
