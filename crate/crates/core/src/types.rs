//! Domain types shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision-step length in seconds.
pub const DT: f64 = 0.1;
/// Physics substeps per decision step (50 Hz physics, 10 Hz decisions).
pub const SUBSTEPS: usize = 5;
/// Vehicle footprint used for every agent.
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;
/// Agent id of the ego vehicle in trajectory files.
pub const EGO_ID: u32 = 0;

/// Convert a step count to seconds.
pub fn steps_to_secs(steps: f64) -> f64 {
    steps * DT
}

/// Latent bounded-rationality state: near-range perceptual noise floor,
/// far-range noise saturation, looming-aversion weight and action delay.
///
/// `d` is kept continuous so that it can random-walk inside the filter;
/// it is rounded wherever an integer number of steps is needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CognitiveParams {
    pub sigma0: f64,
    pub sigma_max: f64,
    pub c: f64,
    pub d: f64,
}

impl CognitiveParams {
    pub const ZERO: CognitiveParams = CognitiveParams {
        sigma0: 0.0,
        sigma_max: 0.0,
        c: 0.0,
        d: 0.0,
    };
    pub const DIM: usize = 4;
    pub const NAMES: [&'static str; 4] = ["sigma0", "sigma_max", "c", "d"];

    /// Checked constructor against the default bounds.
    pub fn new(sigma0: f64, sigma_max: f64, c: f64, d: f64) -> Result<Self> {
        let theta = CognitiveParams {
            sigma0,
            sigma_max,
            c,
            d,
        };
        ParamBounds::default().check(&theta)?;
        Ok(theta)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.sigma0, self.sigma_max, self.c, self.d]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        CognitiveParams {
            sigma0: a[0],
            sigma_max: a[1],
            c: a[2],
            d: a[3],
        }
    }

    /// Integer delay in decision steps.
    pub fn delay_steps(&self) -> usize {
        if self.d.is_finite() && self.d > 0.0 {
            self.d.round() as usize
        } else {
            0
        }
    }
}

/// Box bounds on [`CognitiveParams`], plus the `sigma0 <= sigma_max` coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            lower: [0.0, 0.0, 0.0, 0.0],
            upper: [1.0, 5.0, 10.0, 20.0],
        }
    }
}

impl ParamBounds {
    pub fn new(lower: [f64; 4], upper: [f64; 4]) -> Result<Self> {
        for k in 0..4 {
            if !(lower[k].is_finite() && upper[k].is_finite() && lower[k] <= upper[k]) {
                return Err(Error::Config(format!(
                    "bounds for {} must satisfy lower <= upper",
                    CognitiveParams::NAMES[k]
                )));
            }
        }
        Ok(ParamBounds { lower, upper })
    }

    /// Degenerate bounds pinned at one point.
    pub fn point(theta: CognitiveParams) -> Self {
        let a = theta.to_array();
        ParamBounds {
            lower: a,
            upper: a,
        }
    }

    pub fn width(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    /// Clamp into the box, then enforce `sigma0 <= sigma_max`.
    pub fn project(&self, theta: CognitiveParams) -> CognitiveParams {
        let mut a = theta.to_array();
        for (k, v) in a.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
        a[0] = a[0].min(a[1]);
        CognitiveParams::from_array(a)
    }

    pub fn contains(&self, theta: &CognitiveParams) -> bool {
        let a = theta.to_array();
        (0..4).all(|k| a[k] >= self.lower[k] && a[k] <= self.upper[k]) && a[0] <= a[1]
    }

    pub fn check(&self, theta: &CognitiveParams) -> Result<()> {
        let a = theta.to_array();
        for k in 0..4 {
            if !a[k].is_finite() || a[k] < self.lower[k] || a[k] > self.upper[k] {
                return Err(Error::Domain(format!(
                    "{} = {} outside [{}, {}]",
                    CognitiveParams::NAMES[k],
                    a[k],
                    self.lower[k],
                    self.upper[k]
                )));
            }
        }
        if theta.sigma0 > theta.sigma_max {
            return Err(Error::Domain(format!(
                "sigma0 = {} exceeds sigma_max = {}",
                theta.sigma0, theta.sigma_max
            )));
        }
        Ok(())
    }

    /// Centre of the box; the mean of an unconstrained uniform prior.
    pub fn midpoint(&self) -> CognitiveParams {
        let mut a = [0.0; 4];
        for (k, v) in a.iter_mut().enumerate() {
            *v = 0.5 * (self.lower[k] + self.upper[k]);
        }
        self.project(CognitiveParams::from_array(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub lane: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn new(id: u32, lane: usize, x: f64, y: f64, speed: f64, heading: f64) -> Self {
        VehicleState {
            id,
            lane,
            x,
            y,
            vx: speed * heading.cos(),
            vy: speed * heading.sin(),
            heading,
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
        }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn front_x(&self) -> f64 {
        self.x + 0.5 * self.length
    }

    pub fn rear_x(&self) -> f64 {
        self.x - 0.5 * self.length
    }
}

/// Normalised control command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    /// Positive steers towards increasing lane index.
    pub steer: f64,
    /// Positive = throttle, negative = brake.
    pub longitudinal: f64,
}

impl Action {
    pub const NEUTRAL: Action = Action {
        steer: 0.0,
        longitudinal: 0.0,
    };

    /// Build an action with both components clamped to `[-1, 1]`.
    pub fn new(steer: f64, longitudinal: f64) -> Self {
        Action {
            steer: clamp_unit(steer),
            longitudinal: clamp_unit(longitudinal),
        }
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

/// One observed decision step: all agents plus the ego's executed action.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: usize,
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
    /// Action executed from `t` to `t + 1`.
    pub action: Action,
    pub collision: bool,
}

/// `L` contiguous frames anchoring a window likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    frames: Vec<Frame>,
}

impl TrajectoryWindow {
    pub const DEFAULT_LEN: usize = 5;

    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract("trajectory window must not be empty".into()));
        }
        for w in frames.windows(2) {
            if w[1].t != w[0].t + 1 {
                return Err(Error::Contract(format!(
                    "window frames not contiguous: {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(TrajectoryWindow { frames })
    }

    /// Window of frames `k-len+1 ..= k` taken from an episode.
    pub fn ending_at(frames: &[Frame], k: usize, len: usize) -> Result<Self> {
        let end = frames
            .iter()
            .position(|f| f.t == k)
            .ok_or_else(|| Error::Contract(format!("no frame at step {k}")))?;
        if end + 1 < len {
            return Err(Error::Contract(format!(
                "window of {len} steps does not fit before step {k}"
            )));
        }
        Self::new(frames[end + 1 - len..=end].to_vec())
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_step(&self) -> usize {
        self.frames[0].t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_is_clamped() {
        let a = Action::new(3.0, -7.0);
        assert_eq!(a, Action::new(1.0, -1.0));
        assert_eq!(Action::new(f64::NAN, 0.5).steer, 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(CognitiveParams::new(0.5, 3.0, 5.0, 10.0).is_ok());
        assert!(CognitiveParams::new(2.0, 3.0, 5.0, 10.0).is_err());
        assert!(CognitiveParams::new(0.9, 0.5, 5.0, 10.0).is_err());
        assert!(CognitiveParams::new(0.5, 3.0, 11.0, 10.0).is_err());
        assert!(CognitiveParams::new(0.5, 3.0, 5.0, 21.0).is_err());
    }

    #[test]
    fn projection_restores_invariants() {
        let b = ParamBounds::default();
        let p = b.project(CognitiveParams::from_array([0.9, 0.4, 12.0, -1.0]));
        assert!(b.contains(&p));
        assert_eq!(p.sigma0, 0.4);
        assert_eq!(p.c, 10.0);
        assert_eq!(p.d, 0.0);
    }

    #[test]
    fn delay_rounds_to_nearest() {
        let mut p = CognitiveParams::ZERO;
        p.d = 2.49;
        assert_eq!(p.delay_steps(), 2);
        p.d = 2.5;
        assert_eq!(p.delay_steps(), 3);
    }

    #[test]
    fn window_requires_contiguity() {
        let f = |t| Frame {
            t,
            ego: VehicleState::new(0, 0, 0.0, 0.0, 0.0, 0.0),
            others: vec![],
            action: Action::NEUTRAL,
            collision: false,
        };
        assert!(TrajectoryWindow::new(vec![f(0), f(1), f(2)]).is_ok());
        assert!(TrajectoryWindow::new(vec![f(0), f(2)]).is_err());
        let frames: Vec<_> = (0..10).map(f).collect();
        let w = TrajectoryWindow::ending_at(&frames, 7, 5).unwrap();
        assert_eq!(w.first_step(), 3);
        assert!(TrajectoryWindow::ending_at(&frames, 3, 5).is_err());
    }
}
