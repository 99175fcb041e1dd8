use serde::{Deserialize, Serialize};

use crate::cognition::{inverse_tau, looming_reward};
use crate::env::{Terminated, WorldState};
use crate::error::{Error, Result};
use crate::types::{Action, CognitiveParams, DT};

/// Smooth Huber loss.
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Reward weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub success: f64,
    pub off_road: f64,
    pub crash: f64,
    pub alpha_drive: f64,
    pub k_track: f64,
    pub kappa: f64,
    pub mu: f64,
    pub nu: f64,
    pub delta_v: f64,
    pub v_target: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            success: 100.0,
            off_road: -8.0,
            crash: -8.0,
            alpha_drive: 0.4,
            k_track: 0.12,
            kappa: 0.15,
            mu: 0.3,
            nu: 0.2,
            delta_v: 1.0,
            v_target: 27.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub success: f64,
    pub road: f64,
    pub crash: f64,
    pub driving: f64,
    pub track: f64,
    pub wall: f64,
    pub behavior: f64,
    pub looming: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.success
            + self.road
            + self.crash
            + self.driving
            + self.track
            + self.wall
            + self.behavior
            + self.looming;
        self
    }
}

/// Lateral stability factor: 1 at the lane centre, 0 at the lane edge.
pub fn lateral_factor(offset: f64, lane_width: f64) -> f64 {
    (1.0 - 2.0 * (offset / lane_width).abs()).clamp(0.0, 1.0)
}

/// Bumper gap and closing speed to the nearest target ahead in the ego lane.
pub fn most_constraining_ahead(world: &WorldState) -> Option<(f64, f64)> {
    let ego = &world.ego;
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |gap: f64, speed: f64| {
        if gap > 0.0 && best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, ego.vx - speed));
        }
    };
    for v in world.background.iter().filter(|v| v.lane == ego.lane) {
        if v.rear_x() > ego.front_x() {
            consider(v.rear_x() - ego.front_x(), v.vx);
        }
    }
    let wz = &world.workzone;
    if ego.lane == wz.lane && ego.front_x() < wz.x_start {
        consider(wz.x_start - ego.front_x(), 0.0);
    }
    best
}

/// Reward for the transition `prev -> next` under `action`.
pub fn reward_step(
    prev: &WorldState,
    _action: &Action,
    next: &WorldState,
    params: &CognitiveParams,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    if next.t != prev.t + 1 {
        return Err(Error::Contract(format!(
            "reward needs consecutive states, got t = {} then {}",
            prev.t, next.t
        )));
    }
    let mut r = RewardBreakdown::default();
    match next.terminated {
        Terminated::Success => r.success = cfg.success,
        Terminated::OffRoad => r.road = cfg.off_road,
        Terminated::Crash => r.crash = cfg.crash,
        Terminated::Running => {}
    }

    let road = &next.road;
    let ego = &next.ego;
    let on_road = next.terminated != Terminated::OffRoad;
    if on_road {
        let offset = ego.y - road.lane_center(road.lane_of(ego.y));
        let progress = ego.x - prev.ego.x;
        r.driving = cfg.alpha_drive * progress * lateral_factor(offset, road.lane_width);
    }

    let v = ego.speed();
    let dv = v - cfg.v_target;
    r.track = -cfg.k_track * huber(dv, cfg.delta_v);
    if v > cfg.v_target {
        let sp = softplus(dv);
        r.wall = -cfg.kappa * sp * sp;
        let acc = (v - prev.ego.speed()) / DT;
        r.behavior = cfg.mu * (-acc).max(0.0) - cfg.nu * acc.max(0.0);
    }

    if let Some((gap, closing)) = most_constraining_ahead(next) {
        r.looming = looming_reward(params.c, inverse_tau(gap, closing)?, closing);
    }
    Ok(r.finish())
}
