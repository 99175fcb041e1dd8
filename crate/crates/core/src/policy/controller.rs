use serde::{Deserialize, Serialize};

use crate::cognition::{
    inverse_tau, kalman_update, perceptual_sigma, perturb_range, DelayBuffer, RangeTrack, DEFAULT_PROCESS_VAR,
};
use crate::env::{predict_ego, Road, WorldState, WORKZONE_ID};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream_id, streams};
use crate::types::{Action, CognitiveParams, VehicleState, DT};

/// Speed the controller regulates towards (m/s).
pub const V_TARGET: f64 = 27.8;
/// Perception horizon ahead of and behind the ego (m).
pub const PERCEPTION_AHEAD: f64 = 200.0;
pub const PERCEPTION_BEHIND: f64 = 100.0;
/// Closing-speed floor used when converting a gap into a time gap (m/s).
pub const GAP_SPEED_FLOOR: f64 = 5.0;
/// Safety margin in units of the perceptual standard deviation at that range.
pub const UNCERTAINTY_MARGIN: f64 = 2.0;
const MIN_MEAS_VAR: f64 = 1e-4;
const MIN_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub kp_speed: f64,
    pub kp_lane: f64,
    pub kd_lane: f64,
    /// Minimum accepted time gap for a lane change (s).
    pub gap_accept: f64,
    /// Distance to a blocking hazard that triggers a lane change (m).
    pub commit_dist: f64,
    pub risk_brake_gain: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            kp_speed: 1.0,
            kp_lane: 0.6,
            kd_lane: 0.3,
            gap_accept: 1.5,
            commit_dist: 120.0,
            risk_brake_gain: 0.08,
        }
    }
}

impl ControllerGains {
    pub const DIM: usize = 6;
    pub const NAMES: [&'static str; 6] = [
        "kp_speed",
        "kp_lane",
        "kd_lane",
        "gap_accept",
        "commit_dist",
        "risk_brake_gain",
    ];

    pub fn to_array(self) -> [f64; 6] {
        [
            self.kp_speed,
            self.kp_lane,
            self.kd_lane,
            self.gap_accept,
            self.commit_dist,
            self.risk_brake_gain,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ControllerGains {
            kp_speed: a[0],
            kp_lane: a[1],
            kd_lane: a[2],
            gap_accept: a[3],
            commit_dist: a[4],
            risk_brake_gain: a[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("gain {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Vehicle,
    WorkZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Ahead,
    Behind,
}

/// What the driver believes about one perceived target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetBelief {
    /// Estimated bumper-to-bumper gap.
    pub track: RangeTrack,
    pub kind: TargetKind,
    pub lane: usize,
    pub relation: Relation,
    /// Longitudinal speed of the target.
    pub speed: f64,
}

impl TargetBelief {
    pub fn is_ahead(&self) -> bool {
        self.relation == Relation::Ahead
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub target_lane: usize,
}

/// Gap the driver plans with: the estimate minus an uncertainty margin.
pub fn effective_range(belief: &TargetBelief, params: &CognitiveParams) -> f64 {
    let r = belief.track.mean;
    (r - UNCERTAINTY_MARGIN * perceptual_sigma(r.max(0.0), params)).max(MIN_RANGE)
}

fn nearest<'a>(
    beliefs: &'a [TargetBelief],
    params: &CognitiveParams,
    pred: impl Fn(&TargetBelief) -> bool,
) -> Option<(&'a TargetBelief, f64)> {
    beliefs
        .iter()
        .filter(|b| pred(b))
        .map(|b| (b, effective_range(b, params)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Whether the adjacent `lane` has acceptable front and rear time gaps.
pub fn gap_acceptable(
    beliefs: &[TargetBelief],
    lane: usize,
    ego_speed: f64,
    params: &CognitiveParams,
    gains: &ControllerGains,
) -> bool {
    let in_lane = |b: &TargetBelief| b.lane == lane && b.kind == TargetKind::Vehicle;
    let front = nearest(beliefs, params, |b| in_lane(b) && b.relation == Relation::Ahead);
    let rear = nearest(beliefs, params, |b| in_lane(b) && b.relation == Relation::Behind);
    let front_ok = front.is_none_or(|(b, r)| r / (ego_speed - b.speed).max(GAP_SPEED_FLOOR) >= gains.gap_accept);
    let rear_ok = rear.is_none_or(|(b, r)| r / (b.speed - ego_speed).max(GAP_SPEED_FLOOR) >= gains.gap_accept);
    front_ok && rear_ok
}

/// Raw (pre-delay) action from the current beliefs.
pub fn decide(
    beliefs: &[TargetBelief],
    ego: &VehicleState,
    road: &Road,
    target_lane: usize,
    params: &CognitiveParams,
    gains: &ControllerGains,
) -> Decision {
    let v = ego.vx;
    let lane = road.lane_of(ego.y);
    let hazard = nearest(beliefs, params, |b| b.is_ahead() && (b.lane == lane || b.lane == target_lane));
    let inv_tau = hazard
        .map(|(b, r)| inverse_tau(r, v - b.speed).unwrap_or(0.0))
        .unwrap_or(0.0);
    let longitudinal = (gains.kp_speed * (V_TARGET - v) / V_TARGET
        - gains.risk_brake_gain * params.c * inv_tau.tanh())
    .clamp(-1.0, 1.0);

    let mut target = target_lane.min(road.lane_count - 1);
    if target == lane {
        let blocking = nearest(beliefs, params, |b| {
            b.kind == TargetKind::WorkZone && b.lane == lane && b.is_ahead()
        });
        if let Some((_, r)) = blocking {
            if r < gains.commit_dist {
                let candidate = if lane + 1 < road.lane_count { lane + 1 } else { lane.saturating_sub(1) };
                if candidate != lane && gap_acceptable(beliefs, candidate, v, params, gains) {
                    target = candidate;
                }
            }
        }
    }

    let w = road.lane_width;
    let e = (road.lane_center(target) - ego.y) / w;
    let e_dot = -ego.vy / w;
    let steer = (gains.kp_lane * e + gains.kd_lane * e_dot).clamp(-1.0, 1.0);
    Decision {
        action: Action::new(steer, longitudinal),
        target_lane: target,
    }
}

/// The cognition-off parameter vector.
pub fn cognition_off(_params: &CognitiveParams) -> CognitiveParams {
    CognitiveParams::ZERO
}

/// Source of perception noise for a driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerceptionNoise {
    /// Perceived ranges equal the true ranges.
    Off,
    /// Noise keyed by (seed, step, target), so replays reproduce it exactly.
    Seeded(u64),
}

/// Per-episode policy state: range tracks, lane intent and action delay.
#[derive(Debug, Clone)]
pub struct DriverState {
    params: CognitiveParams,
    gains: ControllerGains,
    noise: PerceptionNoise,
    process_var: f64,
    beliefs: Vec<TargetBelief>,
    delay: DelayBuffer,
    target_lane: Option<usize>,
    last_decision: Option<Action>,
}

impl DriverState {
    pub fn new(params: CognitiveParams, gains: ControllerGains, noise: PerceptionNoise) -> Self {
        DriverState {
            params,
            gains,
            noise,
            process_var: DEFAULT_PROCESS_VAR,
            beliefs: Vec::new(),
            delay: DelayBuffer::new(params.delay_steps()),
            target_lane: None,
            last_decision: None,
        }
    }

    pub fn params(&self) -> &CognitiveParams {
        &self.params
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn noise(&self) -> PerceptionNoise {
        self.noise
    }

    pub fn beliefs(&self) -> &[TargetBelief] {
        &self.beliefs
    }

    pub fn target_lane(&self) -> Option<usize> {
        self.target_lane
    }

    /// Raw decision made on the most recent call to `act`.
    pub fn last_decision(&self) -> Option<Action> {
        self.last_decision
    }

    pub fn pending_actions(&self) -> impl Iterator<Item = &Action> {
        self.delay.pending()
    }

    /// Swap in new parameters mid-episode; the delay line is resized.
    pub fn set_params(&mut self, params: CognitiveParams) {
        self.params = params;
        self.delay.resize(params.delay_steps());
    }

    pub fn set_noise(&mut self, noise: PerceptionNoise) {
        self.noise = noise;
    }

    fn observe(&self, t: usize, id: u32, gap: f64) -> f64 {
        match self.noise {
            PerceptionNoise::Off => gap,
            PerceptionNoise::Seeded(seed) => {
                let mut rng = derive_rng(seed, stream_id(&[streams::PERCEPTION, t as u64, id as u64]));
                perturb_range(gap, &self.params, &mut rng)
            }
        }
    }

    fn fuse(&self, t: usize, id: u32, gap: f64, motion: f64, relation: Relation) -> Result<RangeTrack> {
        let z = self.observe(t, id, gap);
        let meas_var = |r: f64| perceptual_sigma(r.max(0.0), &self.params).powi(2).max(MIN_MEAS_VAR);
        match self.beliefs.iter().find(|b| b.track.target_id == id && b.relation == relation) {
            Some(prev) => {
                let predicted = prev.track.mean + motion;
                kalman_update(&prev.track, z, meas_var(predicted), self.process_var, motion, t)
            }
            None => RangeTrack::new(id, z, meas_var(z), t),
        }
    }

    /// Refresh beliefs from the world at its current step.
    pub fn perceive(&mut self, world: &WorldState) -> Result<()> {
        let ego = &world.ego;
        let t = world.t;
        let ego_lane = world.road.lane_of(ego.y);
        let mut next = Vec::with_capacity(self.beliefs.len() + 4);

        let wz = &world.workzone;
        let wz_gap = wz.x_start - ego.front_x();
        if wz_gap > 0.0 && wz_gap <= PERCEPTION_AHEAD {
            let track = self.fuse(t, WORKZONE_ID, wz_gap, -ego.vx * DT, Relation::Ahead)?;
            next.push(TargetBelief {
                track,
                kind: TargetKind::WorkZone,
                lane: wz.lane,
                relation: Relation::Ahead,
                speed: 0.0,
            });
        }

        for v in &world.background {
            if v.lane.abs_diff(ego_lane) > 1 {
                continue;
            }
            // Overlapping vehicles have zero gap and count by centre position.
            let (relation, gap, motion) = if v.x >= ego.x {
                (Relation::Ahead, (v.rear_x() - ego.front_x()).max(0.0), (v.vx - ego.vx) * DT)
            } else {
                (Relation::Behind, (ego.rear_x() - v.front_x()).max(0.0), (ego.vx - v.vx) * DT)
            };
            let in_range = match relation {
                Relation::Ahead => gap <= PERCEPTION_AHEAD,
                Relation::Behind => gap <= PERCEPTION_BEHIND,
            };
            if !in_range {
                continue;
            }
            let track = self.fuse(t, v.id, gap, motion, relation)?;
            next.push(TargetBelief {
                track,
                kind: TargetKind::Vehicle,
                lane: v.lane,
                relation,
                speed: v.vx,
            });
        }
        self.beliefs = next;
        Ok(())
    }

    /// Perceive, decide on the ego state predicted past the pending
    /// actions, and push the decision through the delay line.
    pub fn act(&mut self, world: &WorldState) -> Result<Action> {
        self.perceive(world)?;
        let lane = world.road.lane_of(world.ego.y);
        let target_lane = self.target_lane.unwrap_or(lane);
        let predicted = predict_ego(&world.ego, self.delay.pending(), &world.road);
        let decision = decide(&self.beliefs, &predicted, &world.road, target_lane, &self.params, &self.gains);
        self.target_lane = Some(decision.target_lane);
        self.last_decision = Some(decision.action);
        Ok(self.delay.apply(decision.action))
    }
}

/// One closed-loop control step.
pub fn act(state: &mut DriverState, world: &WorldState) -> Result<Action> {
    state.act(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_scenario, ScenarioConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn empty(workzone_x: f64) -> WorldState {
        let mut cfg = ScenarioConfig::default();
        cfg.background_traffic = false;
        cfg.workzone_x = workzone_x;
        make_scenario(&cfg).unwrap()
    }

    fn hazard(range: f64) -> TargetBelief {
        TargetBelief {
            track: RangeTrack::new(WORKZONE_ID, range, 1.0, 0).unwrap(),
            kind: TargetKind::WorkZone,
            lane: 0,
            relation: Relation::Ahead,
            speed: 0.0,
        }
    }

    #[test]
    fn equilibrium_without_hazards() {
        let w = empty(5000.0);
        let mut ego = w.ego;
        ego.vx = V_TARGET;
        let d = decide(&[], &ego, &w.road, 0, &CognitiveParams::ZERO, &ControllerGains::default());
        assert!(d.action.steer.abs() < 1e-9 && d.action.longitudinal.abs() < 1e-9);
        assert_eq!(d.target_lane, 0);
    }

    #[test]
    fn looming_brake_depends_on_c() {
        let w = empty(5000.0);
        let mut ego = w.ego;
        ego.vx = 27.78;
        let g = ControllerGains { commit_dist: 0.0, ..Default::default() };
        let strong = CognitiveParams::new(0.0, 0.0, 10.0, 0.0).unwrap();
        let none = CognitiveParams::ZERO;
        let a = decide(&[hazard(40.0)], &ego, &w.road, 0, &strong, &g);
        let b = decide(&[hazard(40.0)], &ego, &w.road, 0, &none, &g);
        assert!(a.action.longitudinal < 0.0);
        assert!(b.action.longitudinal >= 0.0);
        let expected = (27.8 - 27.78) / 27.8 - 0.08 * 10.0 * (27.78f64 / 40.0).tanh();
        assert_abs_diff_eq!(a.action.longitudinal, expected, epsilon = 1e-12);
    }

    #[test]
    fn lane_change_needs_trigger_and_gap() {
        let w = empty(5000.0);
        let g = ControllerGains::default();
        let p = CognitiveParams::ZERO;
        assert_eq!(decide(&[hazard(200.0)], &w.ego, &w.road, 0, &p, &g).target_lane, 0);
        let d = decide(&[hazard(100.0)], &w.ego, &w.road, 0, &p, &g);
        assert_eq!(d.target_lane, 1);
        assert!(d.action.steer > 0.0);
        let blocker = TargetBelief {
            track: RangeTrack::new(5, 0.0, 1.0, 0).unwrap(),
            kind: TargetKind::Vehicle,
            lane: 1,
            relation: Relation::Ahead,
            speed: 22.0,
        };
        assert_eq!(decide(&[hazard(100.0), blocker], &w.ego, &w.road, 0, &p, &g).target_lane, 0);
    }

    #[test]
    fn zero_params_act_equals_decide() {
        let w = empty(5000.0);
        let g = ControllerGains::default();
        let mut s = DriverState::new(CognitiveParams::ZERO, g, PerceptionNoise::Seeded(3));
        let a = s.act(&w).unwrap();
        let d = decide(s.beliefs(), &w.ego, &w.road, 0, &CognitiveParams::ZERO, &g);
        assert_eq!(a, d.action);
    }

    #[test]
    fn delay_shifts_decisions() {
        let cfg = ScenarioConfig::default();
        let mut w = make_scenario(&cfg).unwrap();
        let p = CognitiveParams::new(0.3, 2.0, 4.0, 5.0).unwrap();
        let mut s = DriverState::new(p, ControllerGains::default(), PerceptionNoise::Seeded(9));
        let mut executed = Vec::new();
        let mut decided = Vec::new();
        for _ in 0..40 {
            let a = s.act(&w).unwrap();
            executed.push(a);
            decided.push(s.last_decision().unwrap());
            w.advance(a).unwrap();
            if !w.is_running() {
                break;
            }
        }
        for t in 5..executed.len() {
            assert_eq!(executed[t], decided[t - 5]);
        }
        assert!(executed[..5].iter().all(|a| *a == Action::NEUTRAL));
    }

    #[test]
    fn same_seed_same_actions() {
        let run = |seed| {
            let mut w = make_scenario(&ScenarioConfig::default()).unwrap();
            let p = CognitiveParams::new(0.8, 4.0, 3.0, 2.0).unwrap();
            let mut s = DriverState::new(p, ControllerGains::default(), PerceptionNoise::Seeded(seed));
            let mut out = Vec::new();
            for _ in 0..60 {
                let a = s.act(&w).unwrap();
                out.push(a);
                w.advance(a).unwrap();
                if !w.is_running() {
                    break;
                }
            }
            out
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn cognition_off_is_zero() {
        let p = CognitiveParams::new(0.5, 3.0, 5.0, 10.0).unwrap();
        assert_eq!(cognition_off(&p), CognitiveParams::ZERO);
    }

    #[test]
    fn noise_free_perception_is_exact() {
        let w = make_scenario(&ScenarioConfig::default()).unwrap();
        let mut s = DriverState::new(CognitiveParams::ZERO, ControllerGains::default(), PerceptionNoise::Seeded(1));
        s.perceive(&w).unwrap();
        let wz = s.beliefs().iter().find(|b| b.kind == TargetKind::WorkZone).unwrap();
        assert_abs_diff_eq!(wz.track.mean, w.workzone.x_start - w.ego.front_x(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn longitudinal_non_increasing_in_c(c in 0.0f64..10.0, dc in 0.0f64..5.0, r in 1.0f64..200.0, v in 0.0f64..35.0) {
            let w = empty(5000.0);
            let mut ego = w.ego;
            ego.vx = v;
            let g = ControllerGains::default();
            let lo = CognitiveParams::new(0.0, 0.0, c, 0.0).unwrap();
            let hi = CognitiveParams::new(0.0, 0.0, (c + dc).min(10.0), 0.0).unwrap();
            let a = decide(&[hazard(r)], &ego, &w.road, 0, &lo, &g).action.longitudinal;
            let b = decide(&[hazard(r)], &ego, &w.road, 0, &hi, &g).action.longitudinal;
            prop_assert!(b <= a + 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }
}
