//! Closed-loop highway world for the work-zone takeover scenario.
//!
//! Physics runs at 50 Hz under 10 Hz decisions. The ego is a kinematic
//! bicycle; background traffic follows the intelligent driver model in its
//! own lane. Worlds are plain values: cloning is a snapshot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams};
use crate::types::{Action, Frame, VehicleState, DT, EGO_ID, SUBSTEPS, VEHICLE_LENGTH};

/// Partner id reported when the ego hits the work zone.
pub const WORKZONE_ID: u32 = u32::MAX;

const SUBSTEP_DT: f64 = DT / SUBSTEPS as f64;
const IDM_MAX_BRAKE: f64 = 9.0;
const OVERLAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoLimits {
    /// Steering angle at full command (rad).
    pub max_steer: f64,
    /// Acceleration at full throttle (m/s²).
    pub max_accel: f64,
    /// Deceleration at full brake (m/s²).
    pub max_decel: f64,
    pub wheelbase: f64,
    /// Linear drag coefficient (1/s); zero disables drag.
    pub drag: f64,
}

impl Default for EgoLimits {
    fn default() -> Self {
        EgoLimits {
            max_steer: 0.5,
            max_accel: 3.0,
            max_decel: 8.0,
            wheelbase: 2.7,
            drag: 0.0,
        }
    }
}

/// Car-following parameters for background traffic. Desired speed and time
/// headway come from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub min_gap: f64,
    pub accel: f64,
    pub decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            min_gap: 2.0,
            accel: 1.5,
            decel: 2.0,
            exponent: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Lanes per direction; lane 0 is the leftmost.
    pub lane_count: usize,
    pub lane_width: f64,
    pub ego_speed0: f64,
    pub background_speed: f64,
    /// Background time headway (s).
    pub th_level: f64,
    pub workzone_x: f64,
    pub workzone_length: f64,
    pub takeover_x: f64,
    /// Takeover lead time (s); metadata.
    pub tlt: f64,
    pub tor_id: u8,
    pub ndrt_id: u8,
    pub seed: u64,
    /// Relative half-width of the uniform headway jitter.
    pub headway_jitter: f64,
    /// Traffic is placed from `takeover_x - traffic_behind` ...
    pub traffic_behind: f64,
    /// ... to `workzone end + traffic_ahead`.
    pub traffic_ahead: f64,
    /// Episode succeeds once the ego passes the work-zone end by this much.
    pub success_margin: f64,
    /// Place background vehicles; `false` gives an empty road.
    pub background_traffic: bool,
    pub limits: EgoLimits,
    pub idm: IdmParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::for_levels(2.0, 6.0, 1, 1, 0)
    }
}

impl ScenarioConfig {
    pub const TH_LEVELS: [f64; 3] = [1.75, 2.0, 2.25];
    pub const TLT_LEVELS: [f64; 4] = [4.0, 6.0, 8.0, 10.0];

    /// Scenario for one experimental cell. The work zone starts where the
    /// ego arrives after `tlt` seconds at its initial speed.
    pub fn for_levels(th_level: f64, tlt: f64, tor_id: u8, ndrt_id: u8, seed: u64) -> Self {
        let ego_speed0 = 27.78;
        ScenarioConfig {
            lane_count: 4,
            lane_width: 3.5,
            ego_speed0,
            background_speed: 22.22,
            th_level,
            workzone_x: tlt * ego_speed0,
            workzone_length: 80.0,
            takeover_x: 0.0,
            tlt,
            tor_id,
            ndrt_id,
            seed,
            headway_jitter: 0.1,
            traffic_behind: 200.0,
            traffic_ahead: 400.0,
            success_margin: 50.0,
            background_traffic: true,
            limits: EgoLimits::default(),
            idm: IdmParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.lane_count < 2 {
            return bad(format!("lane_count must be >= 2, got {}", self.lane_count));
        }
        for (name, v) in [
            ("lane_width", self.lane_width),
            ("ego_speed0", self.ego_speed0),
            ("background_speed", self.background_speed),
            ("th_level", self.th_level),
            ("workzone_length", self.workzone_length),
            ("tlt", self.tlt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.takeover_x < self.workzone_x) {
            return bad(format!(
                "takeover_x ({}) must lie before workzone_x ({})",
                self.takeover_x, self.workzone_x
            ));
        }
        if !(1..=8).contains(&self.tor_id) {
            return bad(format!("tor_id must be in 1..=8, got {}", self.tor_id));
        }
        if !(1..=4).contains(&self.ndrt_id) {
            return bad(format!("ndrt_id must be in 1..=4, got {}", self.ndrt_id));
        }
        if !(0.0..0.5).contains(&self.headway_jitter) {
            return bad(format!("headway_jitter must be in [0, 0.5), got {}", self.headway_jitter));
        }
        let min_spacing = self.th_level * self.background_speed * (1.0 - self.headway_jitter);
        if min_spacing - VEHICLE_LENGTH < self.idm.min_gap {
            return bad(format!(
                "headway {} s too small: spacing {:.2} m leaves less than {} m between {} m vehicles",
                self.th_level, min_spacing, self.idm.min_gap, VEHICLE_LENGTH
            ));
        }
        let l = &self.limits;
        if !(l.max_steer > 0.0 && l.max_accel > 0.0 && l.max_decel > 0.0 && l.wheelbase > 0.0 && l.drag >= 0.0) {
            return bad("ego limits must be positive".into());
        }
        Ok(())
    }

    pub fn workzone(&self) -> WorkZone {
        WorkZone {
            lane: 0,
            x_start: self.workzone_x,
            x_end: self.workzone_x + self.workzone_length,
        }
    }

    fn road(&self) -> Road {
        Road {
            lane_count: self.lane_count,
            lane_width: self.lane_width,
            background_speed: self.background_speed,
            th_level: self.th_level,
            success_x: self.workzone_x + self.workzone_length + self.success_margin,
            limits: self.limits,
            idm: self.idm,
        }
    }
}

/// Occupied stretch of one lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkZone {
    pub lane: usize,
    pub x_start: f64,
    pub x_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminated {
    Running,
    Success,
    Crash,
    OffRoad,
}

/// Road geometry and dynamics constants carried by every world value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Road {
    pub lane_count: usize,
    pub lane_width: f64,
    pub background_speed: f64,
    pub th_level: f64,
    pub success_x: f64,
    pub limits: EgoLimits,
    pub idm: IdmParams,
}

impl Road {
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    pub fn lane_of(&self, y: f64) -> usize {
        let l = (y / self.lane_width).floor();
        if l <= 0.0 {
            0
        } else {
            (l as usize).min(self.lane_count - 1)
        }
    }

    pub fn drivable_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// Whether a lateral extent `[y - half_w, y + half_w]` intersects `lane`.
    pub fn overlaps_lane(&self, y: f64, half_w: f64, lane: usize) -> bool {
        let lo = lane as f64 * self.lane_width;
        let hi = lo + self.lane_width;
        y + half_w > lo && y - half_w < hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: usize,
    pub ego: VehicleState,
    /// Sorted by lane, then by x.
    pub background: Vec<VehicleState>,
    pub workzone: WorkZone,
    pub terminated: Terminated,
    pub road: Road,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub t: usize,
    pub partner_id: u32,
    pub x: f64,
}

/// Oriented bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub cx: f64,
    pub cy: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub heading: f64,
}

impl Obb {
    pub fn of_vehicle(v: &VehicleState) -> Self {
        Obb {
            cx: v.x,
            cy: v.y,
            half_length: 0.5 * v.length,
            half_width: 0.5 * v.width,
            heading: v.heading,
        }
    }

    pub fn of_workzone(wz: &WorkZone, road: &Road) -> Self {
        Obb {
            cx: 0.5 * (wz.x_start + wz.x_end),
            cy: road.lane_center(wz.lane),
            half_length: 0.5 * (wz.x_end - wz.x_start),
            half_width: 0.5 * road.lane_width,
            heading: 0.0,
        }
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let [u, v] = self.axes();
        let centre = self.cx * axis.0 + self.cy * axis.1;
        let r = self.half_length * (u.0 * axis.0 + u.1 * axis.1).abs()
            + self.half_width * (v.0 * axis.0 + v.1 * axis.1).abs();
        (centre - r, centre + r)
    }

    /// Separating-axis test on closed boxes: touching counts as overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        self.axes().iter().chain(other.axes().iter()).all(|&axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a1 + OVERLAP_EPS >= b0 && b1 + OVERLAP_EPS >= a0
        })
    }
}

/// One physics substep of the ego's rear-axle kinematic bicycle.
pub fn integrate_ego_substep(ego: &mut VehicleState, action: Action, road: &Road) {
    let lim = road.limits;
    let v0 = ego.speed();
    let mut accel = if action.longitudinal >= 0.0 {
        action.longitudinal * lim.max_accel
    } else {
        action.longitudinal * lim.max_decel
    };
    accel -= lim.drag * v0;
    let v1 = (v0 + accel * SUBSTEP_DT).max(0.0);
    let v_mid = 0.5 * (v0 + v1);
    let delta = action.steer * lim.max_steer;
    ego.heading += v_mid * delta.tan() / lim.wheelbase * SUBSTEP_DT;
    let (s, c) = ego.heading.sin_cos();
    ego.x += v_mid * c * SUBSTEP_DT;
    ego.y += v_mid * s * SUBSTEP_DT;
    ego.vx = v1 * c;
    ego.vy = v1 * s;
    ego.lane = road.lane_of(ego.y);
}

/// Ego state after executing `actions` in order on an otherwise empty road.
pub fn predict_ego<'a>(ego: &VehicleState, actions: impl IntoIterator<Item = &'a Action>, road: &Road) -> VehicleState {
    let mut e = *ego;
    for a in actions {
        let a = Action::new(a.steer, a.longitudinal);
        for _ in 0..SUBSTEPS {
            integrate_ego_substep(&mut e, a, road);
        }
    }
    e
}

/// Build the initial world for a scenario.
pub fn make_scenario(config: &ScenarioConfig) -> Result<WorldState> {
    config.validate()?;
    let road = config.road();
    let workzone = config.workzone();
    let mut rng = derive_rng(config.seed, streams::PLACEMENT);
    let ego = VehicleState::new(
        EGO_ID,
        workzone.lane,
        config.takeover_x,
        road.lane_center(workzone.lane),
        config.ego_speed0,
        0.0,
    );

    let mean = config.th_level * config.background_speed;
    let jitter = config.headway_jitter;
    let x_lo = config.takeover_x - config.traffic_behind;
    let x_hi = workzone.x_end + config.traffic_ahead;
    let mut background = Vec::new();
    let mut next_id = EGO_ID + 1;
    let spacing = |rng: &mut crate::rng::RngStream| mean * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0));

    let lanes = if config.background_traffic { config.lane_count } else { 0 };
    for lane in 0..lanes {
        let y = road.lane_center(lane);
        let mut xs = Vec::new();
        if lane == workzone.lane {
            // Only behind the ego: the work zone blocks the lane ahead.
            let mut x = config.takeover_x - spacing(&mut rng);
            while x >= x_lo {
                xs.push(x);
                x -= spacing(&mut rng);
            }
            xs.reverse();
        } else {
            let mut x = x_lo + rng.random::<f64>() * mean;
            while x <= x_hi {
                xs.push(x);
                x += spacing(&mut rng);
            }
        }
        for x in xs {
            background.push(VehicleState::new(next_id, lane, x, y, config.background_speed, 0.0));
            next_id += 1;
        }
    }

    let mut world = WorldState {
        t: 0,
        ego,
        background,
        workzone,
        terminated: Terminated::Running,
        road,
    };
    world.sort_background();
    world.update_termination();
    Ok(world)
}

/// Advance one decision step, returning the new world.
pub fn step(world: &WorldState, ego_action: Action) -> Result<WorldState> {
    let mut next = world.clone();
    next.advance(ego_action)?;
    Ok(next)
}

/// Collision between the ego's box and any vehicle or the work zone.
pub fn detect_collision(world: &WorldState) -> Option<CollisionEvent> {
    let ego_box = Obb::of_vehicle(&world.ego);
    let event = |partner_id| CollisionEvent {
        t: world.t,
        partner_id,
        x: world.ego.x,
    };
    if ego_box.overlaps(&Obb::of_workzone(&world.workzone, &world.road)) {
        return Some(event(WORKZONE_ID));
    }
    world
        .background
        .iter()
        .filter(|v| (v.x - world.ego.x).abs() <= v.length + world.ego.length)
        .find(|v| ego_box.overlaps(&Obb::of_vehicle(v)))
        .map(|v| event(v.id))
}

impl WorldState {
    /// Reconstruct a world from an observed frame and its scenario.
    pub fn from_frame(frame: &Frame, config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut world = WorldState {
            t: frame.t,
            ego: frame.ego,
            background: frame.others.clone(),
            workzone: config.workzone(),
            terminated: Terminated::Running,
            road: config.road(),
        };
        world.sort_background();
        world.update_termination();
        if frame.collision {
            world.terminated = Terminated::Crash;
        }
        Ok(world)
    }

    pub fn to_frame(&self, action: Action) -> Frame {
        Frame {
            t: self.t,
            ego: self.ego,
            others: self.background.clone(),
            action,
            collision: self.terminated == Terminated::Crash,
        }
    }

    pub fn is_running(&self) -> bool {
        self.terminated == Terminated::Running
    }

    pub fn snapshot(&self) -> WorldState {
        self.clone()
    }

    fn sort_background(&mut self) {
        self.background
            .sort_by(|a, b| a.lane.cmp(&b.lane).then(a.x.total_cmp(&b.x)));
    }

    /// Advance in place by one decision step (five physics substeps).
    pub fn advance(&mut self, ego_action: Action) -> Result<()> {
        if !self.is_running() {
            return Err(Error::State(format!(
                "step called on terminated world ({:?}) at t = {}",
                self.terminated, self.t
            )));
        }
        let action = Action::new(ego_action.steer, ego_action.longitudinal);
        let mut accels = vec![0.0; self.background.len()];
        for _ in 0..SUBSTEPS {
            for (i, a) in accels.iter_mut().enumerate() {
                *a = self.idm_accel(i);
            }
            for (v, &a) in self.background.iter_mut().zip(&accels) {
                let v0 = v.vx;
                let v1 = (v0 + a * SUBSTEP_DT).max(0.0);
                v.x += 0.5 * (v0 + v1) * SUBSTEP_DT;
                v.vx = v1;
            }
            self.integrate_ego(action);
            if detect_collision(self).is_some() {
                break;
            }
        }
        self.t += 1;
        self.update_termination();
        Ok(())
    }

    fn integrate_ego(&mut self, action: Action) {
        integrate_ego_substep(&mut self.ego, action, &self.road);
    }

    fn idm_accel(&self, i: usize) -> f64 {
        let me = &self.background[i];
        let idm = self.road.idm;
        let v = me.vx.max(0.0);
        let v0 = self.road.background_speed;
        let mut lead: Option<(f64, f64)> = None;
        let mut consider = |gap: f64, speed: f64| {
            if lead.is_none_or(|(g, _)| gap < g) {
                lead = Some((gap, speed));
            }
        };
        if let Some(next) = self.background.get(i + 1) {
            if next.lane == me.lane {
                consider(next.rear_x() - me.front_x(), next.vx);
            }
        }
        let ego = &self.ego;
        if ego.x > me.x && self.road.overlaps_lane(ego.y, 0.5 * ego.width, me.lane) {
            consider(ego.rear_x() - me.front_x(), ego.vx);
        }
        if me.lane == self.workzone.lane && self.workzone.x_start > me.x {
            consider(self.workzone.x_start - me.front_x(), 0.0);
        }
        let free = idm.accel * (1.0 - (v / v0).powf(idm.exponent));
        let a = match lead {
            None => free,
            Some((gap, lead_speed)) => {
                let dv = v - lead_speed;
                let s_star = idm.min_gap
                    + (v * self.road.th_level + v * dv / (2.0 * (idm.accel * idm.decel).sqrt())).max(0.0);
                let s = gap.max(0.01);
                free - idm.accel * (s_star / s).powi(2)
            }
        };
        a.clamp(-IDM_MAX_BRAKE, idm.accel)
    }

    fn update_termination(&mut self) {
        self.terminated = if detect_collision(self).is_some() {
            Terminated::Crash
        } else if self.ego.y < 0.0 || self.ego.y > self.road.drivable_width() {
            Terminated::OffRoad
        } else if self.ego.x > self.road.success_x {
            Terminated::Success
        } else {
            Terminated::Running
        };
    }

    /// Vehicles in `lane` nearest ahead of and behind the ego (by centre x).
    pub fn neighbours_in_lane(&self, lane: usize) -> (Option<&VehicleState>, Option<&VehicleState>) {
        let mut ahead: Option<&VehicleState> = None;
        let mut behind: Option<&VehicleState> = None;
        for v in self.background.iter().filter(|v| v.lane == lane) {
            if v.x >= self.ego.x {
                if ahead.is_none_or(|a| v.x < a.x) {
                    ahead = Some(v);
                }
            } else if behind.is_none_or(|b| v.x > b.x) {
                behind = Some(v);
            }
        }
        (ahead, behind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empty_road() -> WorldState {
        let mut w = make_scenario(&ScenarioConfig::default()).unwrap();
        w.background.clear();
        w
    }

    #[test]
    fn default_scenario_contract() {
        let cfg = ScenarioConfig::default();
        let w = make_scenario(&cfg).unwrap();
        assert_eq!(w.ego.lane, 0);
        assert_eq!(w.ego.x, cfg.takeover_x);
        assert_abs_diff_eq!(w.ego.speed(), cfg.ego_speed0, epsilon = 1e-12);
        assert_eq!(w.workzone.lane, 0);
        assert_eq!(w.workzone.x_start, cfg.workzone_x);
        assert!(w.is_running());
        for v in &w.background {
            let in_wz = v.lane == w.workzone.lane
                && v.front_x() >= w.workzone.x_start
                && v.rear_x() <= w.workzone.x_end;
            assert!(!in_wz);
        }
    }

    #[test]
    fn mean_spacing_matches_headway() {
        let cfg = ScenarioConfig::for_levels(2.25, 6.0, 1, 1, 1);
        let w = make_scenario(&cfg).unwrap();
        let expected = 2.25 * 22.22;
        let xs: Vec<f64> = w.background.iter().filter(|v| v.lane == 1).map(|v| v.x).collect();
        let gaps: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean - expected).abs() < 0.05 * expected, "mean gap {mean}");
        assert!(gaps.iter().all(|g| (g - expected).abs() <= 0.1 * expected + 1e-9));
    }

    #[test]
    fn workzone_before_takeover_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.workzone_x = cfg.takeover_x;
        assert!(matches!(make_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn infeasible_headway_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.th_level = 0.25;
        assert!(matches!(make_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn free_rolling() {
        let w = empty_road();
        let n = step(&w, Action::NEUTRAL).unwrap();
        assert_abs_diff_eq!(n.ego.x - w.ego.x, 27.78 * DT, epsilon = 1e-9);
        assert_abs_diff_eq!(n.ego.speed(), 27.78, epsilon = 1e-12);
        assert_eq!(n.t, 1);
    }

    #[test]
    fn full_brake_analytic() {
        let w = empty_road();
        let n = step(&w, Action::new(0.0, -1.0)).unwrap();
        assert_abs_diff_eq!(n.ego.speed(), 26.98, epsilon = 1e-9);
    }

    #[test]
    fn driving_into_workzone_crashes() {
        let mut w = empty_road();
        w.ego.x = w.workzone.x_start - 3.0;
        let n = step(&w, Action::NEUTRAL).unwrap();
        assert_eq!(n.terminated, Terminated::Crash);
        assert_eq!(detect_collision(&n).unwrap().partner_id, WORKZONE_ID);
        assert!(matches!(step(&n, Action::NEUTRAL), Err(Error::State(_))));
    }

    #[test]
    fn collision_geometry() {
        let a = VehicleState::new(1, 0, 0.0, 0.0, 0.0, 0.0);
        let mut b = a;
        b.id = 2;
        assert!(Obb::of_vehicle(&a).overlaps(&Obb::of_vehicle(&b)));
        b.x = 10.0 + a.length;
        assert!(!Obb::of_vehicle(&a).overlaps(&Obb::of_vehicle(&b)));
        // Corner contact.
        b.x = a.length;
        b.y = a.width;
        assert!(Obb::of_vehicle(&a).overlaps(&Obb::of_vehicle(&b)));
        assert!(Obb::of_vehicle(&b).overlaps(&Obb::of_vehicle(&a)));
        b.y = a.width + 1e-6;
        assert!(!Obb::of_vehicle(&a).overlaps(&Obb::of_vehicle(&b)));
        // Rotated box reaching across.
        let mut r = b;
        r.y = 2.5;
        r.x = 2.0;
        r.heading = std::f64::consts::FRAC_PI_2;
        assert!(Obb::of_vehicle(&a).overlaps(&Obb::of_vehicle(&r)));
    }

    #[test]
    fn snapshot_is_independent() {
        let w = make_scenario(&ScenarioConfig::default()).unwrap();
        let snap = w.snapshot();
        assert_eq!(snap, w);
        let mut c = snap.clone();
        for _ in 0..10 {
            c.advance(Action::new(0.0, 0.2)).unwrap();
        }
        assert_eq!(snap, w);
        assert_eq!(c.t, 10);
        let mut d = w.snapshot();
        for _ in 0..10 {
            d.advance(Action::new(0.0, 0.2)).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn background_keeps_count_and_stops_for_workzone() {
        let mut w = make_scenario(&ScenarioConfig::default()).unwrap();
        let n = w.background.len();
        // Park the ego far off to the right so it never interferes.
        w.ego.y = w.road.lane_center(3);
        w.ego.x = -1000.0;
        w.ego.vx = 0.0;
        w.ego.lane = 3;
        for _ in 0..400 {
            if !w.is_running() {
                break;
            }
            w.advance(Action::NEUTRAL).unwrap();
            assert_eq!(w.background.len(), n);
            for v in w.background.iter().filter(|v| v.lane == 0) {
                assert!(v.front_x() < w.workzone.x_start);
            }
        }
    }

    #[test]
    fn frame_round_trip() {
        let cfg = ScenarioConfig::default();
        let w = make_scenario(&cfg).unwrap();
        let w2 = WorldState::from_frame(&w.to_frame(Action::NEUTRAL), &cfg).unwrap();
        assert_eq!(w, w2);
    }

    #[test]
    fn off_road_detected() {
        let mut w = empty_road();
        w.ego.y = 0.3;
        w.ego.heading = -0.3;
        let mut n = w;
        for _ in 0..5 {
            if !n.is_running() {
                break;
            }
            n.advance(Action::NEUTRAL).unwrap();
        }
        assert_eq!(n.terminated, Terminated::OffRoad);
    }
}
