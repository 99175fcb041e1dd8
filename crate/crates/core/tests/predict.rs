use proptest::prelude::*;
use takeover_core::filter::{EpisodeContext, FilterConfig};
use takeover_core::policy::{ControllerGains, DriverState, PerceptionNoise};
use takeover_core::predict::*;
use takeover_core::sim::{simulate_episode, EpisodeConfig, ThetaSchedule};
use takeover_core::*;

fn empty_road() -> ScenarioConfig {
    ScenarioConfig {
        background_traffic: false,
        ..Default::default()
    }
}

/// Ego in the work-zone lane with its front bumper `gap` metres short of it.
fn before_workzone(gap: f64) -> WorldState {
    let mut w = make_scenario(&empty_road()).unwrap();
    w.ego.x = w.workzone.x_start - gap - 0.5 * w.ego.length;
    w
}

fn driver(theta: [f64; 4]) -> DriverState {
    DriverState::new(
        CognitiveParams::from_array(theta),
        ControllerGains::default(),
        PerceptionNoise::Off,
    )
}

fn evaluation(t_flag: Option<usize>, t_col: Option<usize>) -> EpisodeEvaluation {
    EpisodeEvaluation {
        method: Method::Adaptive,
        records: Vec::new(),
        t_flag,
        t_col,
        rmse_pos: Vec::new(),
        rmse_vel: Vec::new(),
        rmse_weighted: Vec::new(),
        theta_hat: Vec::new(),
    }
}

fn shifted(states: &[VehicleState], dx: f64, dvx: f64) -> Vec<VehicleState> {
    states
        .iter()
        .map(|s| VehicleState {
            x: s.x + dx,
            vx: s.vx + dvx,
            ..*s
        })
        .collect()
}

#[test]
fn empty_road_far_from_workzone_is_not_flagged() {
    let w = before_workzone(500.0);
    let r = rollout_adaptive(&w, driver([0.0; 4]), DEFAULT_HORIZON).unwrap();
    assert!(!r.collision_flag);
    assert_eq!(r.predicted.len(), DEFAULT_HORIZON);
    assert!(r.predicted.iter().all(|e| (e.y - w.ego.y).abs() < 1e-9));
}

#[test]
fn long_delay_cannot_avoid_the_workzone() {
    let w = before_workzone(20.0);
    let v = w.ego.speed();
    let r = rollout_adaptive(&w, driver([0.0, 0.0, 0.0, 20.0]), DEFAULT_HORIZON).unwrap();
    // coasting for the whole delay: first step whose travel covers the gap
    let expected = (20.0 / (v * DT)).ceil() as usize;
    assert_eq!(r.flagged_step, Some(w.t + expected));
    // integration halts at the first overlapping substep
    let h = DT / takeover_core::types::SUBSTEPS as f64;
    let substeps = (20.0 / (v * h)).ceil();
    let (fx, _) = r.flagged_position.unwrap();
    assert!((fx - (w.ego.x + substeps * v * h)).abs() < 1e-6);
}

#[test]
fn immediate_driver_avoids_the_workzone() {
    let w = before_workzone(20.0);
    let r = rollout_adaptive(&w, driver([0.0, 0.0, 10.0, 0.0]), DEFAULT_HORIZON).unwrap();
    assert!(!r.collision_flag);
}

#[test]
fn five_metre_anchor_with_long_delay_flags_early() {
    let w = before_workzone(5.0);
    let r = rollout_adaptive(&w, driver([0.0, 0.0, 0.0, 20.0]), DEFAULT_HORIZON).unwrap();
    assert!(r.flagged_step.unwrap() - w.t <= 5);
}

#[test]
fn terminated_anchor_is_rejected() {
    let mut w = before_workzone(20.0);
    w.terminated = Terminated::Crash;
    assert!(rollout_adaptive(&w, driver([0.0; 4]), 10).is_err());
}

#[test]
fn cv_flags_at_first_overlap() {
    for gap in [3.0, 20.0, 41.0] {
        let w = before_workzone(gap);
        let v = w.ego.speed();
        let r = rollout_cv(&w, DEFAULT_HORIZON).unwrap();
        assert_eq!(r.flagged_step, Some(w.t + (gap / (v * DT)).ceil() as usize), "gap {gap}");
    }
}

#[test]
fn cv_parallel_and_stationary_worlds_are_clear() {
    let mut w = before_workzone(500.0);
    let mut other = w.ego;
    other.id = 7;
    other.lane = 1;
    other.y = w.road.lane_center(1);
    w.background = vec![other];
    assert!(!rollout_cv(&w, DEFAULT_HORIZON).unwrap().collision_flag);

    let mut still = before_workzone(30.0);
    still.ego.vx = 0.0;
    still.ego.vy = 0.0;
    let r = rollout_cv(&still, DEFAULT_HORIZON).unwrap();
    assert!(!r.collision_flag);
    assert!(r.predicted.iter().all(|e| e.x == still.ego.x));
}

#[test]
fn rmse_closed_forms() {
    let w = before_workzone(100.0);
    let path = rollout_cv(&w, 10).unwrap().predicted;
    let same = rmse(&path, &path, 0.5, 0.5).unwrap();
    assert_eq!((same.pos, same.vel, same.weighted), (0.0, 0.0, 0.0));

    let r = rmse(&shifted(&path, 3.0, 0.0), &path, 0.5, 0.5).unwrap();
    assert!((r.pos - 3.0).abs() < 1e-9 && r.vel.abs() < 1e-9);
    assert!((r.weighted - 3.0 / 2f64.sqrt()).abs() < 1e-9);

    let r = rmse(&shifted(&path, 3.0, 1.0), &path, 0.5, 0.5).unwrap();
    assert!((r.vel - 1.0).abs() < 1e-9);
    assert!((r.weighted - 5f64.sqrt()).abs() < 1e-9);

    assert!(rmse(&path[..3], &path, 0.5, 0.5).is_err());
    assert!(rmse(&[], &[], 0.5, 0.5).is_err());
    assert!(rmse(&path, &path, 0.7, 0.7).is_err());
}

#[test]
fn early_warning_thresholds() {
    assert!(early_warning_hit(&evaluation(Some(68), Some(94)), 0.5));
    assert!(early_warning_hit(&evaluation(Some(68), Some(94)), 2.6));
    assert!(!early_warning_hit(&evaluation(None, Some(94)), 0.5));
    assert!(!early_warning_hit(&evaluation(Some(93), Some(94)), 0.5));
}

#[test]
fn coverage_counts() {
    // leads 0.3, 0.7, 1.5, 2.5 s
    let evals: Vec<_> = [3, 7, 15, 25].iter().map(|l| evaluation(Some(100 - l), Some(100))).collect();
    let refs: Vec<&EpisodeEvaluation> = evals.iter().collect();
    assert_eq!(lead_time_coverage(&refs, &LEAD_THRESHOLDS), vec![0.75, 0.5, 0.25]);

    let early: Vec<_> = (0..4).map(|_| evaluation(Some(10), Some(50))).collect();
    let refs: Vec<&EpisodeEvaluation> = early.iter().collect();
    assert_eq!(lead_time_coverage(&refs, &LEAD_THRESHOLDS), vec![1.0; 3]);

    let none: Vec<_> = (0..4).map(|_| evaluation(None, Some(50))).collect();
    let refs: Vec<&EpisodeEvaluation> = none.iter().collect();
    assert_eq!(lead_time_coverage(&refs, &LEAD_THRESHOLDS), vec![0.0; 3]);
}

#[test]
fn false_flags_only_count_clean_episodes() {
    let evals = [
        evaluation(Some(3), None),
        evaluation(None, None),
        evaluation(Some(3), Some(40)),
    ];
    let refs: Vec<&EpisodeEvaluation> = evals.iter().collect();
    assert_eq!(false_flag_rate(&refs), Some(0.5));
    assert_eq!(false_flag_rate(&refs[2..]), None);
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("bogus".parse::<Method>().is_err());
}

fn crash_episode() -> EpisodeContext {
    for seed in 0.. {
        let cfg = EpisodeConfig::new(
            ScenarioConfig::for_levels(2.0, 6.0, 1, 1, seed),
            ThetaSchedule::fixed(CognitiveParams::new(0.3, 2.0, 3.0, 6.0).unwrap()),
        );
        let ep = simulate_episode(&cfg).unwrap();
        if ep.t_col().is_some() && ep.frames.len() > 20 {
            return EpisodeContext::new(cfg.scenario, ep.frames).unwrap();
        }
    }
    unreachable!()
}

#[test]
fn rolling_evaluation_is_deterministic_and_complete() {
    let ctx = crash_episode();
    let filter = FilterConfig {
        seed: 11,
        ..Default::default()
    };
    let gains = ControllerGains::default();
    let cfg = PredictConfig::default();
    for m in Method::ALL {
        let a = rolling_evaluate(&ctx, m, &filter, &gains, &cfg).unwrap();
        let b = rolling_evaluate(&ctx, m, &filter, &gains, &cfg).unwrap();
        assert_eq!(a, b, "{}", m.name());
        assert_eq!(a.records.len(), ctx.running_len() - filter.window);
        assert_eq!(a.t_col, ctx.frames.iter().find(|f| f.collision).map(|f| f.t));
        assert_eq!(a.theta_hat.is_empty(), m != Method::Adaptive);
        if let Some(t) = a.t_flag {
            assert!(a.records.iter().any(|r| r.k == t && r.collision_flag));
        }
    }
}

#[test]
fn short_episode_is_rejected() {
    let ctx = crash_episode();
    let short = EpisodeContext::new(ctx.scenario.clone(), ctx.frames[..3].to_vec()).unwrap();
    assert!(rolling_evaluate(
        &short,
        Method::Cv,
        &FilterConfig::default(),
        &ControllerGains::default(),
        &PredictConfig::default()
    )
    .is_err());
}

proptest! {
    #[test]
    fn coverage_is_monotone(leads in proptest::collection::vec(proptest::option::of(0usize..40), 1..30)) {
        let evals: Vec<_> = leads.iter().map(|l| evaluation(l.map(|l| 100 - l), Some(100))).collect();
        let refs: Vec<&EpisodeEvaluation> = evals.iter().collect();
        let c = lead_time_coverage(&refs, &[0.5, 1.0, 2.0, 3.0]);
        for w in c.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rmse_weighted_between_components(dx in -5.0f64..5.0, dv in -3.0f64..3.0, alpha in 0.0f64..=1.0) {
        let w = before_workzone(100.0);
        let path = rollout_cv(&w, 8).unwrap().predicted;
        let r = rmse(&shifted(&path, dx, dv), &path, alpha, 1.0 - alpha).unwrap();
        let (lo, hi) = (r.pos.min(r.vel), r.pos.max(r.vel));
        prop_assert!(r.weighted >= lo - 1e-9 && r.weighted <= hi + 1e-9);
    }
}
