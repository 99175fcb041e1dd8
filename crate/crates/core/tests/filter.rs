use proptest::prelude::*;
use takeover_core::filter::*;
use takeover_core::policy::{ControllerGains, PerceptionNoise};
use takeover_core::rng::{child_seed, derive_rng};
use takeover_core::sim::{random_scenario, sample_prior, simulate_episode, EpisodeConfig, ThetaSchedule};
use takeover_core::*;

/// Model-generated episode with constant parameters and at least `min_len` frames.
fn episode(seed: u64, theta: CognitiveParams, min_len: usize) -> (EpisodeConfig, EpisodeContext) {
    let mut rng = derive_rng(seed, 99);
    for i in 0.. {
        let sc = random_scenario(&mut rng, child_seed(seed, i));
        let cfg = EpisodeConfig::new(sc, ThetaSchedule::fixed(theta));
        let ep = simulate_episode(&cfg).unwrap();
        if ep.frames.len() >= min_len {
            let ctx = EpisodeContext::new(cfg.scenario.clone(), ep.frames).unwrap();
            return (cfg, ctx);
        }
    }
    unreachable!()
}

fn far_from(theta: CognitiveParams, bounds: &ParamBounds) -> CognitiveParams {
    let t = theta.to_array();
    let a = std::array::from_fn(|k| {
        let mid = 0.5 * (bounds.lower[k] + bounds.upper[k]);
        if t[k] < mid { bounds.upper[k] } else { bounds.lower[k] }
    });
    bounds.project(CognitiveParams::from_array(a))
}

#[test]
fn generating_parameters_leave_zero_residual() {
    let unit = [1.0; 4];
    let cfg = FilterConfig {
        sigma: unit,
        ..Default::default()
    };
    for seed in 0..10 {
        let theta = sample_prior(&ParamBounds::default(), &mut derive_rng(seed, 5));
        let (ep, ctx) = episode(seed, theta, 12);
        for k in [cfg.window, ctx.len() - 1] {
            let ll = episode_window_loglik(
                &ctx,
                k,
                &cfg,
                theta,
                ControllerGains::default(),
                PerceptionNoise::Seeded(ep.perception_seed()),
            )
            .unwrap();
            let expected = cfg.window as f64 * frame_log_normalizer(&unit);
            assert!((ll - expected).abs() < 1e-6, "seed {seed} k {k}: {ll} vs {expected}");
        }
    }
}

#[test]
fn shifted_observations_cost_half_a_nat_per_frame() {
    let theta = CognitiveParams::new(0.3, 2.0, 4.0, 3.0).unwrap();
    let (ep, ctx) = episode(3, theta, 20);
    let l = 5;
    let anchor = 10 - l;
    let mut frames = ctx.window(10, l).unwrap().frames().to_vec();
    for f in &mut frames {
        f.ego.x += 1.0;
    }
    let shifted = TrajectoryWindow::new(frames).unwrap();
    let driver = || {
        ctx.replay_driver(
            anchor,
            theta,
            ControllerGains::default(),
            PerceptionNoise::Seeded(ep.perception_seed()),
            None,
        )
        .unwrap()
    };
    let sigma = [1.0; 4];
    let base = window_loglik(ctx.world(anchor), driver(), &ctx.window(10, l).unwrap(), &sigma).unwrap();
    let moved = window_loglik(ctx.world(anchor), driver(), &shifted, &sigma).unwrap();
    assert!((base - moved - 2.5).abs() < 1e-9);
}

#[test]
fn misaligned_window_is_a_contract_error() {
    let (_, ctx) = episode(4, CognitiveParams::ZERO, 12);
    let driver = ctx.replay_driver(2, CognitiveParams::ZERO, ControllerGains::default(), PerceptionNoise::Off, None);
    let r = window_loglik(ctx.world(2), driver.unwrap(), &ctx.window(10, 5).unwrap(), &[1.0; 4]);
    assert!(matches!(r, Err(Error::Contract(_))));
}

#[test]
fn true_parameters_beat_distant_ones() {
    let bounds = ParamBounds::default();
    let cfg = FilterConfig::default();
    let mut wins = 0;
    let total = 100;
    for seed in 0..total {
        let theta = sample_prior(&bounds, &mut derive_rng(seed, 6));
        let (ep, ctx) = episode(1000 + seed, theta, 12);
        let k = (ctx.len() - 1).min(40);
        let noise = PerceptionNoise::Seeded(ep.perception_seed());
        let ll = |th| episode_window_loglik(&ctx, k, &cfg, th, ControllerGains::default(), noise).unwrap();
        if ll(theta) > ll(far_from(theta, &bounds)) {
            wins += 1;
        }
    }
    assert!(wins * 10 >= total * 9, "{wins}/{total}");
}

#[test]
fn frozen_particles_keep_a_constant_summary() {
    let theta = CognitiveParams::new(0.4, 2.5, 6.0, 4.0).unwrap();
    let (_, ctx) = episode(8, theta, 20);
    let cfg = FilterConfig {
        q: [0.0; 4],
        bounds: ParamBounds::point(theta),
        noise: RolloutNoise::Expected,
        seed: 2,
        ..Default::default()
    };
    let steps = run_filter(&ctx, &cfg, &ControllerGains::default()).unwrap();
    assert_eq!(steps.len(), ctx.len() - cfg.window);
    for s in &steps {
        let (m, t) = (s.posterior.mean.to_array(), theta.to_array());
        for k in 0..4 {
            assert!((m[k] - t[k]).abs() < 1e-12);
            assert!(s.posterior.variance[k].abs() < 1e-12);
        }
        assert!((s.ess - cfg.n_particles as f64).abs() < 1e-9);
    }
}

#[test]
fn filter_is_deterministic_and_traces_round_trip() {
    let theta = CognitiveParams::new(0.2, 1.0, 8.0, 2.0).unwrap();
    let (_, ctx) = episode(9, theta, 15);
    let cfg = FilterConfig {
        seed: 17,
        ..Default::default()
    };
    let a = run_filter(&ctx, &cfg, &ControllerGains::default()).unwrap();
    let b = run_filter(&ctx, &cfg, &ControllerGains::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(posterior_trace_csv(&a).unwrap(), posterior_trace_csv(&b).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("posterior.csv");
    write_posterior_trace(&path, &a).unwrap();
    let means = read_posterior_means(&path).unwrap();
    assert_eq!(means.len(), a.len());
    for ((t, m), s) in means.iter().zip(&a) {
        assert_eq!(*t, s.t);
        assert_eq!(*m, s.posterior.mean);
    }
}

#[test]
fn episode_shorter_than_window_is_rejected() {
    let (ep, ctx) = episode(10, CognitiveParams::ZERO, 12);
    let short = EpisodeContext::new(ep.scenario, ctx.frames[..4].to_vec()).unwrap();
    assert!(run_filter(&short, &FilterConfig::default(), &ControllerGains::default()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        FilterConfig { n_particles: 1, ..Default::default() },
        FilterConfig { window: 0, ..Default::default() },
        FilterConfig { q: [-1.0, 0.0, 0.0, 0.0], ..Default::default() },
        FilterConfig { sigma: [0.0, 1.0, 1.0, 1.0], ..Default::default() },
        FilterConfig { ess_threshold_fraction: 1.5, ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn nan_likelihood_names_the_particle() {
    let mut ps = vec![
        Particle {
            theta: CognitiveParams::ZERO,
            log_weight: (0.5f64).ln(),
        };
        2
    ];
    let err = reweight(&mut ps, &[0.0, f64::NAN], 5).unwrap_err();
    assert!(err.to_string().contains("particle 1"), "{err}");
}

#[test]
fn resampling_offspring_match_expectation() {
    let n = 10;
    let make = |w0: f64| -> Vec<Particle> {
        (0..n)
            .map(|i| Particle {
                theta: CognitiveParams::from_array([0.0, 0.0, i as f64, 0.0]),
                log_weight: match i {
                    0 => w0.ln(),
                    1 => (1.0 - w0).ln(),
                    _ => f64::NEG_INFINITY,
                },
            })
            .collect()
    };
    let ps = make(0.7);
    let trials = 10_000;
    let mut rng = derive_rng(1, 2);
    let mut total = 0usize;
    for _ in 0..trials {
        total += systematic_resample(&ps, &mut rng).iter().filter(|p| p.theta.c == 0.0).count();
    }
    let mean = total as f64 / trials as f64;
    assert!((mean - 7.0).abs() < 0.07, "{mean}");

    let all = systematic_resample(&make(1.0), &mut rng);
    assert!(all.iter().all(|p| p.theta.c == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resample_keeps_size_and_uniform_weights(ws in proptest::collection::vec(0.01f64..1.0, 2..40), seed in any::<u64>()) {
        let s: f64 = ws.iter().sum();
        let ps: Vec<Particle> = ws
            .iter()
            .enumerate()
            .map(|(i, w)| Particle {
                theta: CognitiveParams::from_array([0.0, 0.0, i as f64 % 10.0, 0.0]),
                log_weight: (w / s).ln(),
            })
            .collect();
        let out = systematic_resample(&ps, &mut derive_rng(seed, 0));
        prop_assert_eq!(out.len(), ps.len());
        let w = weights(&out);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|v| (v - w[0]).abs() < 1e-12));
    }

    #[test]
    fn ess_is_between_one_and_n(ws in proptest::collection::vec(0.0f64..1.0, 1..50)) {
        let s: f64 = ws.iter().sum();
        prop_assume!(s > 1e-9);
        let w: Vec<f64> = ws.iter().map(|v| v / s).collect();
        let e = ess(&w);
        prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
    }
}
