use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;
use upark::bench::replica_scenario;
use upark::control::VehicleState;
use upark::geometry::Rect;
use upark::localization::*;
use upark::sensor::{ImuSample, NoiseProfile, RangingSample, Regime, SensorSim};
use upark::{Point2, Pose2D};

fn sample(distance: f64, timestamp: f64) -> RangingSample {
    RangingSample { anchor_id: 1, distance, timestamp, regime: Regime::Los, nlos_bias: 0.0 }
}

fn fix_at(p: Point2) -> PositionFix {
    PositionFix { position: p, residual_rms: 0.0, anchor_count: 4, timestamp: 0.0, smoothed: p }
}

#[test]
fn layer1_rejects_implausible_jump_and_returns_median() {
    let mut w = RangeWindow::new(5);
    for (k, d) in [10.0, 10.05, 9.98, 10.02].into_iter().enumerate() {
        assert!(layer1_filter(&mut w, &sample(d, 0.1 * k as f64), 2.0, 0.05).accepted().is_some());
    }
    assert!(matches!(layer1_filter(&mut w, &sample(12.0, 0.4), 2.0, 0.05), Layer1Outcome::Rejected { .. }));
    assert_eq!(w.len(), 4);
    let m = layer1_filter(&mut w, &sample(10.1, 0.4), 2.0, 0.05).accepted().unwrap();
    assert!((m - 10.02).abs() < 1e-12);
}

#[test]
fn layer2_needs_three_ranges() {
    let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(10.0, 10.0));
    let r: Vec<_> = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]
        .iter()
        .map(|&a| FilteredRange { anchor: a, distance: 5.0 })
        .collect();
    assert_eq!(layer2_multilaterate(&r, Point2::new(5.0, 5.0), &bounds, 0.0), Err(LocalizationError::InsufficientAnchors(2)));
}

#[test]
fn smoothing_is_an_ema() {
    let f = fix_at(Point2::new(2.0, 4.0));
    assert_eq!(layer2_smooth(None, &f, 0.6).unwrap(), f.position);
    let s = layer2_smooth(Some(Point2::new(0.0, 0.0)), &f, 0.6).unwrap();
    assert!(s.distance(Point2::new(1.2, 2.4)) < 1e-12);
    assert_eq!(layer2_smooth(None, &f, 0.0), Err(LocalizationError::InvalidAlpha(0.0)));
    assert_eq!(layer2_smooth(None, &f, 1.5), Err(LocalizationError::InvalidAlpha(1.5)));
}

#[test]
fn reliability_counts_gated_updates() {
    assert_eq!(reliability_from_flags([false, true, false, true]), Ok(0.5));
    assert_eq!(reliability_from_flags(Vec::<bool>::new()), Err(LocalizationError::EmptyHistory));
}

#[test]
fn non_pd_prior_is_rejected() {
    let cfg = FilterConfig::default();
    let s = FusedState::new(Pose2D::new(0.0, 0.0, 0.0), 0.0, Matrix4::zeros(), 0.0);
    assert_eq!(iaekf_update(&s, &fix_at(Point2::new(0.0, 0.0)), &cfg.gate, &cfg.r0), Err(LocalizationError::NonPdCovariance));
    let imu = ImuSample { yaw_rate: 0.0, speed: 0.0, timestamp: 0.0 };
    assert_eq!(iaekf_predict(&s, &imu, 0.0, &cfg), Err(LocalizationError::NonPositiveDt(0.0)));
}

/// Stationary vehicle fed perfect sensors through the whole pipeline.
#[test]
fn pipeline_converges_on_clean_data() {
    let mut scn = replica_scenario();
    scn.noise = NoiseProfile::zero();
    scn.nlos_zones = None;
    let truth = Pose2D::new(15.0, 20.0, 0.4);
    let mut loc = Localizer::new(LocalizerConfig::default(), &scn, Pose2D::new(14.5, 20.4, 0.4), 0.0);
    let mut sim = SensorSim::new(1);
    let state = VehicleState::at_rest(truth, 0.0);
    for k in 1..=60 {
        let t = 0.02 * k as f64;
        loc.feed(SensorEvent::Imu(sim.sample_imu(&scn.noise, &state, t))).unwrap();
        if k % 5 == 0 {
            for r in sim.sample_ranging(&scn, truth.position(), t) {
                loc.feed(SensorEvent::Ranging(r)).unwrap();
            }
        }
    }
    loc.flush().unwrap();
    let fix = loc.last_fix().unwrap();
    assert!(fix.position.distance(truth.position()) < 1e-6);
    assert!(loc.state().pose().position().distance(truth.position()) < 0.1);
    assert_eq!(loc.stats().epochs, 12);
    assert!(matches!(
        loc.feed(SensorEvent::Imu(ImuSample { yaw_rate: 0.0, speed: 0.0, timestamp: 0.5 })),
        Err(LocalizationError::ClockSkew { .. })
    ));
    let bogus = RangingSample { anchor_id: 999, distance: 1.0, timestamp: 2.0, regime: Regime::Los, nlos_bias: 0.0 };
    assert_eq!(loc.feed(SensorEvent::Ranging(bogus)), Err(LocalizationError::UnknownAnchor(999)));
}

#[test]
fn sensors_are_seeded_and_zone_aware() {
    let scn = replica_scenario();
    let zone_point = {
        let z = &scn.nlos_zones()[0];
        let b = z.bbox();
        Point2::new(0.5 * (b.min.x + b.max.x), 0.5 * (b.min.y + b.max.y))
    };
    let (mut a, mut b) = (SensorSim::new(9), SensorSim::new(9));
    for k in 0..20 {
        let t = 0.1 * k as f64;
        assert_eq!(a.sample_ranging(&scn, zone_point, t), b.sample_ranging(&scn, zone_point, t));
    }
    assert_eq!(a.stream_digest(), b.stream_digest());
    let samples = a.sample_ranging(&scn, zone_point, 3.0);
    assert!(samples.iter().all(|s| s.regime == Regime::Nlos && s.nlos_bias >= 0.0));
    let (mut c, mut d) = (SensorSim::new(10), SensorSim::new(11));
    assert_ne!(c.sample_ranging(&scn, zone_point, 0.0), d.sample_ranging(&scn, zone_point, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer1_output_stays_within_window(ds in prop::collection::vec(9.0f64..11.0, 1..12)) {
        let mut w = RangeWindow::new(5);
        for (k, d) in ds.iter().enumerate() {
            if let Some(m) = layer1_filter(&mut w, &sample(*d, k as f64), 2.0, 0.05).accepted() {
                let vals: Vec<f64> = w.distances().collect();
                let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                prop_assert!(m >= lo && m <= hi);
                prop_assert!(w.len() <= 5);
            }
        }
    }

    #[test]
    fn inflation_is_monotone_and_at_least_one(a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let g = GateConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(inflation_factor(lo, &g) >= 1.0);
        prop_assert!(inflation_factor(lo, &g) <= inflation_factor(hi, &g));
    }

    #[test]
    fn covariance_stays_symmetric_positive_definite(
        steps in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, 0.01f64..0.2, -3.0f64..3.0, -3.0f64..3.0), 1..60),
    ) {
        let cfg = FilterConfig::default();
        let p0 = Matrix4::from_diagonal(&Vector4::new(0.05, 0.05, 0.01, 0.01));
        let mut s = FusedState::new(Pose2D::new(5.0, 5.0, 0.0), 0.0, p0, 0.0);
        for (w, v, dt, dx, dy) in steps {
            s = iaekf_predict(&s, &ImuSample { yaw_rate: w, speed: v, timestamp: 0.0 }, dt, &cfg).unwrap();
            s = iaekf_update(&s, &fix_at(Point2::new(s.x + dx, s.y + dy)), &cfg.gate, &cfg.r0).unwrap();
            prop_assert!(is_positive_definite(&s.covariance));
            prop_assert!(s.theta > -std::f64::consts::PI - 1e-12 && s.theta <= std::f64::consts::PI + 1e-12);
            prop_assert!((s.last_innovation.x - dx).abs() < 1e-9 && (s.last_innovation.y - dy).abs() < 1e-9);
            prop_assert_eq!(s.gated, s.last_innovation.norm() > cfg.gate.tau);
        }
    }

    #[test]
    fn exact_ranges_recover_position(x in 1.0f64..29.0, y in 1.0f64..36.0) {
        let scn = replica_scenario();
        let p = Point2::new(x, y);
        let r: Vec<_> = scn.anchors.iter().map(|a| FilteredRange { anchor: a.position, distance: a.position.distance(p) }).collect();
        let fix = layer2_multilaterate(&r, scn.entry_pose.position(), &scn.bounds, 0.0).unwrap();
        prop_assert!(fix.position.distance(p) < 1e-6);
        prop_assert!(range_objective(&r, fix.position) < 1e-10);
    }
}
