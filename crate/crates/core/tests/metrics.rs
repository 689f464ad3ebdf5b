mod common;

use common::*;
use locorank_core::metrics::*;
use locorank_core::session::{press_counts, ButtonState, ControllerSample, DeviceSample, TrialTelemetry, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pts3(v: &[[f64; 3]]) -> Vec<Vec<f64>> {
    v.iter().map(|p| p.to_vec()).collect()
}

#[test]
fn path_length_examples() {
    assert_eq!(path_length(&[[0.0, 0.0, 0.0]]).unwrap(), 0.0);
    assert_eq!(path_length(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap(), 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<[f64; 3]> = (0..200).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    assert!(close(path_length(&p).unwrap(), oracle_path_length(&pts3(&p)), 1e-9));
}

#[test]
fn diameter_examples() {
    assert_eq!(max_pairwise_distance(&[[1.0, 1.0, 1.0]]).unwrap(), 0.0);
    let collinear = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]];
    assert_eq!(max_pairwise_distance(&collinear).unwrap(), 1.0);
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<[f64; 3]> = (0..100)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0), rng.random_range(-9.0..9.0)])
            .collect();
        let got = max_pairwise_distance(&p).unwrap();
        assert!((got - oracle_diameter(&pts3(&p))).abs() <= 1e-12 * got.max(1.0));
    }
}

#[test]
fn non_finite_points_rejected() {
    assert_eq!(path_length(&[[0.0, f64::NAN]]), Err(MetricsError::NonFiniteInput));
    assert_eq!(max_pairwise_distance(&[[f64::INFINITY, 0.0]]), Err(MetricsError::NonFiniteInput));
}

#[test]
fn pair_series_examples() {
    let a = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
    assert_eq!(pair_series_metrics(&a, &a).unwrap(), (0.0, 0.0));
    let origin = [[0.0; 3]; 3];
    let up = [[0.0, 1.0, 0.0]; 3];
    assert_eq!(pair_series_metrics(&origin, &up).unwrap(), (3.0, 1.0));
    assert_eq!(pair_series_metrics(&origin, &up[..2]), Err(MetricsError::LengthMismatch(3, 2)));
}

#[test]
fn alignment_matches_exhaustive_search() {
    for seed in 0..300 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: Vec<f64> = (0..rng.random_range(1..80)).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut b: Vec<f64> = (0..rng.random_range(1..80)).map(|_| rng.random_range(0.0..2.0)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let skew = rng.random_range(0.0..0.05);
        assert_eq!(align_by_timestamp(&a, &b, skew), oracle_align(&a, &b, skew), "seed {seed}");
    }
}

#[test]
fn submovement_examples() {
    let cfg = SubmovementConfig::default();
    let timed = |v: &[f64]| v.iter().enumerate().map(|(i, &s)| (i as f64 / 60.0, s)).collect::<Vec<_>>();
    assert_eq!(submovement_count(&timed(&[0.0; 20]), &cfg), 0);
    let bell: Vec<f64> = (0..40)
        .map(|i| if (10..30).contains(&i) { (std::f64::consts::PI * (i - 10) as f64 / 20.0).sin() } else { 0.0 })
        .collect();
    assert_eq!(submovement_count(&timed(&bell), &cfg), 1);
    let mut three = Vec::new();
    for _ in 0..3 {
        three.extend([0.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
    }
    assert_eq!(submovement_count(&timed(&three), &cfg), 3);
    // A two-sample dip is too short to split a movement.
    assert_eq!(submovement_count(&timed(&[1.0, 0.0, 0.0, 1.0]), &cfg), 1);
}

#[test]
fn mean_examples() {
    assert_eq!(mean_channel(&[2.0; 17]).unwrap(), 2.0);
    assert_eq!(mean_magnitude(&[Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)]).unwrap(), 3.5);
    assert_eq!(mean_channel(&[]), Err(MetricsError::EmptySeries));
}

#[test]
fn deviation_examples() {
    let on_line = [[1.0, 0.0], [5.0, 0.0], [9.0, 0.0]];
    assert!(task_axis_deviations(&on_line, [0.0, 0.0], [10.0, 0.0]).unwrap().iter().all(|&d| d == 0.0));
    assert_eq!(task_axis_deviations(&[[5.0, 2.0]], [0.0, 0.0], [10.0, 0.0]).unwrap(), vec![2.0]);
    assert_eq!(task_axis_deviations(&[[1.0, 1.0]], [2.0, 2.0], [2.0, 2.0]), Err(MetricsError::DegenerateAxis));
}

#[test]
fn deviations_invariant_under_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let pts: Vec<[f64; 2]> = (0..50).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let (s, t) = ([rng.random_range(-1.0..1.0), 0.0], [rng.random_range(3.0..9.0), rng.random_range(-2.0..2.0)]);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = |p: [f64; 2]| [p[0] * th.cos() - p[1] * th.sin(), p[0] * th.sin() + p[1] * th.cos()];
        let base = task_axis_deviations(&pts, s, t).unwrap();
        let turned = task_axis_deviations(&pts.iter().map(|&p| rot(p)).collect::<Vec<_>>(), rot(s), rot(t)).unwrap();
        let oracle = oracle_deviations(&pts, s, t);
        for ((a, b), c) in base.iter().zip(&turned).zip(&oracle) {
            assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9);
        }
    }
}

#[test]
fn movement_variability_examples() {
    assert_eq!(movement_variability(&[0.7; 10]).unwrap(), 0.0);
    assert!((movement_variability(&[-1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(movement_variability(&[1.0]), Err(MetricsError::InsufficientSamples(1)));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let y: Vec<f64> = (0..rng.random_range(2..300)).map(|_| 1e3 + rng.random_range(-1.0..1.0)).collect();
        let got = movement_variability(&y).unwrap();
        assert!((got - oracle_sample_sd(&y)).abs() <= 1e-10 * got.max(1.0));
    }
}

#[test]
fn reentry_and_crossing_examples() {
    let t = [0.0, 0.0];
    assert_eq!(target_reentry_count(&[[5.0, 0.0], [4.0, 0.0]], t, 1.0), 0);
    let enter_exit_enter = [[3.0, 0.0], [0.5, 0.0], [2.0, 0.0], [0.2, 0.0]];
    assert_eq!(target_reentry_count(&enter_exit_enter, t, 1.0), 1);
    assert_eq!(axis_crossed_count(&[0.1, 0.4, 2.0]), 0);
    assert_eq!(axis_crossed_count(&[0.5, -0.5, 0.5]), 2);
    assert_eq!(axis_crossed_count(&[0.5, 0.0, 0.5]), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let mut p = [0.0f64, 0.0f64];
        let walk: Vec<[f64; 2]> = (0..100)
            .map(|_| {
                p = [p[0] + rng.random_range(-0.5..0.5), p[1] + rng.random_range(-0.5..0.5)];
                p
            })
            .collect();
        assert_eq!(target_reentry_count(&walk, [0.5, 0.5], 1.0), oracle_reentries(&walk, [0.5, 0.5], 1.0));
        let dev: Vec<f64> = walk.iter().map(|q| if q[1].abs() < 0.05 { 0.0 } else { q[1] }).collect();
        assert_eq!(axis_crossed_count(&dev), oracle_crossings(&dev));
    }
}

#[test]
fn press_count_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let states: Vec<bool> = (0..500).map(|_| rng.random()).collect();
        let samples: Vec<ControllerSample> = states
            .iter()
            .enumerate()
            .map(|(i, &b)| ControllerSample {
                base: DeviceSample::at_rest(i as f64, Vec3::ZERO),
                thumbstick: [0.0, 0.0],
                trigger_pressure: 0.0,
                grip_pressure: 0.0,
                buttons: ButtonState {
                    grip: b,
                    ..Default::default()
                },
            })
            .collect();
        assert_eq!(press_counts(&samples).grip, oracle_rises(&states));
    }
}

fn stationary_trial() -> TrialTelemetry {
    let mut t = random_trial(1, 40);
    let still = |s: &mut DeviceSample| {
        s.position = Vec3::new(1.0, 1.5, 2.0);
        s.rotation_euler = Vec3::new(10.0, 20.0, 30.0);
        s.velocity = Vec3::ZERO;
        s.acceleration = Vec3::ZERO;
        s.angular_velocity = Vec3::ZERO;
        s.angular_acceleration = Vec3::ZERO;
    };
    t.headset.iter_mut().for_each(still);
    for c in t.left.iter_mut().chain(t.right.iter_mut()) {
        still(&mut c.base);
        c.buttons = ButtonState::default();
        c.thumbstick = [0.0, 0.0];
        c.trigger_pressure = 0.25;
        c.grip_pressure = 0.5;
    }
    t.target_pos = Vec3::new(8.0, 0.0, 8.0);
    t
}

#[test]
fn stationary_trial_is_all_zero() {
    let m = extract_trial_metrics(&stationary_trial(), &MetricsConfig::default()).unwrap();
    for d in [&m.headset, &m.dominant] {
        assert_eq!((d.variability, d.extent, d.angular_variability, d.angular_extent), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(d.submovement_count, 0);
    }
    assert_eq!((m.mean_trigger_pressure, m.mean_grip_pressure), (0.25, 0.5));
    assert_eq!(m.movement_variability, 0.0);
    assert_eq!((m.reentry_count, m.axis_crossed_count), (0, 0));
}

#[test]
fn straight_run_toward_target() {
    let mut t = stationary_trial();
    let n = 301;
    t.target_pos = Vec3::new(10.0, 0.0, 0.0);
    t.headset = (0..n)
        .map(|i| {
            let time = i as f64 * 5.0 / (n - 1) as f64;
            let mut s = DeviceSample::at_rest(time, Vec3::new(time, 1.6, 0.0));
            s.velocity = Vec3::new(1.0, 0.0, 0.0);
            s
        })
        .collect();
    let m = extract_trial_metrics(&t, &MetricsConfig::default()).unwrap();
    assert!((m.headset.variability - 5.0).abs() < 1e-6);
    assert!(m.movement_variability.abs() < 1e-12);
    assert_eq!(m.headset.submovement_count, 1);
}

fn transform(t: &TrialTelemetry, f: impl Fn(Vec3) -> Vec3) -> TrialTelemetry {
    let mut out = t.clone();
    out.headset.iter_mut().for_each(|s| s.position = f(s.position));
    for c in out.left.iter_mut().chain(out.right.iter_mut()) {
        c.base.position = f(c.base.position);
    }
    out.start_pos = f(out.start_pos);
    out.target_pos = f(out.target_pos);
    out
}

fn assert_all_close(a: &[f64], b: &[f64], rel: f64) {
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= rel * x.abs().max(y.abs()) + 1e-9, "column {j}: {x} vs {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_translation_invariant(seed in 0u64..10_000, dx in -50.0..50.0f64, dy in -5.0..5.0f64, dz in -50.0..50.0f64) {
        let cfg = MetricsConfig::default();
        let t = random_trial(seed, 60);
        let moved = transform(&t, |p| Vec3::new(p.x + dx, p.y + dy, p.z + dz));
        let a = extract_trial_metrics(&t, &cfg).unwrap().values();
        let b = extract_trial_metrics(&moved, &cfg).unwrap().values();
        assert_all_close(&a, &b, 1e-9);
    }

    #[test]
    fn metrics_scale_equivariant(seed in 0u64..10_000, s in 0.1..10.0f64) {
        let cfg = MetricsConfig::default();
        let t = random_trial(seed, 60);
        let mut scaled = transform(&t, |p| Vec3::new(p.x * s, p.y * s, p.z * s));
        scaled.target_radius *= s;
        let a = extract_trial_metrics(&t, &cfg).unwrap();
        let b = extract_trial_metrics(&scaled, &cfg).unwrap();
        let pairs = [
            (a.headset.variability, b.headset.variability),
            (a.headset.extent, b.headset.extent),
            (a.dominant.variability, b.dominant.variability),
            (a.dominant.extent, b.dominant.extent),
            (a.pair_variability, b.pair_variability),
            (a.pair_extent, b.pair_extent),
            (a.movement_variability, b.movement_variability),
        ];
        for (x, y) in pairs {
            prop_assert!((x * s - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
        prop_assert_eq!(a.reentry_count, b.reentry_count);
        prop_assert_eq!(a.axis_crossed_count, b.axis_crossed_count);
        prop_assert_eq!(a.presses, b.presses);
    }

    #[test]
    fn extent_never_exceeds_path_length(pts in prop::collection::vec(prop::array::uniform3(-100.0..100.0f64), 2..80)) {
        prop_assert!(max_pairwise_distance(&pts).unwrap() <= path_length(&pts).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn angular_metrics_ignore_full_turns(seed in 0u64..10_000, turns in -3i32..3) {
        let cfg = MetricsConfig::default();
        let t = random_trial(seed, 50);
        let mut shifted = t.clone();
        let add = f64::from(turns) * 360.0;
        for s in shifted.headset.iter_mut() {
            s.rotation_euler = Vec3::new(s.rotation_euler.x + add, s.rotation_euler.y + add, s.rotation_euler.z + add);
        }
        let a = extract_trial_metrics(&t, &cfg).unwrap().headset;
        let b = extract_trial_metrics(&shifted, &cfg).unwrap().headset;
        prop_assert!((a.angular_variability - b.angular_variability).abs() <= 1e-9 * a.angular_variability.max(1.0));
        prop_assert!((a.angular_extent - b.angular_extent).abs() <= 1e-9 * a.angular_extent.max(1.0));
    }

    #[test]
    fn submovements_ignore_time_scale(speeds in prop::collection::vec(0.0..3.0f64, 1..200), k in 0.01..100.0f64) {
        let cfg = SubmovementConfig::default();
        let a: Vec<(f64, f64)> = speeds.iter().enumerate().map(|(i, &v)| (i as f64 * 0.01, v)).collect();
        let b: Vec<(f64, f64)> = a.iter().map(|&(t, v)| (t * k, v)).collect();
        prop_assert_eq!(submovement_count(&a, &cfg), submovement_count(&b, &cfg));
        prop_assert_eq!(submovement_count(&a, &cfg), oracle_submovements(&speeds, &cfg));
    }

    #[test]
    fn movement_variability_zero_iff_constant(y in prop::collection::vec(-10.0..10.0f64, 2..50)) {
        let sd = movement_variability(&y).unwrap();
        let constant = y.iter().all(|v| *v == y[0]);
        prop_assert_eq!(sd == 0.0, constant);
    }

    #[test]
    fn press_counts_ignore_repeated_samples(states in prop::collection::vec(any::<bool>(), 0..60), reps in prop::collection::vec(1usize..4, 60)) {
        let sample = |b: bool| ControllerSample {
            base: DeviceSample::at_rest(0.0, Vec3::ZERO),
            thumbstick: [0.0, 0.0],
            trigger_pressure: 0.0,
            grip_pressure: 0.0,
            buttons: ButtonState { trigger: b, primary_touch: !b, ..Default::default() },
        };
        let once: Vec<ControllerSample> = states.iter().map(|&b| sample(b)).collect();
        let repeated: Vec<ControllerSample> = states
            .iter()
            .zip(&reps)
            .flat_map(|(&b, &r)| std::iter::repeat_n(sample(b), r))
            .collect();
        prop_assert_eq!(press_counts(&once), press_counts(&repeated));
    }
}

#[test]
fn feature_csv_has_stable_header() {
    let cohort_trial = random_trial(3, 30);
    let rows = vec![FeatureRow {
        participant_id: "P001".into(),
        group: cohort_trial.group,
        technique: cohort_trial.technique,
        block: 1,
        trial_index: 1,
        trial_time_s: 1.5,
        hit: true,
        obstacles_hit: 0,
        metrics: extract_trial_metrics(&cohort_trial, &MetricsConfig::default()).unwrap(),
    }];
    let mut buf = Vec::new();
    write_feature_csv(&rows, false, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 8 + BASE_METRIC_COUNT);
    assert_eq!(header[8], "hmd_variability");
    assert_eq!(header.last(), Some(&"movement_variability"));
    assert_eq!(metric_names(true).len(), BASE_METRIC_COUNT + 4);
}
