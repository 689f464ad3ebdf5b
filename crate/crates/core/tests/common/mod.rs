//! Brute-force reference implementations and random inputs shared by the
//! integration tests. Each oracle takes a deliberately different route from
//! the library code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use locorank_core::dataset::{Dataset, FeatureBlock, Instance, Scenario};
use locorank_core::metrics::SubmovementConfig;
use locorank_core::session::{
    ButtonState, ControllerSample, DeviceSample, Group, Hand, TechniqueId, TrialTelemetry, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

pub fn oracle_path_length(points: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 1..points.len() {
        let d2: f64 = (0..points[i].len()).map(|k| (points[i][k] - points[i - 1][k]).powi(2)).sum();
        total += d2.sqrt();
    }
    total
}

pub fn oracle_diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in 0..points.len() {
            let d2: f64 = (0..points[i].len()).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            best = best.max(d2.sqrt());
        }
    }
    best
}

/// Picks, for each step, the 360°-shifted value nearest the previous output.
pub fn oracle_unwrap(series: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(series.len());
    for &v in series {
        match out.last() {
            None => out.push(v),
            Some(&prev) => {
                let k0 = ((prev - v) / 360.0).floor();
                let best = [k0 - 1.0, k0, k0 + 1.0, k0 + 2.0]
                    .into_iter()
                    .map(|k| v + 360.0 * k)
                    .min_by(|a, b| (a - prev).abs().total_cmp(&(b - prev).abs()))
                    .unwrap();
                out.push(best);
            }
        }
    }
    out
}

/// Splits the series into maximal above-threshold runs, then merges runs
/// separated by a dip shorter than the minimum.
pub fn oracle_submovements(speeds: &[f64], cfg: &SubmovementConfig) -> u32 {
    let peak = speeds.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0;
    }
    let thr = cfg.peak_fraction * peak;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < speeds.len() {
        if speeds[i] >= thr {
            let s = i;
            while i < speeds.len() && speeds[i] >= thr {
                i += 1;
            }
            runs.push((s, i));
        } else {
            i += 1;
        }
    }
    let mut count = 0;
    for (k, r) in runs.iter().enumerate() {
        if k == 0 || r.0 - runs[k - 1].1 >= cfg.min_dip_samples {
            count += 1;
        }
    }
    count
}

/// Exhaustive nearest-unused matching: each `a` sample takes the nearest `b`
/// sample after the last one taken (later index on ties).
pub fn oracle_align(a: &[f64], b: &[f64], skew: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut next = 0;
    for (i, &ta) in a.iter().enumerate() {
        let mut best: Option<usize> = None;
        for j in next..b.len() {
            let d = (b[j] - ta).abs();
            if best.is_none_or(|k| d <= (b[k] - ta).abs()) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            if (b[j] - ta).abs() <= skew {
                out.push((i, j));
                next = j + 1;
            }
        }
    }
    out
}

/// Signed distance from the task axis via vector projection.
pub fn oracle_deviations(points: &[[f64; 2]], s: [f64; 2], t: [f64; 2]) -> Vec<f64> {
    let len = ((t[0] - s[0]).powi(2) + (t[1] - s[1]).powi(2)).sqrt();
    let u = [(t[0] - s[0]) / len, (t[1] - s[1]) / len];
    points
        .iter()
        .map(|p| {
            let v = [p[0] - s[0], p[1] - s[1]];
            let along = v[0] * u[0] + v[1] * u[1];
            let perp = [v[0] - along * u[0], v[1] - along * u[1]];
            let mag = (perp[0] * perp[0] + perp[1] * perp[1]).sqrt();
            let side = u[0] * v[1] - u[1] * v[0];
            if side < 0.0 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

/// Two-pass sample standard deviation.
pub fn oracle_sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn oracle_reentries(points: &[[f64; 2]], target: [f64; 2], r: f64) -> u32 {
    let inside: Vec<bool> = points
        .iter()
        .map(|p| ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)).sqrt() <= r)
        .collect();
    let entries = (0..inside.len()).filter(|&i| inside[i] && (i == 0 || !inside[i - 1])).count() as u32;
    entries.saturating_sub(1)
}

pub fn oracle_crossings(dev: &[f64]) -> u32 {
    let signs: Vec<bool> = dev.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count() as u32
}

pub fn oracle_rises(states: &[bool]) -> u32 {
    let mut prev = false;
    let mut n = 0;
    for &s in states {
        if s && !prev {
            n += 1;
        }
        prev = s;
    }
    n
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn norm(v: &Vec3) -> f64 {
    (v.x.powi(2) + v.y.powi(2) + v.z.powi(2)).sqrt()
}

fn device_oracle(samples: &[&DeviceSample], cfg: &SubmovementConfig) -> Vec<f64> {
    let pos: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.position.x, s.position.y, s.position.z]).collect();
    let rx = oracle_unwrap(&samples.iter().map(|s| s.rotation_euler.x).collect::<Vec<_>>());
    let ry = oracle_unwrap(&samples.iter().map(|s| s.rotation_euler.y).collect::<Vec<_>>());
    let rz = oracle_unwrap(&samples.iter().map(|s| s.rotation_euler.z).collect::<Vec<_>>());
    let ang: Vec<Vec<f64>> = (0..samples.len()).map(|i| vec![rx[i], ry[i], rz[i]]).collect();
    let m = |f: fn(&DeviceSample) -> &Vec3| mean(&samples.iter().map(|s| norm(f(s))).collect::<Vec<_>>());
    let speeds: Vec<f64> = samples.iter().map(|s| norm(&s.velocity)).collect();
    vec![
        oracle_path_length(&pos),
        oracle_diameter(&pos),
        oracle_path_length(&ang),
        oracle_diameter(&ang),
        m(|s| &s.velocity),
        m(|s| &s.acceleration),
        m(|s| &s.angular_velocity),
        m(|s| &s.angular_acceleration),
        f64::from(oracle_submovements(&speeds, cfg)),
    ]
}

fn pair_oracle(a: &[&DeviceSample], b: &[&DeviceSample], skew: f64) -> (f64, f64) {
    let ta: Vec<f64> = a.iter().map(|s| s.t).collect();
    let tb: Vec<f64> = b.iter().map(|s| s.t).collect();
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (i, j) in oracle_align(&ta, &tb, skew) {
        let d = norm(&Vec3::new(
            a[i].position.x - b[j].position.x,
            a[i].position.y - b[j].position.y,
            a[i].position.z - b[j].position.z,
        ));
        sum += d;
        max = max.max(d);
    }
    (sum, max)
}

/// Every default metric column for a trial, computed by the oracles above, in
/// feature-column order.
pub fn oracle_trial_values(trial: &TrialTelemetry, cfg: &SubmovementConfig, skew: f64) -> Vec<f64> {
    let dom = match trial.dominant_hand {
        Hand::Right => &trial.right,
        Hand::Left => &trial.left,
    };
    let hmd: Vec<&DeviceSample> = trial.headset.iter().collect();
    let dom_base: Vec<&DeviceSample> = dom.iter().map(|c| &c.base).collect();
    let mut v = device_oracle(&hmd, cfg);
    v.extend(device_oracle(&dom_base, cfg));
    let (pv, pe) = pair_oracle(&hmd, &dom_base, skew);
    v.push(pv);
    v.push(pe);
    let stick: Vec<Vec<f64>> = dom.iter().map(|c| c.thumbstick.to_vec()).collect();
    v.push(oracle_path_length(&stick));
    v.push(oracle_diameter(&stick));
    v.push(mean(&dom.iter().map(|c| c.trigger_pressure).collect::<Vec<_>>()));
    v.push(mean(&dom.iter().map(|c| c.grip_pressure).collect::<Vec<_>>()));
    let buttons: [fn(&ButtonState) -> bool; 6] = [
        |b| b.trigger,
        |b| b.grip,
        |b| b.primary,
        |b| b.secondary,
        |b| b.primary_touch,
        |b| b.secondary_touch,
    ];
    for f in buttons {
        v.push(f64::from(oracle_rises(&dom.iter().map(|c| f(&c.buttons)).collect::<Vec<_>>())));
    }
    let ground: Vec<[f64; 2]> = trial.headset.iter().map(|s| [s.position.x, s.position.z]).collect();
    let start = [trial.start_pos.x, trial.start_pos.z];
    let target = [trial.target_pos.x, trial.target_pos.z];
    let dev = oracle_deviations(&ground, start, target);
    v.push(f64::from(oracle_reentries(&ground, target, trial.target_radius)));
    v.push(f64::from(oracle_crossings(&dev)));
    v.push(oracle_sample_sd(&dev));
    v
}

fn rand_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn rand_rotation(rng: &mut impl Rng, prev: Option<Vec3>) -> Vec3 {
    let wrap = |v: f64| v.rem_euclid(360.0);
    match prev {
        Some(p) if rng.random::<f64>() < 0.9 => Vec3::new(
            wrap(p.x + rng.random_range(-40.0..40.0)),
            wrap(p.y + rng.random_range(-40.0..40.0)),
            wrap(p.z + rng.random_range(-40.0..40.0)),
        ),
        _ => Vec3::new(
            rng.random_range(0.0..360.0),
            rng.random_range(0.0..360.0),
            rng.random_range(0.0..360.0),
        ),
    }
}

fn rand_device_series(rng: &mut impl Rng, times: &[f64], target: Vec3) -> Vec<DeviceSample> {
    let mut pos = Vec3::ZERO;
    let mut rot = None;
    let n = times.len();
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let pull = i as f64 / n as f64;
            let step = rand_vec(rng, 0.3);
            pos = Vec3::new(
                pos.x + step.x + 0.2 * pull * (target.x - pos.x),
                pos.y + step.y * 0.2,
                pos.z + step.z + 0.2 * pull * (target.z - pos.z),
            );
            let r = rand_rotation(rng, rot);
            rot = Some(r);
            // Occasional rest periods exercise the submovement dips.
            let moving = rng.random::<f64>() < 0.75;
            let speed = if moving { rng.random_range(0.0..3.0) } else { rng.random_range(0.0..0.05) };
            DeviceSample {
                t,
                position: pos,
                rotation_euler: r,
                velocity: Vec3::new(speed, 0.0, rng.random_range(-0.1..0.1)),
                angular_velocity: rand_vec(rng, 90.0),
                acceleration: rand_vec(rng, 5.0),
                angular_acceleration: rand_vec(rng, 200.0),
            }
        })
        .collect()
}

fn jittered_times(rng: &mut impl Rng, base: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(base.len());
    for t in base {
        let keep = rng.random::<f64>() > 0.05;
        let shifted = (t + rng.random_range(-0.012..0.012)).max(0.0);
        if keep {
            out.push(shifted);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn rand_controller(rng: &mut impl Rng, times: &[f64], target: Vec3) -> Vec<ControllerSample> {
    let base = rand_device_series(rng, times, target);
    let mut buttons = ButtonState::default();
    base.into_iter()
        .map(|b| {
            for v in [
                &mut buttons.trigger,
                &mut buttons.grip,
                &mut buttons.primary,
                &mut buttons.secondary,
                &mut buttons.primary_touch,
                &mut buttons.secondary_touch,
            ] {
                if rng.random::<f64>() < 0.2 {
                    *v = !*v;
                }
            }
            ControllerSample {
                base: b,
                thumbstick: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                trigger_pressure: rng.random_range(0.0..1.0),
                grip_pressure: rng.random_range(0.0..1.0),
                buttons,
            }
        })
        .collect()
}

/// A random but structurally valid trial with `n` headset samples.
pub fn random_trial(seed: u64, n: usize) -> TrialTelemetry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = rng.random_range(30.0..90.0);
    let times: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
    let target = Vec3::new(rng.random_range(-8.0..8.0), 0.0, rng.random_range(2.0..10.0));
    let headset = rand_device_series(&mut rng, &times, target);
    let lt = jittered_times(&mut rng, &times);
    let rt = jittered_times(&mut rng, &times);
    let left = rand_controller(&mut rng, &lt, target);
    let right = rand_controller(&mut rng, &rt, target);
    let hand = if rng.random::<bool>() { Hand::Right } else { Hand::Left };
    TrialTelemetry {
        participant_id: "P001".into(),
        group: Group::NonImpaired,
        dominant_hand: hand,
        technique: TechniqueId::Teleport,
        block: 1,
        trial_index: 1,
        start_pos: Vec3::ZERO,
        target_pos: target,
        target_radius: rng.random_range(0.5..3.0),
        headset,
        left,
        right,
        trial_time: times.last().copied().unwrap_or(0.0),
        hit: true,
        obstacles_hit: 0,
    }
}

/// A QS-shaped dataset over an arbitrary design. Row `i` belongs to
/// participant `P{i / per_participant}` and predicts technique `i % 6`.
pub fn table_dataset(rows: &[Vec<f64>], y: &[f64], per_participant: usize) -> Dataset {
    let p = rows.first().map_or(0, Vec::len);
    let feature_names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    Dataset {
        scenario: Scenario::Qs,
        calibration: None,
        blocks: (0..p)
            .map(|j| FeatureBlock {
                name: feature_names[j].clone(),
                columns: vec![j],
            })
            .collect(),
        feature_names,
        indicator: vec![false; p],
        instances: rows
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (r, &t))| Instance {
                participant_id: format!("P{:03}", i / per_participant),
                group: if (i / per_participant).is_multiple_of(2) { Group::Impaired } else { Group::NonImpaired },
                prediction_technique: TechniqueId::ALL[i % 6],
                calibration_technique: None,
                trial: None,
                features: r.clone(),
                target: t,
            })
            .collect(),
        calibration_times: BTreeMap::new(),
        exclusions: Vec::new(),
    }
}

/// Standard-normal design of `n` rows by `p` columns.
pub fn normal_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect()).collect()
}
