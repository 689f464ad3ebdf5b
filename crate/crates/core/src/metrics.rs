//! Engineered interaction metrics computed from one trial's telemetry.
//!
//! Distances are taken between consecutive samples without reference to the
//! sample interval, so nothing here assumes a fixed capture rate. Only the
//! headset and the dominant-hand controller contribute features.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{
    press_counts, ControllerSample, DeviceSample, Group, PressCounts, SessionLog, TechniqueId,
    TrialKey, TrialTelemetry, Vec3,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("non-finite coordinate in input series")]
    NonFiniteInput,
    #[error("paired series differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot average an empty series")]
    EmptySeries,
    #[error("start and target coincide; task axis undefined")]
    DegenerateAxis,
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("participant {participant} trial {key}: dominant-hand controller log is empty")]
    MissingDominantController { participant: String, key: TrialKey },
}

fn dist<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_finite<const K: usize>(points: &[[f64; K]]) -> Result<(), MetricsError> {
    if points.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MetricsError::NonFiniteInput)
    }
}

/// Total distance travelled: the sum of Euclidean steps between consecutive points.
pub fn path_length<const K: usize>(points: &[[f64; K]]) -> Result<f64, MetricsError> {
    check_finite(points)?;
    Ok(points.windows(2).map(|w| dist(&w[0], &w[1])).sum())
}

/// Largest distance between any two points (the set's diameter).
///
/// Exact. Points are visited in decreasing distance from the centroid and a
/// pair is skipped once `r_i + r_j` cannot beat the best distance found, which
/// keeps elongated paths close to linear time.
pub fn max_pairwise_distance<const K: usize>(points: &[[f64; K]]) -> Result<f64, MetricsError> {
    check_finite(points)?;
    let n = points.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut centroid = [0.0; K];
    for p in points {
        for k in 0..K {
            centroid[k] += p[k];
        }
    }
    for c in &mut centroid {
        *c /= n as f64;
    }
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist(p, &centroid), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut best = 0.0f64;
    for a in 0..n {
        let (ra, ia) = order[a];
        if 2.0 * ra <= best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if ra + rb <= best {
                break;
            }
            best = best.max(dist(&points[ia], &points[ib]));
        }
    }
    Ok(best)
}

/// Inter-device distance summed and maximised over index-aligned samples.
pub fn pair_series_metrics(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<(f64, f64), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    check_finite(a)?;
    check_finite(b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(p, q)| dist(p, q))
        .fold((0.0, 0.0), |(sum, max), d| (sum + d, f64::max(max, d))))
}

/// Joins two sorted timestamp series, pairing each sample of `a` with the
/// nearest unused sample of `b` no further than `max_skew` away. Unmatched
/// samples are dropped.
pub fn align_by_timestamp(a: &[f64], b: &[f64], max_skew: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(a.len().min(b.len()));
    let mut j = 0;
    for (i, &ta) in a.iter().enumerate() {
        while j + 1 < b.len() && (b[j + 1] - ta).abs() <= (b[j] - ta).abs() {
            j += 1;
        }
        if j >= b.len() {
            break;
        }
        if (b[j] - ta).abs() <= max_skew {
            pairs.push((i, j));
            j += 1;
        }
    }
    pairs
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubmovementConfig {
    /// Threshold as a fraction of the series' peak speed.
    pub peak_fraction: f64,
    /// Consecutive below-threshold samples needed to separate two movements.
    pub min_dip_samples: usize,
}

impl Default for SubmovementConfig {
    fn default() -> Self {
        SubmovementConfig {
            peak_fraction: 0.10,
            min_dip_samples: 3,
        }
    }
}

/// Number of velocity bursts bounded by dips.
///
/// A burst is a stretch at or above `peak_fraction × peak`; dips shorter than
/// `min_dip_samples` do not split a burst. The series ends count as dips.
/// Timestamps are not consulted, so the count is invariant to time rescaling.
pub fn submovement_count(speeds: &[(f64, f64)], cfg: &SubmovementConfig) -> u32 {
    let peak = speeds.iter().map(|s| s.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0;
    }
    let threshold = cfg.peak_fraction * peak;
    let mut count = 0;
    let mut moving = false;
    let mut dip = 0usize;
    for &(_, v) in speeds {
        if v >= threshold {
            if !moving {
                count += 1;
                moving = true;
            }
            dip = 0;
        } else {
            dip += 1;
            if dip >= cfg.min_dip_samples {
                moving = false;
            }
        }
    }
    count
}

pub fn mean_channel(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of per-sample Euclidean magnitudes.
pub fn mean_magnitude(vectors: &[Vec3]) -> Result<f64, MetricsError> {
    let mags: Vec<f64> = vectors.iter().map(Vec3::norm).collect();
    mean_channel(&mags)
}

/// Signed perpendicular distance of each point from the line through
/// `start` and `target`; points left of the start→target direction are positive.
pub fn task_axis_deviations(
    positions: &[[f64; 2]],
    start: [f64; 2],
    target: [f64; 2],
) -> Result<Vec<f64>, MetricsError> {
    let dx = target[0] - start[0];
    let dy = target[1] - start[1];
    let len = dx.hypot(dy);
    if len < 1e-9 {
        return Err(MetricsError::DegenerateAxis);
    }
    check_finite(positions)?;
    Ok(positions
        .iter()
        .map(|p| (dx * (p[1] - start[1]) - dy * (p[0] - start[0])) / len)
        .collect())
}

/// Sample standard deviation of the task-axis deviations.
pub fn movement_variability(deviations: &[f64]) -> Result<f64, MetricsError> {
    let n = deviations.len();
    if n < 2 {
        return Err(MetricsError::InsufficientSamples(n));
    }
    // Welford's update keeps this stable for long, offset series.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &y) in deviations.iter().enumerate() {
        let delta = y - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (y - mean);
    }
    Ok((m2.max(0.0) / (n - 1) as f64).sqrt())
}

/// Entries into the target circle beyond the first. Being inside on the first
/// sample counts as an entry.
pub fn target_reentry_count(positions: &[[f64; 2]], target: [f64; 2], radius: f64) -> u32 {
    let mut entries = 0u32;
    let mut inside = false;
    for p in positions {
        let now = dist(p, &target) <= radius;
        if now && !inside {
            entries += 1;
        }
        inside = now;
    }
    entries.saturating_sub(1)
}

/// Strict sign changes in the deviation series; zeros keep the previous sign.
pub fn axis_crossed_count(deviations: &[f64]) -> u32 {
    let mut count = 0;
    let mut sign = 0i8;
    for &y in deviations {
        let s = if y > 0.0 {
            1
        } else if y < 0.0 {
            -1
        } else {
            continue;
        };
        if sign != 0 && s != sign {
            count += 1;
        }
        sign = s;
    }
    count
}

/// Unwraps a degree series so consecutive steps lie in `[-180, 180]`.
pub fn unwrap_degrees(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = match series.first() {
        Some(&first) => first,
        None => return out,
    };
    out.push(acc);
    for w in series.windows(2) {
        let mut d = w[1] - w[0];
        d -= 360.0 * (d / 360.0).round();
        acc += d;
        out.push(acc);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub variability: f64,
    pub extent: f64,
    pub angular_variability: f64,
    pub angular_extent: f64,
    pub mean_velocity: f64,
    pub mean_acceleration: f64,
    pub mean_angular_velocity: f64,
    pub mean_angular_acceleration: f64,
    pub submovement_count: u32,
}

impl DeviceMetrics {
    const FIELDS: [&'static str; 9] = [
        "variability",
        "extent",
        "angular_variability",
        "angular_extent",
        "mean_velocity",
        "mean_acceleration",
        "mean_angular_velocity",
        "mean_angular_acceleration",
        "submovements",
    ];

    fn values(&self) -> [f64; 9] {
        [
            self.variability,
            self.extent,
            self.angular_variability,
            self.angular_extent,
            self.mean_velocity,
            self.mean_acceleration,
            self.mean_angular_velocity,
            self.mean_angular_acceleration,
            f64::from(self.submovement_count),
        ]
    }
}

/// Pair metrics for the optional device pairs beyond headset–dominant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtraPairMetrics {
    pub hmd_non_dominant: (f64, f64),
    pub left_right: (f64, f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub headset: DeviceMetrics,
    pub dominant: DeviceMetrics,
    pub pair_variability: f64,
    pub pair_extent: f64,
    pub thumbstick_variability: f64,
    pub thumbstick_extent: f64,
    pub mean_trigger_pressure: f64,
    pub mean_grip_pressure: f64,
    pub presses: PressCounts,
    pub reentry_count: u32,
    pub axis_crossed_count: u32,
    pub movement_variability: f64,
    pub extra_pairs: Option<ExtraPairMetrics>,
}

/// Number of metric columns with the default configuration.
pub const BASE_METRIC_COUNT: usize = 33;

/// Stable snake_case column names, in the order `TrialMetrics::values` emits them.
pub fn metric_names(all_device_pairs: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(BASE_METRIC_COUNT + 4);
    for prefix in ["hmd", "dom"] {
        names.extend(DeviceMetrics::FIELDS.iter().map(|f| format!("{prefix}_{f}")));
    }
    names.extend(
        [
            "hmd_dom_pair_variability",
            "hmd_dom_pair_extent",
            "dom_thumbstick_variability",
            "dom_thumbstick_extent",
            "dom_mean_trigger_pressure",
            "dom_mean_grip_pressure",
            "dom_trigger_presses",
            "dom_grip_presses",
            "dom_primary_presses",
            "dom_secondary_presses",
            "dom_primary_touches",
            "dom_secondary_touches",
            "target_reentry_count",
            "axis_crossed_count",
            "movement_variability",
        ]
        .map(String::from),
    );
    if all_device_pairs {
        names.extend(
            [
                "hmd_ndom_pair_variability",
                "hmd_ndom_pair_extent",
                "left_right_pair_variability",
                "left_right_pair_extent",
            ]
            .map(String::from),
        );
    }
    names
}

impl TrialMetrics {
    pub fn values(&self) -> Vec<f64> {
        let p = &self.presses;
        let mut v = Vec::with_capacity(BASE_METRIC_COUNT + 4);
        v.extend(self.headset.values());
        v.extend(self.dominant.values());
        v.extend([
            self.pair_variability,
            self.pair_extent,
            self.thumbstick_variability,
            self.thumbstick_extent,
            self.mean_trigger_pressure,
            self.mean_grip_pressure,
            f64::from(p.trigger),
            f64::from(p.grip),
            f64::from(p.primary),
            f64::from(p.secondary),
            f64::from(p.primary_touch),
            f64::from(p.secondary_touch),
            f64::from(self.reentry_count),
            f64::from(self.axis_crossed_count),
            self.movement_variability,
        ]);
        if let Some(x) = &self.extra_pairs {
            v.extend([x.hmd_non_dominant.0, x.hmd_non_dominant.1, x.left_right.0, x.left_right.1]);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub submovement: SubmovementConfig,
    /// Largest timestamp gap tolerated when pairing samples of two devices.
    pub pair_max_skew_s: f64,
    /// Also emit headset–non-dominant and left–right pair metrics.
    pub all_device_pairs: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            submovement: SubmovementConfig::default(),
            pair_max_skew_s: 0.010,
            all_device_pairs: false,
        }
    }
}

fn device_metrics(samples: &[&DeviceSample], cfg: &MetricsConfig) -> Result<DeviceMetrics, MetricsError> {
    if samples.is_empty() {
        return Ok(DeviceMetrics::default());
    }
    let positions: Vec<[f64; 3]> = samples.iter().map(|s| s.position.to_array()).collect();
    let axis = |f: fn(&Vec3) -> f64| -> Vec<f64> {
        unwrap_degrees(&samples.iter().map(|s| f(&s.rotation_euler)).collect::<Vec<_>>())
    };
    let (rx, ry, rz) = (axis(|v| v.x), axis(|v| v.y), axis(|v| v.z));
    let angles: Vec<[f64; 3]> = (0..samples.len()).map(|i| [rx[i], ry[i], rz[i]]).collect();
    let collect = |f: fn(&DeviceSample) -> Vec3| samples.iter().map(|s| f(s)).collect::<Vec<_>>();
    let speeds: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.velocity.norm())).collect();

    Ok(DeviceMetrics {
        variability: path_length(&positions)?,
        extent: max_pairwise_distance(&positions)?,
        angular_variability: path_length(&angles)?,
        angular_extent: max_pairwise_distance(&angles)?,
        mean_velocity: mean_magnitude(&collect(|s| s.velocity))?,
        mean_acceleration: mean_magnitude(&collect(|s| s.acceleration))?,
        mean_angular_velocity: mean_magnitude(&collect(|s| s.angular_velocity))?,
        mean_angular_acceleration: mean_magnitude(&collect(|s| s.angular_acceleration))?,
        submovement_count: submovement_count(&speeds, &cfg.submovement),
    })
}

fn aligned_pair(
    a: &[&DeviceSample],
    b: &[&DeviceSample],
    max_skew: f64,
) -> Result<(f64, f64), MetricsError> {
    let ta: Vec<f64> = a.iter().map(|s| s.t).collect();
    let tb: Vec<f64> = b.iter().map(|s| s.t).collect();
    let pairs = align_by_timestamp(&ta, &tb, max_skew);
    let pa: Vec<[f64; 3]> = pairs.iter().map(|&(i, _)| a[i].position.to_array()).collect();
    let pb: Vec<[f64; 3]> = pairs.iter().map(|&(_, j)| b[j].position.to_array()).collect();
    pair_series_metrics(&pa, &pb)
}

fn bases(c: &[ControllerSample]) -> Vec<&DeviceSample> {
    c.iter().map(|s| &s.base).collect()
}

/// Computes every metric for one trial.
pub fn extract_trial_metrics(trial: &TrialTelemetry, cfg: &MetricsConfig) -> Result<TrialMetrics, MetricsError> {
    let dom = trial.dominant_controller();
    if dom.is_empty() {
        return Err(MetricsError::MissingDominantController {
            participant: trial.participant_id.clone(),
            key: trial.key(),
        });
    }
    let hmd: Vec<&DeviceSample> = trial.headset.iter().collect();
    let dom_base = bases(dom);

    let (pair_variability, pair_extent) = aligned_pair(&hmd, &dom_base, cfg.pair_max_skew_s)?;
    let stick: Vec<[f64; 2]> = dom.iter().map(|c| c.thumbstick).collect();
    let trigger: Vec<f64> = dom.iter().map(|c| c.trigger_pressure).collect();
    let grip: Vec<f64> = dom.iter().map(|c| c.grip_pressure).collect();

    let ground: Vec<[f64; 2]> = trial.headset.iter().map(|s| s.position.horizontal()).collect();
    let start = trial.start_pos.horizontal();
    let target = trial.target_pos.horizontal();
    let deviations = task_axis_deviations(&ground, start, target)?;
    // A single headset sample has no spread to measure.
    let movement_variability = if deviations.len() < 2 {
        0.0
    } else {
        movement_variability(&deviations)?
    };

    let extra_pairs = if cfg.all_device_pairs {
        let ndom = bases(trial.non_dominant_controller());
        let left = bases(&trial.left);
        let right = bases(&trial.right);
        Some(ExtraPairMetrics {
            hmd_non_dominant: aligned_pair(&hmd, &ndom, cfg.pair_max_skew_s)?,
            left_right: aligned_pair(&left, &right, cfg.pair_max_skew_s)?,
        })
    } else {
        None
    };

    Ok(TrialMetrics {
        headset: device_metrics(&hmd, cfg)?,
        dominant: device_metrics(&dom_base, cfg)?,
        pair_variability,
        pair_extent,
        thumbstick_variability: path_length(&stick)?,
        thumbstick_extent: max_pairwise_distance(&stick)?,
        mean_trigger_pressure: mean_channel(&trigger)?,
        mean_grip_pressure: mean_channel(&grip)?,
        presses: press_counts(dom),
        reentry_count: target_reentry_count(&ground, target, trial.target_radius),
        axis_crossed_count: axis_crossed_count(&deviations),
        movement_variability,
        extra_pairs,
    })
}

/// One row of the per-trial feature dump.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub participant_id: String,
    pub group: Group,
    pub technique: TechniqueId,
    pub block: u8,
    pub trial_index: u8,
    pub trial_time_s: f64,
    pub hit: bool,
    pub obstacles_hit: u32,
    pub metrics: TrialMetrics,
}

/// Extracts metrics for every trial of every session, in input order.
pub fn extract_session_features(
    sessions: &[SessionLog],
    cfg: &MetricsConfig,
) -> Result<Vec<FeatureRow>, MetricsError> {
    let trials: Vec<&TrialTelemetry> = sessions.iter().flat_map(|s| &s.trials).collect();
    trials
        .par_iter()
        .map(|t| {
            Ok(FeatureRow {
                participant_id: t.participant_id.clone(),
                group: t.group,
                technique: t.technique,
                block: t.block,
                trial_index: t.trial_index,
                trial_time_s: t.trial_time,
                hit: t.hit,
                obstacles_hit: t.obstacles_hit,
                metrics: extract_trial_metrics(t, cfg)?,
            })
        })
        .collect()
}

pub fn write_feature_csv<W: Write>(
    rows: &[FeatureRow],
    all_device_pairs: bool,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "participant_id",
        "group",
        "technique",
        "block",
        "trial_index",
        "trial_time_s",
        "hit",
        "obstacles_hit",
    ]
    .map(String::from)
    .to_vec();
    header.extend(metric_names(all_device_pairs));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.participant_id.clone(),
            r.group.name().to_string(),
            r.technique.name().to_string(),
            r.block.to_string(),
            r.trial_index.to_string(),
            r.trial_time_s.to_string(),
            r.hit.to_string(),
            r.obstacles_hit.to_string(),
        ];
        rec.extend(r.metrics.values().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
