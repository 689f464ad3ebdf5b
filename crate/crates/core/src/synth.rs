//! Synthetic cohorts with a known ground-truth trial-time function.
//!
//! Each participant gets a five-axis ability profile. A technique's expected
//! trial time grows with the participant's impairment along the axes that
//! technique loads. Device streams, button activity and questionnaire answers
//! are derived from the same profile so that calibration data carries the
//! signal a model needs to recover.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::questionnaire::{
    questionnaires_to_string, PostTask, QuestionnaireRecord, QuickDash, Triq, QUICKDASH_ITEMS, TRIQ_ITEMS,
};
use crate::session::{
    session_log_to_string, ButtonState, ControllerSample, DeviceSample, Group, Hand, SessionError, SessionLog,
    TechniqueId, TrialTelemetry, Vec3, MAX_TRIAL_TIME_S,
};

pub const AXES: [&str; 5] = ["fine_motor", "gross_motor", "head_mobility", "stamina", "pain_free"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("cannot parse demand file {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Abilities in `[0, 1]`; 1 means unimpaired.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbilityProfile {
    pub fine_motor: f64,
    pub gross_motor: f64,
    pub head_mobility: f64,
    pub stamina: f64,
    pub pain_free: f64,
}

impl AbilityProfile {
    pub const UNIMPAIRED: AbilityProfile = AbilityProfile::uniform(1.0);

    pub const fn uniform(v: f64) -> Self {
        AbilityProfile {
            fine_motor: v,
            gross_motor: v,
            head_mobility: v,
            stamina: v,
            pain_free: v,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.fine_motor, self.gross_motor, self.head_mobility, self.stamina, self.pain_free]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        AbilityProfile {
            fine_motor: a[0],
            gross_motor: a[1],
            head_mobility: a[2],
            stamina: a[3],
            pain_free: a[4],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in AXES.iter().zip(self.to_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::ConfigInvalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Base time and per-axis load for one technique.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TechniqueDemand {
    pub base_time: f64,
    #[serde(default)]
    pub fine_motor: f64,
    #[serde(default)]
    pub gross_motor: f64,
    #[serde(default)]
    pub head_mobility: f64,
    #[serde(default)]
    pub stamina: f64,
    #[serde(default)]
    pub pain_free: f64,
}

impl TechniqueDemand {
    pub fn weights(&self) -> [f64; 5] {
        [self.fine_motor, self.gross_motor, self.head_mobility, self.stamina, self.pain_free]
    }

    fn new(base_time: f64, w: [f64; 5]) -> Self {
        TechniqueDemand {
            base_time,
            fine_motor: w[0],
            gross_motor: w[1],
            head_mobility: w[2],
            stamina: w[3],
            pain_free: w[4],
        }
    }
}

/// One demand per technique; all six must be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandMatrix(pub BTreeMap<TechniqueId, TechniqueDemand>);

impl Default for DemandMatrix {
    /// Base times rise Teleport < AstralBody < SlidingLooking <
    /// ChickenAcceleration < ThrowTeleport < GrabAndPull. Every technique
    /// loads the axes in the same proportions (fine and gross motor heaviest,
    /// then head mobility, stamina, pain), scaled by how physically demanding
    /// it is, so one calibration technique's time pins down the others.
    fn default() -> Self {
        use TechniqueId::*;
        let scaled = |base: f64, s: f64| TechniqueDemand::new(base, SHARED_LOAD.map(|w| w * s));
        DemandMatrix(BTreeMap::from([
            (Teleport, scaled(3.0, 0.30)),
            (AstralBody, scaled(4.2, 0.35)),
            (SlidingLooking, scaled(5.8, 0.45)),
            (ChickenAcceleration, scaled(8.0, 0.50)),
            (ThrowTeleport, scaled(11.0, 0.60)),
            (GrabAndPull, scaled(15.0, 0.70)),
        ]))
    }
}

/// Axis proportions of the default demand matrix.
pub const SHARED_LOAD: [f64; 5] = [0.30, 0.30, 0.20, 0.10, 0.10];

impl DemandMatrix {
    pub fn get(&self, t: TechniqueId) -> &TechniqueDemand {
        &self.0[&t]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for t in TechniqueId::ALL {
            let d = self
                .0
                .get(&t)
                .ok_or_else(|| SynthError::ConfigInvalid(format!("no demand for {t}")))?;
            if !(d.base_time > 0.0 && d.base_time < MAX_TRIAL_TIME_S) {
                return Err(SynthError::ConfigInvalid(format!(
                    "{t}: base_time {} outside (0, {MAX_TRIAL_TIME_S})",
                    d.base_time
                )));
            }
            let w = d.weights();
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(SynthError::ConfigInvalid(format!("{t}: weights must be >= 0")));
            }
            if w.iter().sum::<f64>() > 4.0 {
                return Err(SynthError::ConfigInvalid(format!("{t}: weights sum above 4")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let m: DemandMatrix = toml::from_str(s).map_err(|e| SynthError::Parse {
            path: "<toml>".into(),
            detail: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SynthError> {
        let m: DemandMatrix = serde_json::from_str(s).map_err(|e| SynthError::Parse {
            path: "<json>".into(),
            detail: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            SynthError::Parse { detail, .. } => SynthError::Parse {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("demand matrix serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_impaired: usize,
    pub n_non_impaired: usize,
    pub trials_per_block: u8,
    pub blocks: u8,
    /// Lognormal σ of the multiplicative trial-time noise.
    pub noise_sigma: f64,
    /// Device samples per second.
    pub sample_rate: f64,
    pub seed: u64,
    /// Forces every participant to this profile (test hook).
    pub profile_override: Option<AbilityProfile>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_impaired: 20,
            n_non_impaired: 20,
            trials_per_block: 6,
            blocks: 2,
            noise_sigma: 0.15,
            sample_rate: 72.0,
            seed: 42,
            profile_override: None,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        if self.n_impaired + self.n_non_impaired == 0 {
            return bad("cohort is empty".into());
        }
        if !(1..=6).contains(&self.trials_per_block) {
            return bad(format!("trials_per_block {} not in 1..=6", self.trials_per_block));
        }
        if !(1..=2).contains(&self.blocks) {
            return bad(format!("blocks {} not in 1..=2", self.blocks));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.sample_rate >= 1.0 && self.sample_rate <= 1000.0) {
            return bad(format!("sample_rate {} not in [1, 1000] Hz", self.sample_rate));
        }
        if let Some(p) = &self.profile_override {
            p.validate()?;
        }
        Ok(())
    }
}

/// `base × (1 + Σ w_k (1 − ability_k))`, clamped to the 30 s cap.
pub fn ground_truth_time(profile: &AbilityProfile, technique: TechniqueId, demands: &DemandMatrix) -> f64 {
    let d = demands.get(technique);
    let load: f64 = d
        .weights()
        .iter()
        .zip(profile.to_array())
        .map(|(w, a)| w * (1.0 - a))
        .sum();
    (d.base_time * (1.0 + load)).min(MAX_TRIAL_TIME_S)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParticipant {
    pub participant_id: String,
    pub group: Group,
    pub dominant_hand: Hand,
    pub profile: AbilityProfile,
    /// Noiseless expected time per technique.
    pub expected_times: BTreeMap<TechniqueId, f64>,
}

#[derive(Clone, Debug)]
pub struct Cohort {
    pub participants: Vec<SyntheticParticipant>,
    pub sessions: Vec<SessionLog>,
    pub questionnaires: Vec<QuestionnaireRecord>,
}

/// The random stream for participant `index`.
pub fn participant_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn participant_id(group: Group, ordinal: usize) -> String {
    match group {
        Group::Impaired => format!("I{ordinal:03}"),
        Group::NonImpaired => format!("N{ordinal:03}"),
    }
}

fn effort_level(t: TechniqueId) -> f64 {
    match t {
        TechniqueId::AstralBody | TechniqueId::SlidingLooking | TechniqueId::Teleport => 0.4,
        TechniqueId::ChickenAcceleration => 0.7,
        TechniqueId::GrabAndPull | TechniqueId::ThrowTeleport => 1.0,
    }
}

/// Impairment along the axes a technique loads, normalized to `[0, 1]`.
fn technique_load(profile: &AbilityProfile, d: &TechniqueDemand) -> f64 {
    let w = d.weights();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    w.iter().zip(profile.to_array()).map(|(w, a)| w * (1.0 - a)).sum::<f64>() / total
}

const QUICKDASH_MIX: [[f64; 5]; QUICKDASH_ITEMS] = [
    [0.6, 0.4, 0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0, 0.5, 0.0],
    [0.0, 0.6, 0.0, 0.4, 0.0],
    [0.0, 0.7, 0.3, 0.0, 0.0],
    [0.8, 0.2, 0.0, 0.0, 0.0],
    [0.0, 0.4, 0.0, 0.3, 0.3],
    [0.0, 0.0, 0.0, 0.5, 0.5],
    [0.0, 0.5, 0.0, 0.5, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [0.5, 0.0, 0.0, 0.0, 0.5],
    [0.0, 0.0, 0.0, 0.3, 0.7],
];

/// (axis, threshold): the item is checked when that ability falls below it.
const TRIQ_RULES: [(usize, f64); TRIQ_ITEMS] = [
    (1, 0.50),
    (1, 0.45),
    (0, 0.40),
    (0, 0.50),
    (3, 0.50),
    (0, 0.45),
    (1, 0.40),
    (0, 0.30),
    (0, 0.35),
    (1, 0.35),
    (1, 0.55),
    (4, 0.50),
    (0, 0.55),
    (0, 0.40),
    (0, 0.50),
    (1, 0.60),
    (3, 0.40),
    (2, 0.30),
    (3, 0.30),
];

pub fn questionnaire_for(id: &str, profile: &AbilityProfile, demands: &DemandMatrix) -> QuestionnaireRecord {
    let a = profile.to_array();
    let mut items = [Some(1u8); QUICKDASH_ITEMS];
    for (item, mix) in items.iter_mut().zip(QUICKDASH_MIX) {
        let m: f64 = mix.iter().zip(a).map(|(w, v)| w * v).sum();
        *item = Some(1 + (4.0 * (1.0 - m)).round().clamp(0.0, 4.0) as u8);
    }
    let mut triq = [false; TRIQ_ITEMS];
    for (flag, (axis, thr)) in triq.iter_mut().zip(TRIQ_RULES) {
        *flag = a[axis] < thr;
    }
    let mean_ability = a.iter().sum::<f64>() / 5.0;
    let scale = |v: f64, hi: f64| (v * hi).round().clamp(0.0, hi) as i32;
    let post_task = TechniqueId::ALL
        .into_iter()
        .map(|t| {
            let load = technique_load(profile, demands.get(t));
            let effort = effort_level(t);
            let pt = PostTask {
                presence: 1 + scale(mean_ability, 6.0),
                discomfort: scale((1.0 - profile.pain_free) * effort, 3.0),
                tlx: [
                    scale(0.2 + 0.6 * load, 20.0),
                    scale((1.0 - profile.stamina) * effort, 20.0),
                    scale((1.0 - profile.gross_motor) * effort, 20.0),
                    scale(load, 20.0),
                    scale((1.0 - profile.pain_free) * 0.8, 20.0),
                ],
            };
            (t, pt)
        })
        .collect();
    QuestionnaireRecord {
        participant_id: id.to_string(),
        quickdash: QuickDash { items },
        triq: Triq { items: triq },
        post_task,
    }
}

fn quantize(v: f64) -> f64 {
    let q = (v * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn quantize_vec(v: Vec3) -> Vec3 {
    Vec3::new(quantize(v.x), quantize(v.y), quantize(v.z))
}

fn wrap_degrees(v: Vec3) -> Vec3 {
    let w = |a: f64| {
        let q = quantize(a.rem_euclid(360.0));
        if q >= 360.0 {
            0.0
        } else {
            q
        }
    };
    Vec3::new(w(v.x), w(v.y), w(v.z))
}

/// Finite-difference derivative of a sampled vector series.
fn derivative(t: &[f64], v: &[Vec3]) -> Vec<Vec3> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                Vec3::ZERO
            } else if i == 0 {
                (v[1] - v[0]) * (1.0 / (t[1] - t[0]))
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) * (1.0 / (t[n - 1] - t[n - 2]))
            } else {
                (v[i + 1] - v[i - 1]) * (1.0 / (t[i + 1] - t[i - 1]))
            }
        })
        .collect()
}

/// Builds device samples from positions and unwrapped Euler angles.
fn device_series(t: &[f64], pos: &[Vec3], rot_unwrapped: &[Vec3]) -> Vec<DeviceSample> {
    let vel = derivative(t, pos);
    let acc = derivative(t, &vel);
    let angvel = derivative(t, rot_unwrapped);
    let angacc = derivative(t, &angvel);
    (0..t.len())
        .map(|i| DeviceSample {
            t: t[i],
            position: quantize_vec(pos[i]),
            rotation_euler: wrap_degrees(rot_unwrapped[i]),
            velocity: quantize_vec(vel[i]),
            angular_velocity: quantize_vec(angvel[i]),
            acceleration: quantize_vec(acc[i]),
            angular_acceleration: quantize_vec(angacc[i]),
        })
        .collect()
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn min_jerk_rate(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

struct TrialPlan<'a> {
    technique: TechniqueId,
    block: u8,
    trial_index: u8,
    duration: f64,
    hit: bool,
    profile: &'a AbilityProfile,
    hand: Hand,
}

fn synthesize_trial(
    plan: &TrialPlan<'_>,
    participant: &str,
    group: Group,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> TrialTelemetry {
    let p = plan.profile;
    let tech = plan.technique;
    let duration = plan.duration;

    let heading: f64 = rng.random_range(0.0..2.0 * PI);
    let distance = 6.0 + 2.0 * f64::from((plan.trial_index - 1) % 3);
    let dir = Vec3::new(heading.cos(), 0.0, heading.sin());
    let side = Vec3::new(-heading.sin(), 0.0, heading.cos());
    let start = Vec3::ZERO;
    let target = dir * distance;
    let phase: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    let obstacles_hit = (rng.random::<f64>() * 3.0 * (1.0 - p.fine_motor)).floor() as u32;

    let mut t: Vec<f64> = Vec::with_capacity((duration * rate) as usize + 2);
    let mut k = 0u64;
    loop {
        let tk = quantize(k as f64 / rate);
        if tk >= duration - 1e-6 {
            break;
        }
        t.push(tk);
        k += 1;
    }
    t.push(duration);

    let sway = 0.05 + 0.30 * (1.0 - p.fine_motor);
    let jitter = 0.003 * (1.0 - p.fine_motor);
    let head_amp = 5.0 + 40.0 * p.head_mobility;
    let hand_sign = if plan.hand == Hand::Right { 1.0 } else { -1.0 };
    let reach = 0.25 + 0.15 * p.gross_motor;
    let tremor = 0.004 + 0.03 * (1.0 - p.fine_motor);
    let stroke = 0.15 + 0.35 * p.gross_motor;
    let press_force = 0.5 + 0.5 * p.pain_free;
    let grip_force = 0.5 + 0.5 * p.gross_motor;
    let heading_deg = heading.to_degrees();

    let n = t.len();
    let mut hmd_pos = Vec::with_capacity(n);
    let mut hmd_rot = Vec::with_capacity(n);
    let mut dom_pos = Vec::with_capacity(n);
    let mut dom_rot = Vec::with_capacity(n);
    let mut off_pos = Vec::with_capacity(n);
    let mut off_rot = Vec::with_capacity(n);
    let mut dom_ctl: Vec<(f64, f64, [f64; 2], ButtonState)> = Vec::with_capacity(n);
    let slide_releases = (3.0 * (1.0 - p.fine_motor)).round() as usize;

    for &ti in &t {
        let tau = ti / duration;
        let s = min_jerk(tau);
        let lateral = sway * (PI * tau).sin() * (2.0 * PI * 0.5 * ti + phase[0]).sin();
        let mut noise = || rng.sample::<f64, _>(StandardNormal) * jitter;
        let head = start + dir * (distance * s) + side * lateral + Vec3::new(noise(), 1.2 + noise(), noise());
        let yaw = heading_deg + head_amp * (2.0 * PI * 0.3 * ti + phase[1]).sin();
        let pitch = 8.0 + 0.25 * head_amp * (2.0 * PI * 0.2 * ti + phase[2]).sin();
        let roll = 2.0 * (2.0 * PI * 0.1 * ti + phase[3]).sin();
        hmd_pos.push(head);
        hmd_rot.push(Vec3::new(pitch, yaw, roll));

        let tremble = |ph: f64| {
            Vec3::new(
                (2.0 * PI * 5.0 * ti + ph).sin(),
                (2.0 * PI * 5.5 * ti + 2.0 * ph).sin(),
                (2.0 * PI * 6.0 * ti + 3.0 * ph).sin(),
            ) * tremor
        };
        let body = head - Vec3::new(0.0, 0.45, 0.0);
        let (mut dom_fwd, mut dom_up, mut off_fwd, mut off_up) = (reach, 0.0, 0.15, 0.0);
        let mut buttons = ButtonState::default();
        let (mut trig, mut grip) = (0.0, 0.0);
        let mut stick = [0.0, 0.0];
        match tech {
            TechniqueId::GrabAndPull => {
                let cyc = (ti / 1.2).fract();
                dom_fwd += stroke * (0.5 - 0.5 * (2.0 * PI * cyc).cos());
                off_fwd += stroke * (0.5 + 0.5 * (2.0 * PI * cyc).cos());
                if cyc >= 0.5 {
                    buttons.trigger = true;
                    trig = press_force;
                }
            }
            TechniqueId::ThrowTeleport => {
                let cyc = (ti / 2.0).fract();
                dom_up = stroke * (2.0 * PI * cyc).sin();
                off_up = 0.5 * stroke * (2.0 * PI * cyc).sin();
                if cyc < 0.7 {
                    buttons.grip = true;
                    grip = grip_force;
                }
            }
            TechniqueId::Teleport => {
                dom_up = 0.1 * (2.0 * PI * 0.4 * ti + phase[4]).sin();
                if (ti / 1.5).fract() > 0.85 {
                    buttons.trigger = true;
                    trig = press_force;
                }
            }
            TechniqueId::AstralBody => {
                let drive = (0.6 + 0.4 * p.fine_motor) * min_jerk_rate(tau) / 1.875;
                let wobble = 0.25 * (1.0 - p.fine_motor) * (2.0 * PI * 0.7 * ti + phase[5]).sin();
                stick = [wobble.clamp(-1.0, 1.0), drive.clamp(-1.0, 1.0)];
                buttons.primary_touch = drive > 0.05;
            }
            TechniqueId::SlidingLooking => {
                buttons.primary_touch = true;
                let released = (1..=slide_releases).any(|r| {
                    let at = duration * r as f64 / (slide_releases + 1) as f64;
                    (ti - at).abs() < 0.075
                });
                buttons.primary = !released;
            }
            TechniqueId::ChickenAcceleration => {}
        }
        let dom = body + dir * dom_fwd + side * (0.2 * hand_sign) + Vec3::new(0.0, dom_up, 0.0) + tremble(phase[4]);
        let off = body + dir * off_fwd - side * (0.2 * hand_sign) + Vec3::new(0.0, off_up, 0.0) + tremble(phase[5]);
        dom_pos.push(dom);
        off_pos.push(off);
        dom_rot.push(Vec3::new(20.0 + 30.0 * dom_up, yaw * 0.5 + heading_deg * 0.5, 0.0));
        off_rot.push(Vec3::new(20.0 + 30.0 * off_up, heading_deg, 0.0));
        dom_ctl.push((quantize(trig), quantize(grip), stick.map(quantize), buttons));
    }

    let headset = device_series(&t, &hmd_pos, &hmd_rot);
    let dom_series = device_series(&t, &dom_pos, &dom_rot);
    let off_series = device_series(&t, &off_pos, &off_rot);
    let dom: Vec<ControllerSample> = dom_series
        .into_iter()
        .zip(dom_ctl)
        .map(|(base, (trigger_pressure, grip_pressure, thumbstick, buttons))| ControllerSample {
            base,
            thumbstick,
            trigger_pressure,
            grip_pressure,
            buttons,
        })
        .collect();
    let off: Vec<ControllerSample> = off_series
        .into_iter()
        .map(|base| ControllerSample {
            base,
            thumbstick: [0.0, 0.0],
            trigger_pressure: 0.0,
            grip_pressure: 0.0,
            buttons: ButtonState::default(),
        })
        .collect();
    let (left, right) = match plan.hand {
        Hand::Right => (off, dom),
        Hand::Left => (dom, off),
    };
    TrialTelemetry {
        participant_id: participant.to_string(),
        group,
        dominant_hand: plan.hand,
        technique: tech,
        block: plan.block,
        trial_index: plan.trial_index,
        start_pos: start,
        target_pos: quantize_vec(target),
        target_radius: 1.0,
        headset,
        left,
        right,
        trial_time: duration,
        hit: plan.hit,
        obstacles_hit,
    }
}

/// Generates participant `index` (impaired participants come first).
pub fn generate_participant(
    config: &CohortConfig,
    demands: &DemandMatrix,
    index: usize,
) -> (SyntheticParticipant, SessionLog, QuestionnaireRecord) {
    let mut rng = participant_rng(config.seed, index);
    let (group, ordinal) = if index < config.n_impaired {
        (Group::Impaired, index + 1)
    } else {
        (Group::NonImpaired, index - config.n_impaired + 1)
    };
    let id = participant_id(group, ordinal);
    let range = match group {
        Group::Impaired => 0.1..0.9,
        Group::NonImpaired => 0.8..1.0,
    };
    let drawn = AbilityProfile::from_array(std::array::from_fn(|_| rng.random_range(range.clone())));
    let profile = config.profile_override.unwrap_or(drawn);
    let hand = if rng.random::<f64>() < 0.8 { Hand::Right } else { Hand::Left };
    let expected_times: BTreeMap<TechniqueId, f64> = TechniqueId::ALL
        .into_iter()
        .map(|t| (t, ground_truth_time(&profile, t, demands)))
        .collect();

    let mut trials = Vec::new();
    for t in TechniqueId::ALL {
        let mu = expected_times[&t];
        for block in 1..=config.blocks {
            for trial_index in 1..=config.trials_per_block {
                let z: f64 = rng.sample(StandardNormal);
                let realized = quantize(mu * (config.noise_sigma * z).exp());
                let (duration, hit) = if realized >= MAX_TRIAL_TIME_S {
                    (MAX_TRIAL_TIME_S, false)
                } else {
                    (realized.max(0.1), true)
                };
                let plan = TrialPlan {
                    technique: t,
                    block,
                    trial_index,
                    duration,
                    hit,
                    profile: &profile,
                    hand,
                };
                trials.push(synthesize_trial(&plan, &id, group, config.sample_rate, &mut rng));
            }
        }
    }
    let session = SessionLog {
        participant_id: id.clone(),
        group,
        dominant_hand: hand,
        trials,
    };
    let questionnaire = questionnaire_for(&id, &profile, demands);
    let participant = SyntheticParticipant {
        participant_id: id,
        group,
        dominant_hand: hand,
        profile,
        expected_times,
    };
    (participant, session, questionnaire)
}

pub fn generate_cohort(config: &CohortConfig, demands: &DemandMatrix) -> Result<Cohort, SynthError> {
    config.validate()?;
    demands.validate()?;
    let n = config.n_impaired + config.n_non_impaired;
    let generated: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| generate_participant(config, demands, i))
        .collect();
    let mut cohort = Cohort {
        participants: Vec::with_capacity(n),
        sessions: Vec::with_capacity(n),
        questionnaires: Vec::with_capacity(n),
    };
    for (p, s, q) in generated {
        cohort.participants.push(p);
        cohort.sessions.push(s);
        cohort.questionnaires.push(q);
    }
    Ok(cohort)
}

/// Files written by [`write_cohort`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortFiles {
    pub sessions: Vec<PathBuf>,
    pub questionnaires: PathBuf,
    pub ground_truth: PathBuf,
    pub demands: PathBuf,
}

/// Writes `sessions/<id>.jsonl`, `questionnaires.jsonl`, `ground_truth.json`
/// and `demands.toml` under `dir`.
pub fn write_cohort(
    cohort: &Cohort,
    demands: &DemandMatrix,
    dir: impl AsRef<Path>,
) -> Result<CohortFiles, SynthError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    let sdir = dir.join("sessions");
    fs::create_dir_all(&sdir).map_err(io(&sdir))?;
    let mut sessions = Vec::new();
    for s in &cohort.sessions {
        let path = sdir.join(format!("{}.jsonl", s.participant_id));
        fs::write(&path, session_log_to_string(s)?).map_err(io(&path))?;
        sessions.push(path);
    }
    let questionnaires = dir.join("questionnaires.jsonl");
    fs::write(&questionnaires, questionnaires_to_string(&cohort.questionnaires)).map_err(io(&questionnaires))?;
    let ground_truth = dir.join("ground_truth.json");
    let gt = serde_json::to_string_pretty(&cohort.participants).expect("ground truth serializes");
    fs::write(&ground_truth, gt + "\n").map_err(io(&ground_truth))?;
    let demand_path = dir.join("demands.toml");
    fs::write(&demand_path, demands.to_toml_string()).map_err(io(&demand_path))?;
    Ok(CohortFiles {
        sessions,
        questionnaires,
        ground_truth,
        demands: demand_path,
    })
}
