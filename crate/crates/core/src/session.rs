//! Telemetry data model and session-log ingestion.
//!
//! A session log is a UTF-8 file with one JSON object per line, each line one
//! trial. Every sample record carries the headset state and, when present, the
//! state of the left and right controllers at the same timestamp.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest allowed trial; trials that time out are logged at exactly this value.
pub const MAX_TRIAL_TIME_S: f64 = 30.0;

/// Controller samples may lag the headset time base by at most this much.
const TIME_BASE_SLACK_S: f64 = 0.010;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Ground-plane projection `(x, z)`; height is dropped.
    pub fn horizontal(&self) -> [f64; 2] {
        [self.x, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// The six locomotion techniques. Variant order is alphabetical, so the
/// derived `Ord` doubles as the name-ascending tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TechniqueId {
    AstralBody,
    ChickenAcceleration,
    GrabAndPull,
    SlidingLooking,
    Teleport,
    ThrowTeleport,
}

impl TechniqueId {
    pub const ALL: [TechniqueId; 6] = [
        TechniqueId::AstralBody,
        TechniqueId::ChickenAcceleration,
        TechniqueId::GrabAndPull,
        TechniqueId::SlidingLooking,
        TechniqueId::Teleport,
        TechniqueId::ThrowTeleport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TechniqueId::AstralBody => "AstralBody",
            TechniqueId::ChickenAcceleration => "ChickenAcceleration",
            TechniqueId::GrabAndPull => "GrabAndPull",
            TechniqueId::SlidingLooking => "SlidingLooking",
            TechniqueId::Teleport => "Teleport",
            TechniqueId::ThrowTeleport => "ThrowTeleport",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error)]
#[error("unknown locomotion technique `{0}`")]
pub struct UnknownTechnique(pub String);

impl FromStr for TechniqueId {
    type Err = UnknownTechnique;

    /// Accepts the canonical names plus case/spacing variants such as
    /// `"chicken acceleration"` or `"grab_and_pull"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        TechniqueId::ALL
            .into_iter()
            .find(|t| t.name().to_lowercase() == folded)
            .ok_or_else(|| UnknownTechnique(s.to_string()))
    }
}

impl Serialize for TechniqueId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TechniqueId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Impaired,
    NonImpaired,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Impaired => "impaired",
            Group::NonImpaired => "non_impaired",
        }
    }

    /// 1 for the impaired group, 0 otherwise.
    pub fn indicator(self) -> f64 {
        match self {
            Group::Impaired => 1.0,
            Group::NonImpaired => 0.0,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSample {
    /// Seconds since trial start.
    pub t: f64,
    pub position: Vec3,
    /// Euler angles in degrees, each in `[0, 360)`.
    pub rotation_euler: Vec3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    pub acceleration: Vec3,
    pub angular_acceleration: Vec3,
}

impl DeviceSample {
    pub fn at_rest(t: f64, position: Vec3) -> Self {
        DeviceSample {
            t,
            position,
            rotation_euler: Vec3::ZERO,
            velocity: Vec3::ZERO,
            angular_velocity: Vec3::ZERO,
            acceleration: Vec3::ZERO,
            angular_acceleration: Vec3::ZERO,
        }
    }

    fn vectors(&self) -> [(&'static str, &Vec3); 6] {
        [
            ("pos", &self.position),
            ("rot", &self.rotation_euler),
            ("vel", &self.velocity),
            ("angvel", &self.angular_velocity),
            ("acc", &self.acceleration),
            ("angacc", &self.angular_acceleration),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ButtonState {
    pub trigger: bool,
    pub grip: bool,
    pub primary: bool,
    pub secondary: bool,
    pub primary_touch: bool,
    pub secondary_touch: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSample {
    pub base: DeviceSample,
    /// Stick deflection `(x, y)`, each in `[-1, 1]`.
    pub thumbstick: [f64; 2],
    pub trigger_pressure: f64,
    pub grip_pressure: f64,
    pub buttons: ButtonState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub technique: TechniqueId,
    pub block: u8,
    pub trial_index: u8,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/b{}/t{}", self.technique, self.block, self.trial_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialTelemetry {
    pub participant_id: String,
    pub group: Group,
    pub dominant_hand: Hand,
    pub technique: TechniqueId,
    pub block: u8,
    pub trial_index: u8,
    pub start_pos: Vec3,
    pub target_pos: Vec3,
    pub target_radius: f64,
    pub headset: Vec<DeviceSample>,
    pub left: Vec<ControllerSample>,
    pub right: Vec<ControllerSample>,
    pub trial_time: f64,
    pub hit: bool,
    pub obstacles_hit: u32,
}

/// A broken invariant: which field, and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub detail: String,
}

impl Violation {
    fn new(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

impl TrialTelemetry {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            technique: self.technique,
            block: self.block,
            trial_index: self.trial_index,
        }
    }

    pub fn dominant_controller(&self) -> &[ControllerSample] {
        match self.dominant_hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn non_dominant_controller(&self) -> &[ControllerSample] {
        match self.dominant_hand {
            Hand::Left => &self.right,
            Hand::Right => &self.left,
        }
    }

    /// Checks every type invariant, reporting the first failure.
    pub fn validate(&self) -> Result<(), Violation> {
        if !(1..=2).contains(&self.block) {
            return Err(Violation::new("block", format!("{} not in 1..=2", self.block)));
        }
        if !(1..=6).contains(&self.trial_index) {
            return Err(Violation::new(
                "trial_index",
                format!("{} not in 1..=6", self.trial_index),
            ));
        }
        if !(self.trial_time.is_finite() && self.trial_time > 0.0 && self.trial_time <= MAX_TRIAL_TIME_S)
        {
            return Err(Violation::new(
                "trial_time",
                format!("{} not in (0, {MAX_TRIAL_TIME_S}]", self.trial_time),
            ));
        }
        if !self.hit && self.trial_time != MAX_TRIAL_TIME_S {
            return Err(Violation::new(
                "trial_time",
                format!("missed trial must time out at {MAX_TRIAL_TIME_S} s, got {}", self.trial_time),
            ));
        }
        if !(self.target_radius.is_finite() && self.target_radius > 0.0) {
            return Err(Violation::new("target_radius", "must be finite and > 0"));
        }
        if !self.start_pos.is_finite() {
            return Err(Violation::new("start", "non-finite component"));
        }
        if !self.target_pos.is_finite() {
            return Err(Violation::new("target", "non-finite component"));
        }
        if self.headset.is_empty() {
            return Err(Violation::new("samples", "headset sequence is empty"));
        }
        check_device_series("hmd", self.headset.iter())?;
        check_device_series("lctl", self.left.iter().map(|c| &c.base))?;
        check_device_series("rctl", self.right.iter().map(|c| &c.base))?;
        let first = self.headset[0].t;
        let last = self.headset[self.headset.len() - 1].t;
        for (name, series) in [("lctl", &self.left), ("rctl", &self.right)] {
            for c in series {
                check_controller(name, c)?;
                if c.base.t < first - TIME_BASE_SLACK_S || c.base.t > last + TIME_BASE_SLACK_S {
                    return Err(Violation::new(
                        format!("{name}.t"),
                        format!("{} outside headset time base [{first}, {last}]", c.base.t),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_device_series<'a>(
    name: &str,
    series: impl Iterator<Item = &'a DeviceSample>,
) -> Result<(), Violation> {
    let mut prev: Option<f64> = None;
    for s in series {
        if !(s.t.is_finite() && s.t >= 0.0) {
            return Err(Violation::new(format!("{name}.t"), format!("{} must be finite and >= 0", s.t)));
        }
        if let Some(p) = prev {
            if s.t <= p {
                return Err(Violation::new(
                    format!("{name}.t"),
                    format!("timestamps not strictly increasing ({p} then {})", s.t),
                ));
            }
        }
        prev = Some(s.t);
        for (field, v) in s.vectors() {
            if !v.is_finite() {
                return Err(Violation::new(format!("{name}.{field}"), "non-finite component"));
            }
        }
        let r = s.rotation_euler;
        if [r.x, r.y, r.z].iter().any(|a| !(0.0..360.0).contains(a)) {
            return Err(Violation::new(
                format!("{name}.rot"),
                format!("Euler angles must lie in [0, 360), got {:?}", r.to_array()),
            ));
        }
    }
    Ok(())
}

fn check_controller(name: &str, c: &ControllerSample) -> Result<(), Violation> {
    for (field, p) in [("trigger", c.trigger_pressure), ("grip", c.grip_pressure)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Violation::new(format!("{name}.{field}"), format!("pressure {p} not in [0, 1]")));
        }
    }
    if c.thumbstick.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Violation::new(
            format!("{name}.thumb"),
            format!("thumbstick {:?} outside [-1, 1]", c.thumbstick),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub participant_id: String,
    pub group: Group,
    pub dominant_hand: Hand,
    pub trials: Vec<TrialTelemetry>,
}

impl SessionLog {
    pub fn trials_for(&self, technique: TechniqueId) -> impl Iterator<Item = &TrialTelemetry> {
        self.trials.iter().filter(move |t| t.technique == technique)
    }

    pub fn techniques(&self) -> BTreeSet<TechniqueId> {
        self.trials.iter().map(|t| t.technique).collect()
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record ({field}): {detail}")]
    MalformedRecord {
        line: usize,
        field: String,
        detail: String,
    },
    #[error("line {line}: invariant violated for `{field}`: {detail}")]
    InvariantViolation {
        line: usize,
        field: String,
        detail: String,
    },
    #[error("line {line}: duplicate trial key {key}")]
    DuplicateTrialKey { line: usize, key: TrialKey },
    #[error("session log contains no trial records")]
    Empty,
}

impl SessionError {
    pub fn line(&self) -> Option<usize> {
        match self {
            SessionError::MalformedRecord { line, .. }
            | SessionError::InvariantViolation { line, .. }
            | SessionError::DuplicateTrialKey { line, .. } => Some(*line),
            _ => None,
        }
    }

    fn invariant(line: usize, v: Violation) -> Self {
        SessionError::InvariantViolation {
            line,
            field: v.field,
            detail: v.detail,
        }
    }
}

// ---- wire format -------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireTrial {
    participant_id: String,
    group: Group,
    dominant_hand: Hand,
    technique: String,
    block: i64,
    trial_index: i64,
    start: [f64; 3],
    target: [f64; 3],
    target_radius: f64,
    trial_time_s: f64,
    hit: bool,
    obstacles_hit: i64,
    samples: Vec<WireSample>,
}

#[derive(Serialize, Deserialize)]
struct WireSample {
    t: f64,
    hmd: WireDevice,
    lctl: Option<WireController>,
    rctl: Option<WireController>,
}

#[derive(Serialize, Deserialize)]
struct WireDevice {
    pos: [f64; 3],
    rot: [f64; 3],
    vel: [f64; 3],
    angvel: [f64; 3],
    acc: [f64; 3],
    angacc: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct WireController {
    #[serde(flatten)]
    device: WireDevice,
    thumb: [f64; 2],
    trigger: f64,
    grip: f64,
    btn: WireButtons,
}

#[derive(Serialize, Deserialize)]
struct WireButtons {
    trigger: bool,
    grip: bool,
    primary: bool,
    secondary: bool,
    ptouch: bool,
    stouch: bool,
}

impl WireDevice {
    fn into_sample(self, t: f64) -> DeviceSample {
        DeviceSample {
            t,
            position: self.pos.into(),
            rotation_euler: self.rot.into(),
            velocity: self.vel.into(),
            angular_velocity: self.angvel.into(),
            acceleration: self.acc.into(),
            angular_acceleration: self.angacc.into(),
        }
    }

    fn from_sample(s: &DeviceSample) -> Self {
        WireDevice {
            pos: s.position.into(),
            rot: s.rotation_euler.into(),
            vel: s.velocity.into(),
            angvel: s.angular_velocity.into(),
            acc: s.acceleration.into(),
            angacc: s.angular_acceleration.into(),
        }
    }
}

impl WireController {
    fn into_sample(self, t: f64) -> ControllerSample {
        ControllerSample {
            base: self.device.into_sample(t),
            thumbstick: self.thumb,
            trigger_pressure: self.trigger,
            grip_pressure: self.grip,
            buttons: ButtonState {
                trigger: self.btn.trigger,
                grip: self.btn.grip,
                primary: self.btn.primary,
                secondary: self.btn.secondary,
                primary_touch: self.btn.ptouch,
                secondary_touch: self.btn.stouch,
            },
        }
    }

    fn from_sample(c: &ControllerSample) -> Self {
        WireController {
            device: WireDevice::from_sample(&c.base),
            thumb: c.thumbstick,
            trigger: c.trigger_pressure,
            grip: c.grip_pressure,
            btn: WireButtons {
                trigger: c.buttons.trigger,
                grip: c.buttons.grip,
                primary: c.buttons.primary,
                secondary: c.buttons.secondary,
                ptouch: c.buttons.primary_touch,
                stouch: c.buttons.secondary_touch,
            },
        }
    }
}

fn malformed(line: usize, field: &str, detail: impl Into<String>) -> SessionError {
    SessionError::MalformedRecord {
        line,
        field: field.to_string(),
        detail: detail.into(),
    }
}

/// Pulls the offending field name out of a serde_json message when it names one.
fn serde_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    for marker in ["missing field `", "unknown field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "record".to_string()
}

fn decode_line(line_no: usize, text: &str) -> Result<TrialTelemetry, SessionError> {
    let wire: WireTrial = serde_json::from_str(text)
        .map_err(|e| malformed(line_no, &serde_field(&e), e.to_string()))?;
    let technique: TechniqueId = wire
        .technique
        .parse()
        .map_err(|e: UnknownTechnique| malformed(line_no, "technique", e.to_string()))?;
    let small = |field: &str, v: i64| -> Result<u8, SessionError> {
        u8::try_from(v).map_err(|_| {
            SessionError::invariant(line_no, Violation::new(field, format!("{v} out of range")))
        })
    };
    let block = small("block", wire.block)?;
    let trial_index = small("trial_index", wire.trial_index)?;
    let obstacles_hit = u32::try_from(wire.obstacles_hit).map_err(|_| {
        SessionError::invariant(
            line_no,
            Violation::new("obstacles_hit", format!("{} must be >= 0", wire.obstacles_hit)),
        )
    })?;

    let mut headset = Vec::with_capacity(wire.samples.len());
    let mut left = Vec::new();
    let mut right = Vec::new();
    for s in wire.samples {
        if let Some(l) = s.lctl {
            left.push(l.into_sample(s.t));
        }
        if let Some(r) = s.rctl {
            right.push(r.into_sample(s.t));
        }
        headset.push(s.hmd.into_sample(s.t));
    }

    let trial = TrialTelemetry {
        participant_id: wire.participant_id,
        group: wire.group,
        dominant_hand: wire.dominant_hand,
        technique,
        block,
        trial_index,
        start_pos: wire.start.into(),
        target_pos: wire.target.into(),
        target_radius: wire.target_radius,
        headset,
        left,
        right,
        trial_time: wire.trial_time_s,
        hit: wire.hit,
        obstacles_hit,
    };
    trial
        .validate()
        .map_err(|v| SessionError::invariant(line_no, v))?;
    Ok(trial)
}

/// Outcome of a full validation pass: every line either contributes a trial or
/// an entry in `violations`.
#[derive(Debug)]
pub struct ValidationReport {
    pub log: Option<SessionLog>,
    pub violations: Vec<SessionError>,
    pub record_lines: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.log.is_some()
    }

    pub fn trial_count(&self) -> usize {
        self.log.as_ref().map_or(0, |l| l.trials.len())
    }
}

/// Validates every line of a session log, collecting all violations instead of
/// stopping at the first one.
pub fn validate_session_reader<R: Read>(reader: R) -> Result<ValidationReport, std::io::Error> {
    let mut trials: Vec<TrialTelemetry> = Vec::new();
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let mut record_lines = 0;
    let mut header: Option<(String, Group, Hand)> = None;

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        record_lines += 1;
        let trial = match decode_line(line_no, &line) {
            Ok(t) => t,
            Err(e) => {
                violations.push(e);
                continue;
            }
        };
        match &header {
            None => {
                header = Some((trial.participant_id.clone(), trial.group, trial.dominant_hand));
            }
            Some((pid, group, hand)) => {
                let mismatch = if &trial.participant_id != pid {
                    Some("participant_id")
                } else if trial.group != *group {
                    Some("group")
                } else if trial.dominant_hand != *hand {
                    Some("dominant_hand")
                } else {
                    None
                };
                if let Some(field) = mismatch {
                    violations.push(SessionError::invariant(
                        line_no,
                        Violation::new(field, "differs from the first record of the session"),
                    ));
                    continue;
                }
            }
        }
        if !seen.insert(trial.key()) {
            violations.push(SessionError::DuplicateTrialKey {
                line: line_no,
                key: trial.key(),
            });
            continue;
        }
        trials.push(trial);
    }

    let log = header.map(|(participant_id, group, dominant_hand)| SessionLog {
        participant_id,
        group,
        dominant_hand,
        trials,
    });
    if record_lines == 0 {
        violations.push(SessionError::Empty);
    }
    Ok(ValidationReport {
        log,
        violations,
        record_lines,
    })
}

pub fn validate_session_log(path: impl AsRef<Path>) -> Result<ValidationReport, SessionError> {
    let path = path.as_ref();
    let io_err = |source| SessionError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    validate_session_reader(file).map_err(io_err)
}

/// Parses a session log, failing on the first violation.
pub fn parse_session_log(path: impl AsRef<Path>) -> Result<SessionLog, SessionError> {
    into_log(validate_session_log(path)?)
}

pub fn parse_session_str(text: &str) -> Result<SessionLog, SessionError> {
    let report = validate_session_reader(text.as_bytes()).map_err(|source| SessionError::Io {
        path: "<memory>".into(),
        source,
    })?;
    into_log(report)
}

fn into_log(mut report: ValidationReport) -> Result<SessionLog, SessionError> {
    if !report.violations.is_empty() {
        return Err(report.violations.swap_remove(0));
    }
    report.log.ok_or(SessionError::Empty)
}

fn encode_trial(ordinal: usize, trial: &TrialTelemetry) -> Result<WireTrial, SessionError> {
    let mut left = trial.left.iter().peekable();
    let mut right = trial.right.iter().peekable();
    let mut samples = Vec::with_capacity(trial.headset.len());
    for h in &trial.headset {
        let take = |it: &mut std::iter::Peekable<std::slice::Iter<'_, ControllerSample>>| {
            if it.peek().is_some_and(|c| c.base.t == h.t) {
                it.next().map(WireController::from_sample)
            } else {
                None
            }
        };
        let lctl = take(&mut left);
        let rctl = take(&mut right);
        samples.push(WireSample {
            t: h.t,
            hmd: WireDevice::from_sample(h),
            lctl,
            rctl,
        });
    }
    if left.next().is_some() || right.next().is_some() {
        return Err(SessionError::invariant(
            ordinal,
            Violation::new("samples", "controller timestamp not on the headset time base"),
        ));
    }
    Ok(WireTrial {
        participant_id: trial.participant_id.clone(),
        group: trial.group,
        dominant_hand: trial.dominant_hand,
        technique: trial.technique.name().to_string(),
        block: trial.block.into(),
        trial_index: trial.trial_index.into(),
        start: trial.start_pos.into(),
        target: trial.target_pos.into(),
        target_radius: trial.target_radius,
        trial_time_s: trial.trial_time,
        hit: trial.hit,
        obstacles_hit: trial.obstacles_hit.into(),
        samples,
    })
}

/// Writes a session log in the line-delimited wire format. Controller samples
/// must share timestamps with headset samples.
pub fn write_session_log<W: Write>(log: &SessionLog, mut out: W) -> Result<(), SessionError> {
    let io_err = |source| SessionError::Io {
        path: "<writer>".into(),
        source,
    };
    for (i, trial) in log.trials.iter().enumerate() {
        let wire = encode_trial(i + 1, trial)?;
        serde_json::to_writer(&mut out, &wire).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn session_log_to_string(log: &SessionLog) -> Result<String, SessionError> {
    let mut buf = Vec::new();
    write_session_log(log, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PressCounts {
    pub trigger: u32,
    pub grip: u32,
    pub primary: u32,
    pub secondary: u32,
    pub primary_touch: u32,
    pub secondary_touch: u32,
}

/// Counts false→true transitions per button. A button already down on the
/// first sample counts as one press.
pub fn press_counts(samples: &[ControllerSample]) -> PressCounts {
    let mut counts = PressCounts::default();
    let mut prev = ButtonState::default();
    for s in samples {
        let b = s.buttons;
        let rise = |now: bool, before: bool| u32::from(now && !before);
        counts.trigger += rise(b.trigger, prev.trigger);
        counts.grip += rise(b.grip, prev.grip);
        counts.primary += rise(b.primary, prev.primary);
        counts.secondary += rise(b.secondary, prev.secondary);
        counts.primary_touch += rise(b.primary_touch, prev.primary_touch);
        counts.secondary_touch += rise(b.secondary_touch, prev.secondary_touch);
        prev = b;
    }
    counts
}
