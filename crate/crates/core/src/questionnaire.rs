//! QuickDASH, TRIQ, and post-task questionnaire scoring and encoding.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::TechniqueId;

pub const QUICKDASH_ITEMS: usize = 11;
pub const TRIQ_ITEMS: usize = 19;
/// 11 QuickDASH items + score + 19 TRIQ items.
pub const QUESTIONNAIRE_FEATURES: usize = QUICKDASH_ITEMS + 1 + TRIQ_ITEMS;

/// QuickDASH item feature names, in questionnaire order.
pub const QUICKDASH_NAMES: [&str; QUICKDASH_ITEMS] = [
    "OpenJarQD",
    "HeavyChoresQD",
    "CarryBagQD",
    "WashBackQD",
    "UseKnifeQD",
    "RecreationalActivitiesQD",
    "SocialActivitiesQD",
    "WorkLimitationQD",
    "PainQD",
    "TinglingQD",
    "SleepingQD",
];

pub const QUICKDASH_SCORE_NAME: &str = "scoreQD";

/// TRIQ checklist feature names, in checklist order.
pub const TRIQ_NAMES: [&str; TRIQ_ITEMS] = [
    "SlowMovementsTRIQ",
    "LowStrengthTRIQ",
    "TremorTRIQ",
    "PoorCoordinationTRIQ",
    "RapidFatigueTRIQ",
    "DifficultyGrippingTRIQ",
    "DifficultyHoldingTRIQ",
    "LackOfSensationTRIQ",
    "DirectionControlTRIQ",
    "DistanceControlTRIQ",
    "LimitedRangeOfMotionTRIQ",
    "PainTRIQ",
    "PoorFingerPrecisionTRIQ",
    "PoorFingerIsolationTRIQ",
    "LimitedWristTRIQ",
    "MovingQuicklyTRIQ",
    "MovementTimingTRIQ",
    "SeatedBalanceTRIQ",
    "LowerBodyMobilityTRIQ",
];

/// Post-task feature suffixes: presence, discomfort, then the five workload items.
pub const POST_TASK_NAMES: [&str; 7] = [
    "presence",
    "discomfort",
    "tlx_mental_demand",
    "tlx_physical_demand",
    "tlx_effort",
    "tlx_performance",
    "tlx_frustration",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuestionnaireError {
    #[error("QuickDASH has {missing} missing items; at most 1 allowed")]
    TooManyMissing { missing: usize },
    #[error("QuickDASH item {item} response {value} outside 1..=5")]
    InvalidResponse { item: usize, value: u8 },
    #[error("post-task `{field}` = {value} outside {lo}..={hi}")]
    OutOfScale { field: &'static str, value: i32, lo: i32, hi: i32 },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("cannot read {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuickDash {
    pub items: [Option<u8>; QUICKDASH_ITEMS],
}

impl QuickDash {
    pub fn complete(items: [u8; QUICKDASH_ITEMS]) -> Self {
        QuickDash {
            items: items.map(Some),
        }
    }

    pub fn missing(&self) -> usize {
        self.items.iter().filter(|i| i.is_none()).count()
    }

    pub fn validate(&self) -> Result<(), QuestionnaireError> {
        for (item, v) in self.items.iter().enumerate() {
            if let Some(value) = *v {
                if !(1..=5).contains(&value) {
                    return Err(QuestionnaireError::InvalidResponse { item: item + 1, value });
                }
            }
        }
        Ok(())
    }
}

/// Disability/symptom score: `(mean of the n completed responses − 1) × 25`,
/// in `[0, 100]`, lower meaning more function. Not computable with more than
/// one missing item.
pub fn quickdash_score(q: &QuickDash) -> Result<f64, QuestionnaireError> {
    q.validate()?;
    let missing = q.missing();
    if missing > 1 {
        return Err(QuestionnaireError::TooManyMissing { missing });
    }
    let answered: Vec<f64> = q.items.iter().flatten().map(|&v| f64::from(v)).collect();
    let n = answered.len() as f64;
    Ok((answered.iter().sum::<f64>() / n - 1.0) * 25.0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Triq {
    pub items: [bool; TRIQ_ITEMS],
}

impl Triq {
    pub fn count(&self) -> usize {
        self.items.iter().filter(|&&b| b).count()
    }
}

/// Bounds of each post-task instrument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostTaskScale {
    pub presence: (i32, i32),
    pub discomfort: (i32, i32),
    pub tlx: (i32, i32),
}

impl Default for PostTaskScale {
    fn default() -> Self {
        PostTaskScale {
            presence: (1, 7),
            discomfort: (0, 3),
            tlx: (0, 20),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostTask {
    pub presence: i32,
    pub discomfort: i32,
    /// Mental demand, physical demand, effort, performance, frustration.
    pub tlx: [i32; 5],
}

impl PostTask {
    pub fn validate(&self, scale: &PostTaskScale) -> Result<(), QuestionnaireError> {
        let check = |field, value: i32, (lo, hi): (i32, i32)| {
            if (lo..=hi).contains(&value) {
                Ok(())
            } else {
                Err(QuestionnaireError::OutOfScale { field, value, lo, hi })
            }
        };
        check("presence", self.presence, scale.presence)?;
        check("discomfort", self.discomfort, scale.discomfort)?;
        for v in self.tlx {
            check("tlx", v, scale.tlx)?;
        }
        Ok(())
    }

    pub fn values(&self) -> [f64; 7] {
        let t = self.tlx.map(f64::from);
        [
            f64::from(self.presence),
            f64::from(self.discomfort),
            t[0],
            t[1],
            t[2],
            t[3],
            t[4],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub participant_id: String,
    pub quickdash: QuickDash,
    pub triq: Triq,
    #[serde(default)]
    pub post_task: BTreeMap<TechniqueId, PostTask>,
}

/// Questionnaire features in fixed order: 11 QuickDASH items, the score, 19
/// TRIQ indicators. A single missing QuickDASH item is filled with the mean of
/// the answered items, which leaves the score unchanged.
pub fn questionnaire_features(q: &QuickDash, t: &Triq) -> Result<Vec<(String, f64)>, QuestionnaireError> {
    let score = quickdash_score(q)?;
    let answered: Vec<f64> = q.items.iter().flatten().map(|&v| f64::from(v)).collect();
    let fill = answered.iter().sum::<f64>() / answered.len() as f64;
    let mut out = Vec::with_capacity(QUESTIONNAIRE_FEATURES);
    for (name, item) in QUICKDASH_NAMES.iter().zip(&q.items) {
        out.push((name.to_string(), item.map_or(fill, f64::from)));
    }
    out.push((QUICKDASH_SCORE_NAME.to_string(), score));
    for (name, &b) in TRIQ_NAMES.iter().zip(&t.items) {
        out.push((name.to_string(), if b { 1.0 } else { 0.0 }));
    }
    Ok(out)
}

pub fn questionnaire_feature_names() -> Vec<String> {
    QUICKDASH_NAMES
        .iter()
        .copied()
        .chain([QUICKDASH_SCORE_NAME])
        .chain(TRIQ_NAMES.iter().copied())
        .map(String::from)
        .collect()
}

/// Reads questionnaire records, one JSON object per line.
pub fn read_questionnaires<R: Read>(reader: R) -> Result<Vec<QuestionnaireRecord>, QuestionnaireError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| QuestionnaireError::Malformed {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionnaireRecord =
            serde_json::from_str(&line).map_err(|e| QuestionnaireError::Malformed {
                line: i + 1,
                detail: e.to_string(),
            })?;
        rec.quickdash.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_questionnaire_file(path: impl AsRef<Path>) -> Result<Vec<QuestionnaireRecord>, QuestionnaireError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| QuestionnaireError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    read_questionnaires(file)
}

pub fn questionnaires_to_string(records: &[QuestionnaireRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("questionnaire records serialize"));
        s.push('\n');
    }
    s
}
