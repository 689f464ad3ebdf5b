//! Feature-matrix assembly for the questionnaire (QS), calibration (CS), and
//! combined (QCS) scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{extract_trial_metrics, metric_names, MetricsConfig, MetricsError};
use crate::questionnaire::{
    questionnaire_feature_names, questionnaire_features, QuestionnaireError, QuestionnaireRecord,
    POST_TASK_NAMES,
};
use crate::session::{Group, SessionLog, TechniqueId, TrialKey, TrialTelemetry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Qs,
    Cs,
    Qcs,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Qs => "qs",
            Scenario::Cs => "cs",
            Scenario::Qcs => "qcs",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('+', "").as_str() {
            "qs" => Ok(Scenario::Qs),
            "cs" => Ok(Scenario::Cs),
            "qcs" => Ok(Scenario::Qcs),
            _ => Err(format!("unknown scenario `{s}` (expected qs, cs, or qcs)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("participant {0} has no questionnaire record")]
    MissingQuestionnaire(String),
    #[error("participant {participant} has no {technique} trials to calibrate with")]
    MissingCalibrationTrials { participant: String, technique: TechniqueId },
    #[error("participant {participant} has no post-task responses for {technique}")]
    MissingPostTask { participant: String, technique: TechniqueId },
    #[error("scenario {0} needs a calibration technique")]
    CalibrationRequired(Scenario),
    #[error("participant {0} appears in more than one session log")]
    DuplicateParticipant(String),
    #[error("participant {participant}: {source}")]
    Metrics {
        participant: String,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Questionnaire(#[from] QuestionnaireError),
    #[error("no instances left after exclusions")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    QuickdashTooManyMissing { missing: usize },
    NoTrials,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant_id: String,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub participant_id: String,
    pub technique: TechniqueId,
    pub block: Option<u8>,
    pub trial_index: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub participant_id: String,
    pub group: Group,
    pub prediction_technique: TechniqueId,
    pub calibration_technique: Option<TechniqueId>,
    /// Set for trial-grain instances (CS, QCS).
    pub trial: Option<TrialKey>,
    pub features: Vec<f64>,
    /// Trial time in seconds (mean over trials for QS).
    pub target: f64,
}

impl Instance {
    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            participant_id: self.participant_id.clone(),
            technique: self.prediction_technique,
            block: self.trial.map(|k| k.block),
            trial_index: self.trial.map(|k| k.trial_index),
        }
    }
}

/// A unit of feature selection: a single column, or a one-hot block that
/// enters and leaves the model together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub calibration: Option<TechniqueId>,
    pub feature_names: Vec<String>,
    pub blocks: Vec<FeatureBlock>,
    /// 0/1 indicator columns; standardization leaves these untouched.
    pub indicator: Vec<bool>,
    pub instances: Vec<Instance>,
    /// Observed mean calibration-technique time per participant.
    pub calibration_times: BTreeMap<String, f64>,
    pub exclusions: Vec<Exclusion>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.matrix_rows(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn matrix_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.n_features(), |i, j| self.instances[rows[i]].features[j])
    }

    pub fn targets(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.target).collect()
    }

    /// Participant id of each instance, aligned with `instances`.
    pub fn groups(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.participant_id.as_str()).collect()
    }

    pub fn participants(&self) -> Vec<String> {
        self.instances
            .iter()
            .map(|i| i.participant_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            scenario: self.scenario,
            calibration: self.calibration,
            feature_names: self.feature_names.clone(),
            instance_keys: self.instances.iter().map(Instance::key).collect(),
            exclusions: self.exclusions.clone(),
        }
    }

    /// CSV with one row per instance: every feature, then `target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push("target".into());
        w.write_record(&header)?;
        for inst in &self.instances {
            let rec: Vec<String> = inst
                .features
                .iter()
                .chain(std::iter::once(&inst.target))
                .map(f64::to_string)
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sidecar describing a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: Scenario,
    pub calibration: Option<TechniqueId>,
    pub feature_names: Vec<String>,
    pub instance_keys: Vec<InstanceKey>,
    pub exclusions: Vec<Exclusion>,
}

/// Column layout builder that tracks one-hot blocks and indicator columns.
#[derive(Default)]
struct Schema {
    names: Vec<String>,
    blocks: Vec<FeatureBlock>,
    indicator: Vec<bool>,
}

impl Schema {
    fn scalar(&mut self, name: impl Into<String>, indicator: bool) {
        let name = name.into();
        self.blocks.push(FeatureBlock {
            name: name.clone(),
            columns: vec![self.names.len()],
        });
        self.names.push(name);
        self.indicator.push(indicator);
    }

    fn one_hot(&mut self, block: &str, prefix: &str) {
        let start = self.names.len();
        for t in TechniqueId::ALL {
            self.names.push(format!("{prefix}{}", t.name()));
            self.indicator.push(true);
        }
        self.blocks.push(FeatureBlock {
            name: block.to_string(),
            columns: (start..self.names.len()).collect(),
        });
    }
}

fn one_hot(t: TechniqueId) -> [f64; 6] {
    let mut v = [0.0; 6];
    v[t.index()] = 1.0;
    v
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn sorted_sessions(sessions: &[SessionLog]) -> Result<Vec<&SessionLog>, DatasetError> {
    let mut sorted: Vec<&SessionLog> = sessions.iter().collect();
    sorted.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    for w in sorted.windows(2) {
        if w[0].participant_id == w[1].participant_id {
            return Err(DatasetError::DuplicateParticipant(w[0].participant_id.clone()));
        }
    }
    Ok(sorted)
}

/// A technique's trials in key order, so aggregates do not depend on the
/// order trials appear in the log.
fn trials_in_order(session: &SessionLog, technique: TechniqueId) -> Vec<&TrialTelemetry> {
    let mut trials: Vec<&TrialTelemetry> = session.trials_for(technique).collect();
    trials.sort_by_key(|t| t.key());
    trials
}

fn questionnaire_index(records: &[QuestionnaireRecord]) -> BTreeMap<&str, &QuestionnaireRecord> {
    records.iter().map(|r| (r.participant_id.as_str(), r)).collect()
}

/// Questionnaire features, or the exclusion that applies to this participant.
fn questionnaire_block(
    session: &SessionLog,
    qmap: &BTreeMap<&str, &QuestionnaireRecord>,
) -> Result<Result<Vec<f64>, Exclusion>, DatasetError> {
    let rec = qmap
        .get(session.participant_id.as_str())
        .ok_or_else(|| DatasetError::MissingQuestionnaire(session.participant_id.clone()))?;
    match questionnaire_features(&rec.quickdash, &rec.triq) {
        Ok(f) => Ok(Ok(f.into_iter().map(|(_, v)| v).collect())),
        Err(QuestionnaireError::TooManyMissing { missing }) => Ok(Err(Exclusion {
            participant_id: session.participant_id.clone(),
            reason: ExclusionReason::QuickdashTooManyMissing { missing },
        })),
        Err(e) => Err(e.into()),
    }
}

/// Technique-grain dataset from questionnaires: one instance per participant
/// and technique, targeting that participant's mean trial time.
pub fn build_qs(sessions: &[SessionLog], questionnaires: &[QuestionnaireRecord]) -> Result<Dataset, DatasetError> {
    let qmap = questionnaire_index(questionnaires);
    let mut schema = Schema::default();
    for name in questionnaire_feature_names() {
        // TRIQ answers are 0/1 but QuickDASH items and the score are ordinal.
        let indicator = name.ends_with("TRIQ");
        schema.scalar(name, indicator);
    }
    schema.one_hot("prediction_technique", "pred_");
    schema.scalar("group_impaired", true);

    let mut instances = Vec::new();
    let mut exclusions = Vec::new();
    for session in sorted_sessions(sessions)? {
        let qf = match questionnaire_block(session, &qmap)? {
            Ok(f) => f,
            Err(ex) => {
                log::info!("excluding {}: {:?}", ex.participant_id, ex.reason);
                exclusions.push(ex);
                continue;
            }
        };
        if session.trials.is_empty() {
            exclusions.push(Exclusion {
                participant_id: session.participant_id.clone(),
                reason: ExclusionReason::NoTrials,
            });
            continue;
        }
        for technique in session.techniques() {
            let target = mean(trials_in_order(session, technique).into_iter().map(|t| t.trial_time));
            let mut features = qf.clone();
            features.extend(one_hot(technique));
            features.push(session.group.indicator());
            instances.push(Instance {
                participant_id: session.participant_id.clone(),
                group: session.group,
                prediction_technique: technique,
                calibration_technique: None,
                trial: None,
                features,
                target,
            });
        }
    }
    if instances.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset {
        scenario: Scenario::Qs,
        calibration: None,
        feature_names: schema.names,
        blocks: schema.blocks,
        indicator: schema.indicator,
        instances,
        calibration_times: BTreeMap::new(),
        exclusions,
    })
}

/// Participant-level aggregates over the calibration technique's trials.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSummary {
    pub metric_means: Vec<f64>,
    pub mean_trial_time: f64,
    pub hit_rate: f64,
    pub mean_obstacles_hit: f64,
    pub trials: usize,
}

pub fn calibration_summary(
    session: &SessionLog,
    calibration: TechniqueId,
    cfg: &MetricsConfig,
) -> Result<CalibrationSummary, DatasetError> {
    let trials = trials_in_order(session, calibration);
    if trials.is_empty() {
        return Err(DatasetError::MissingCalibrationTrials {
            participant: session.participant_id.clone(),
            technique: calibration,
        });
    }
    let per_trial = trials
        .iter()
        .map(|t| extract_trial_metrics(t, cfg).map(|m| m.values()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| DatasetError::Metrics {
            participant: session.participant_id.clone(),
            source,
        })?;
    let width = per_trial[0].len();
    let metric_means = (0..width).map(|j| mean(per_trial.iter().map(|v| v[j]))).collect();
    Ok(CalibrationSummary {
        metric_means,
        mean_trial_time: mean(trials.iter().map(|t| t.trial_time)),
        hit_rate: mean(trials.iter().map(|t| if t.hit { 1.0 } else { 0.0 })),
        mean_obstacles_hit: mean(trials.iter().map(|t| f64::from(t.obstacles_hit))),
        trials: trials.len(),
    })
}

fn calibration_schema(schema: &mut Schema, cfg: &MetricsConfig) {
    for name in metric_names(cfg.all_device_pairs) {
        schema.scalar(format!("calib_{name}"), false);
    }
    for name in ["calib_mean_trial_time", "calib_hit_rate", "calib_mean_obstacles_hit"] {
        schema.scalar(name, false);
    }
    for name in POST_TASK_NAMES {
        schema.scalar(format!("calib_{name}"), false);
    }
    schema.one_hot("calibration_technique", "calib_technique_");
    schema.one_hot("prediction_technique", "pred_");
    schema.scalar("group_impaired", true);
}

fn build_trial_grain(
    scenario: Scenario,
    sessions: &[SessionLog],
    questionnaires: &[QuestionnaireRecord],
    calibration: TechniqueId,
    cfg: &MetricsConfig,
) -> Result<Dataset, DatasetError> {
    let with_questionnaire = scenario == Scenario::Qcs;
    let qmap = questionnaire_index(questionnaires);
    let mut schema = Schema::default();
    if with_questionnaire {
        for name in questionnaire_feature_names() {
            let indicator = name.ends_with("TRIQ");
            schema.scalar(name, indicator);
        }
    }
    calibration_schema(&mut schema, cfg);

    let sessions = sorted_sessions(sessions)?;
    // Calibration metrics are the expensive part; participants are independent.
    let prepared: Vec<Result<(Option<Vec<f64>>, Option<Exclusion>, CalibrationSummary), DatasetError>> = sessions
        .par_iter()
        .map(|session| {
            let rec = qmap
                .get(session.participant_id.as_str())
                .ok_or_else(|| DatasetError::MissingQuestionnaire(session.participant_id.clone()))?;
            let (qf, excl) = if with_questionnaire {
                match questionnaire_block(session, &qmap)? {
                    Ok(f) => (Some(f), None),
                    Err(ex) => (None, Some(ex)),
                }
            } else {
                (None, None)
            };
            if excl.is_some() {
                return Ok((None, excl, placeholder_summary()));
            }
            let summary = calibration_summary(session, calibration, cfg)?;
            if !rec.post_task.contains_key(&calibration) {
                return Err(DatasetError::MissingPostTask {
                    participant: session.participant_id.clone(),
                    technique: calibration,
                });
            }
            Ok((qf, None, summary))
        })
        .collect();

    let mut instances = Vec::new();
    let mut exclusions = Vec::new();
    let mut calibration_times = BTreeMap::new();
    for (session, prep) in sessions.iter().zip(prepared) {
        let (qf, excl, summary) = prep?;
        if let Some(ex) = excl {
            log::info!("excluding {}: {:?}", ex.participant_id, ex.reason);
            exclusions.push(ex);
            continue;
        }
        let post = qmap[session.participant_id.as_str()].post_task[&calibration];
        let mut shared: Vec<f64> = qf.unwrap_or_default();
        shared.extend(&summary.metric_means);
        shared.extend([summary.mean_trial_time, summary.hit_rate, summary.mean_obstacles_hit]);
        shared.extend(post.values());
        shared.extend(one_hot(calibration));
        calibration_times.insert(session.participant_id.clone(), summary.mean_trial_time);

        let mut trials: Vec<_> = session.trials.iter().filter(|t| t.technique != calibration).collect();
        trials.sort_by_key(|t| t.key());
        for trial in trials {
            let mut features = shared.clone();
            features.extend(one_hot(trial.technique));
            features.push(session.group.indicator());
            instances.push(Instance {
                participant_id: session.participant_id.clone(),
                group: session.group,
                prediction_technique: trial.technique,
                calibration_technique: Some(calibration),
                trial: Some(trial.key()),
                features,
                target: trial.trial_time,
            });
        }
    }
    if instances.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset {
        scenario,
        calibration: Some(calibration),
        feature_names: schema.names,
        blocks: schema.blocks,
        indicator: schema.indicator,
        instances,
        calibration_times,
        exclusions,
    })
}

fn placeholder_summary() -> CalibrationSummary {
    CalibrationSummary {
        metric_means: Vec::new(),
        mean_trial_time: 0.0,
        hit_rate: 0.0,
        mean_obstacles_hit: 0.0,
        trials: 0,
    }
}

/// Trial-grain dataset from one calibration technique: every trial of the
/// other techniques becomes an instance carrying the participant's calibration
/// aggregates.
pub fn build_cs(
    sessions: &[SessionLog],
    questionnaires: &[QuestionnaireRecord],
    calibration: TechniqueId,
    cfg: &MetricsConfig,
) -> Result<Dataset, DatasetError> {
    build_trial_grain(Scenario::Cs, sessions, questionnaires, calibration, cfg)
}

/// CS instances with the questionnaire block prepended.
pub fn build_qcs(
    sessions: &[SessionLog],
    questionnaires: &[QuestionnaireRecord],
    calibration: TechniqueId,
    cfg: &MetricsConfig,
) -> Result<Dataset, DatasetError> {
    build_trial_grain(Scenario::Qcs, sessions, questionnaires, calibration, cfg)
}

pub fn build_dataset(
    scenario: Scenario,
    sessions: &[SessionLog],
    questionnaires: &[QuestionnaireRecord],
    calibration: Option<TechniqueId>,
    cfg: &MetricsConfig,
) -> Result<Dataset, DatasetError> {
    match (scenario, calibration) {
        (Scenario::Qs, _) => build_qs(sessions, questionnaires),
        (_, Some(c)) => build_trial_grain(scenario, sessions, questionnaires, c, cfg),
        (_, None) => Err(DatasetError::CalibrationRequired(scenario)),
    }
}

/// Per-column z-scoring fitted on one set of rows and reusable on others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Columns left as-is: indicators and zero-variance columns.
    pub passthrough: Vec<bool>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    /// Population mean and standard deviation per column. Indicator columns
    /// and columns without spread are passed through; the latter are flagged.
    pub fn fit(x: &DMatrix<f64>, indicator: &[bool]) -> Self {
        let (n, p) = x.shape();
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut passthrough = vec![false; p];
        let mut zero_variance = vec![false; p];
        for j in 0..p {
            let col = x.column(j);
            let mu = col.iter().sum::<f64>() / n.max(1) as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n.max(1) as f64;
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mu.abs()) {
                zero_variance[j] = true;
                passthrough[j] = true;
            } else if indicator.get(j).copied().unwrap_or(false) {
                passthrough[j] = true;
            } else {
                means[j] = mu;
                scales[j] = sd;
            }
        }
        Standardizer {
            means,
            scales,
            passthrough,
            zero_variance,
        }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for j in 0..z.ncols() {
            if !self.passthrough[j] {
                let (m, s) = (self.means[j], self.scales[j]);
                z.column_mut(j).apply(|v| *v = (*v - m) / s);
            }
        }
        z
    }

    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z.clone();
        for j in 0..x.ncols() {
            if !self.passthrough[j] {
                let (m, s) = (self.means[j], self.scales[j]);
                x.column_mut(j).apply(|v| *v = *v * s + m);
            }
        }
        x
    }

    pub fn flagged(&self) -> Vec<usize> {
        (0..self.zero_variance.len()).filter(|&j| self.zero_variance[j]).collect()
    }
}

/// Standardizes a whole dataset with its own statistics.
pub fn standardize(dataset: &Dataset) -> (Dataset, Standardizer) {
    let x = dataset.matrix();
    let st = Standardizer::fit(&x, &dataset.indicator);
    let z = st.transform(&x);
    let mut out = dataset.clone();
    for (i, inst) in out.instances.iter_mut().enumerate() {
        for (j, v) in inst.features.iter_mut().enumerate() {
            *v = z[(i, j)];
        }
    }
    (out, st)
}
