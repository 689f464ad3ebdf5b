//! Regression learners and their serialized form.

pub mod forest;
pub mod grid;
pub mod linear;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{fit_random_forest, ForestModel, ForestParams, Mtry};
pub use grid::{complexity_key, log_space, EnetGrid, ForestGrid, GridSpec};
pub use linear::{fit_elastic_net, EnetFit, EnetParams, LinearModel};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("feature matrix or target contains a non-finite value")]
    NonFiniteInput,
    #[error("need at least 2 training rows, got {0}")]
    TooFewSamples(usize),
    #[error("{rows} feature rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("model expects {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("feature names differ from the training schema")]
    FeatureNamesMismatch,
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    ElasticNet,
    RandomForest,
}

impl std::str::FromStr for LearnerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "enet" | "elastic_net" | "elasticnet" => Ok(LearnerKind::ElasticNet),
            "rf" | "forest" | "random_forest" => Ok(LearnerKind::RandomForest),
            other => Err(format!("unknown learner {other:?}")),
        }
    }
}

/// A learner with concrete hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    ElasticNet(EnetParams),
    RandomForest(ForestParams),
}

impl LearnerSpec {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::ElasticNet(_) => LearnerKind::ElasticNet,
            LearnerSpec::RandomForest(_) => LearnerKind::RandomForest,
        }
    }

    pub fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        feature_names: &[String],
        indicator: &[bool],
    ) -> Result<TrainedModel, LearnerError> {
        Ok(match self {
            LearnerSpec::ElasticNet(p) => {
                TrainedModel::ElasticNet(LinearModel::train(x, y, feature_names, indicator, p)?)
            }
            LearnerSpec::RandomForest(p) => TrainedModel::RandomForest(fit_random_forest(x, y, feature_names, p)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    ElasticNet(LinearModel),
    RandomForest(ForestModel),
}

impl TrainedModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::ElasticNet(m) => &m.feature_names,
            TrainedModel::RandomForest(m) => &m.feature_names,
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, LearnerError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFiniteInput);
        }
        match self {
            TrainedModel::ElasticNet(m) => m.predict(x),
            TrainedModel::RandomForest(m) => m.predict(x),
        }
    }

    /// Predicts after checking that `names` matches the training schema.
    pub fn predict_named(&self, x: &DMatrix<f64>, names: &[String]) -> Result<Vec<f64>, LearnerError> {
        if names.len() != self.feature_names().len() {
            return Err(LearnerError::SchemaMismatch {
                expected: self.feature_names().len(),
                got: names.len(),
            });
        }
        if names != self.feature_names() {
            return Err(LearnerError::FeatureNamesMismatch);
        }
        self.predict(x)
    }
}

/// A trained model plus the digest of the dataset manifest it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    #[serde(flatten)]
    pub model: TrainedModel,
    pub training_manifest_digest: String,
}

impl ModelArtifact {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
