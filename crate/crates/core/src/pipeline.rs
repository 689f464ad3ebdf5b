//! Per-fold model fitting: standardize, drop constant columns, RFE, cap, fit.
//!
//! Everything here is fitted on training rows only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureBlock, Standardizer};
use crate::learners::{LearnerError, LearnerSpec, TrainedModel};
use crate::selection::{cap_top_k, rfe, FeatureRanking, RfeConfig, SelectionError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub enabled: bool,
    pub top_k: usize,
    pub rfe: RfeConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            enabled: true,
            top_k: 20,
            rfe: RfeConfig::default(),
        }
    }
}

/// The feature subset chosen on one training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub standardizer: Standardizer,
    /// Columns without variance on the training rows.
    pub dropped: Vec<String>,
    pub ranking: Option<FeatureRanking>,
    /// Dataset column indices fed to the learner, ascending.
    pub columns: Vec<usize>,
    pub names: Vec<String>,
}

fn column_subset(ds: &Dataset, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| ds.instances[rows[i]].features[cols[j]])
}

pub fn select_features(ds: &Dataset, rows: &[usize], cfg: &SelectionConfig) -> Result<FoldSelection, SelectionError> {
    let x = ds.matrix_rows(rows);
    let standardizer = Standardizer::fit(&x, &ds.indicator);
    let flagged = &standardizer.zero_variance;
    let dropped = (0..ds.n_features())
        .filter(|&j| flagged[j])
        .map(|j| ds.feature_names[j].clone())
        .collect();
    let kept: Vec<usize> = (0..ds.n_features()).filter(|&j| !flagged[j]).collect();
    if kept.is_empty() {
        return Err(SelectionError::NoFeatures);
    }

    let (ranking, mut columns) = if cfg.enabled {
        // Re-express the blocks over the compact, kept-column matrix.
        let mut remap = vec![usize::MAX; ds.n_features()];
        for (k, &j) in kept.iter().enumerate() {
            remap[j] = k;
        }
        let units: Vec<FeatureBlock> = ds
            .blocks
            .iter()
            .filter_map(|b| {
                let columns: Vec<usize> = b.columns.iter().filter(|&&c| !flagged[c]).map(|&c| remap[c]).collect();
                (!columns.is_empty()).then(|| FeatureBlock {
                    name: b.name.clone(),
                    columns,
                })
            })
            .collect();
        let z = standardizer.transform(&x);
        let zc = DMatrix::from_fn(rows.len(), kept.len(), |i, k| z[(i, kept[k])]);
        let names: Vec<String> = kept.iter().map(|&j| ds.feature_names[j].clone()).collect();
        let y: Vec<f64> = rows.iter().map(|&i| ds.instances[i].target).collect();
        let groups: Vec<&str> = rows.iter().map(|&i| ds.instances[i].participant_id.as_str()).collect();
        let ranking = rfe(&zc, &y, &groups, &names, Some(&units), &cfg.rfe)?;
        let columns: Vec<usize> = cap_top_k(&ranking, cfg.top_k)
            .iter()
            .flat_map(|u| u.columns.iter().map(|n| ds.column(n).expect("ranked column exists")))
            .collect();
        (Some(ranking), columns)
    } else {
        (None, kept)
    };
    columns.sort_unstable();
    let names = columns.iter().map(|&j| ds.feature_names[j].clone()).collect();
    Ok(FoldSelection {
        standardizer,
        dropped,
        ranking,
        columns,
        names,
    })
}

impl FoldSelection {
    pub fn design(&self, ds: &Dataset, rows: &[usize]) -> DMatrix<f64> {
        column_subset(ds, rows, &self.columns)
    }

    pub fn fit(&self, ds: &Dataset, rows: &[usize], learner: &LearnerSpec) -> Result<TrainedModel, LearnerError> {
        let x = self.design(ds, rows);
        let y: Vec<f64> = rows.iter().map(|&i| ds.instances[i].target).collect();
        let indicator: Vec<bool> = self.columns.iter().map(|&j| ds.indicator[j]).collect();
        learner.fit(&x, &y, &self.names, &indicator)
    }
}

/// A selection plus the model trained on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub selection: FoldSelection,
    pub model: TrainedModel,
}

impl FittedPipeline {
    pub fn fit(
        ds: &Dataset,
        rows: &[usize],
        cfg: &SelectionConfig,
        learner: &LearnerSpec,
    ) -> Result<Self, crate::evaluation::EvalError> {
        let selection = select_features(ds, rows, cfg).map_err(|source| crate::evaluation::EvalError::Selection {
            fold: None,
            source,
        })?;
        let model = selection
            .fit(ds, rows, learner)
            .map_err(|source| crate::evaluation::EvalError::Learner { fold: None, source })?;
        Ok(FittedPipeline { selection, model })
    }

    pub fn predict(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>, LearnerError> {
        self.model.predict(&self.selection.design(ds, rows))
    }
}
