//! Python bindings for the locorank pipeline.
//!
//! Structured results (reports, rankings, fold plans) come back as plain
//! dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use locorank_core::dataset::{build_dataset, Dataset, Scenario};
use locorank_core::evaluation::{group_kfold, rank_report, rank_techniques, r2, rmse};
use locorank_core::learners::{EnetParams, ForestParams, LearnerSpec, ModelArtifact, Mtry, TrainedModel};
use locorank_core::metrics::{extract_session_features, write_feature_csv, MetricsConfig};
use locorank_core::pipeline::{FittedPipeline, SelectionConfig};
use locorank_core::questionnaire::{quickdash_score as qd_score, read_questionnaire_file, QuickDash, QUICKDASH_ITEMS};
use locorank_core::session::{parse_session_log, validate_session_log, SessionLog, TechniqueId};
use locorank_core::synth::{generate_cohort as gen_cohort, write_cohort, CohortConfig, DemandMatrix};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn load_sessions(paths: &[PathBuf]) -> PyResult<Vec<SessionLog>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(value_error)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| parse_session_log(f).map_err(|e| value_error(format!("{}: {e}", f.display()))))
        .collect()
}

fn parse_technique(name: Option<&str>) -> PyResult<Option<TechniqueId>> {
    name.map(|n| n.parse::<TechniqueId>().map_err(value_error)).transpose()
}

/// QuickDASH disability/symptom score from 11 responses (None for missing).
#[pyfunction]
fn quickdash_score(items: Vec<Option<u8>>) -> PyResult<f64> {
    let items: [Option<u8>; QUICKDASH_ITEMS] = items
        .try_into()
        .map_err(|v: Vec<Option<u8>>| value_error(format!("expected {QUICKDASH_ITEMS} items, got {}", v.len())))?;
    let q = QuickDash { items };
    q.validate().map_err(value_error)?;
    qd_score(&q).map_err(value_error)
}

/// Every violation in a session log, as `(line, message)` pairs.
#[pyfunction]
fn validate_session(path: PathBuf) -> PyResult<Vec<(Option<usize>, String)>> {
    match validate_session_log(&path) {
        Ok(report) => Ok(report.violations.iter().map(|v| (v.line(), v.to_string())).collect()),
        Err(e) => Ok(vec![(e.line(), e.to_string())]),
    }
}

/// Per-trial metrics for the given session files or directories, as CSV text.
#[pyfunction]
#[pyo3(signature = (sessions, all_device_pairs=false))]
fn extract_features(py: Python<'_>, sessions: Vec<PathBuf>, all_device_pairs: bool) -> PyResult<String> {
    let logs = load_sessions(&sessions)?;
    let cfg = MetricsConfig {
        all_device_pairs,
        ..Default::default()
    };
    let rows = py.detach(|| extract_session_features(&logs, &cfg)).map_err(value_error)?;
    let mut buf = Vec::new();
    write_feature_csv(&rows, all_device_pairs, &mut buf).map_err(runtime_error)?;
    String::from_utf8(buf).map_err(runtime_error)
}

/// Writes a synthetic cohort under `out_dir` and returns the written paths.
#[pyfunction]
#[pyo3(signature = (out_dir, n_impaired=20, n_non_impaired=20, sigma=0.15, sample_rate=72.0, seed=42))]
fn generate_cohort(
    py: Python<'_>,
    out_dir: PathBuf,
    n_impaired: usize,
    n_non_impaired: usize,
    sigma: f64,
    sample_rate: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cfg = CohortConfig {
        n_impaired,
        n_non_impaired,
        noise_sigma: sigma,
        sample_rate,
        seed,
        ..Default::default()
    };
    let demands = DemandMatrix::default();
    let files = py
        .detach(|| gen_cohort(&cfg, &demands).and_then(|c| write_cohort(&c, &demands, &out_dir)))
        .map_err(value_error)?;
    to_py(py, &serde_json::to_value(&files).map_err(runtime_error)?)
}

/// Seeded grouped folds: a list of held-out participant lists.
#[pyfunction]
fn group_folds(participants: Vec<String>, k: usize, seed: u64) -> PyResult<Vec<Vec<String>>> {
    Ok(group_kfold(&participants, k, seed).map_err(value_error)?.folds)
}

/// A scenario dataset: one row per instance, named feature columns, and
/// trial-time targets.
#[pyclass(name = "Dataset", module = "locorank", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Builds the `qs`, `cs` or `qcs` dataset from session logs and a
    /// questionnaire file. `cs` and `qcs` need a calibration technique.
    #[staticmethod]
    #[pyo3(signature = (scenario, sessions, questionnaires, calibration=None))]
    fn build(
        py: Python<'_>,
        scenario: &str,
        sessions: Vec<PathBuf>,
        questionnaires: PathBuf,
        calibration: Option<&str>,
    ) -> PyResult<Self> {
        let scenario: Scenario = scenario.parse().map_err(value_error)?;
        let calibration = parse_technique(calibration)?;
        let logs = load_sessions(&sessions)?;
        let q = read_questionnaire_file(&questionnaires).map_err(value_error)?;
        let inner = py
            .detach(|| build_dataset(scenario, &logs, &q, calibration, &MetricsConfig::default()))
            .map_err(value_error)?;
        Ok(PyDataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(scenario={}, instances={}, features={})",
            self.inner.scenario.name(),
            self.inner.len(),
            self.inner.n_features()
        )
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario.name()
    }

    #[getter]
    fn calibration(&self) -> Option<&'static str> {
        self.inner.calibration.map(TechniqueId::name)
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn targets(&self) -> Vec<f64> {
        self.inner.targets()
    }

    /// Participant id of every row.
    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.groups().into_iter().map(String::from).collect()
    }

    #[getter]
    fn techniques(&self) -> Vec<&'static str> {
        self.inner.instances.iter().map(|i| i.prediction_technique.name()).collect()
    }

    /// Feature matrix as a list of rows.
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.instances.iter().map(|i| i.features.clone()).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(runtime_error)?;
        String::from_utf8(buf).map_err(runtime_error)
    }

    fn manifest(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &serde_json::to_value(self.inner.manifest()).map_err(runtime_error)?)
    }
}

fn learner_spec(kind: &str, alpha: f64, lam: f64, n_trees: usize, min_leaf: usize, seed: u64) -> PyResult<LearnerSpec> {
    Ok(match kind {
        "enet" | "elastic_net" => LearnerSpec::ElasticNet(EnetParams::new(alpha, lam)),
        "forest" | "random_forest" => LearnerSpec::RandomForest(ForestParams {
            n_trees,
            mtry: Mtry::Third,
            min_leaf,
            seed,
            ..Default::default()
        }),
        other => return Err(value_error(format!("unknown learner {other:?}; use 'enet' or 'forest'"))),
    })
}

fn selection(select: bool, top_k: usize, seed: u64) -> SelectionConfig {
    let mut cfg = SelectionConfig {
        enabled: select,
        top_k,
        ..Default::default()
    };
    cfg.rfe.seed = seed;
    cfg
}

/// Feature selection plus a trained learner.
#[pyclass(module = "locorank", frozen)]
struct Model {
    inner: FittedPipeline,
}

#[pymethods]
impl Model {
    /// Fits on every row of `dataset`. With `select`, recursive feature
    /// elimination runs first and keeps at most `top_k` features.
    #[staticmethod]
    #[pyo3(signature = (dataset, learner="forest", alpha=0.5, lam=0.01, n_trees=500, min_leaf=5, select=true, top_k=20, seed=42))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        dataset: &PyDataset,
        learner: &str,
        alpha: f64,
        lam: f64,
        n_trees: usize,
        min_leaf: usize,
        select: bool,
        top_k: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = learner_spec(learner, alpha, lam, n_trees, min_leaf, seed)?;
        let cfg = selection(select, top_k, seed);
        let ds = &dataset.inner;
        let rows: Vec<usize> = (0..ds.len()).collect();
        let inner = py.detach(|| FittedPipeline::fit(ds, &rows, &cfg, &spec)).map_err(value_error)?;
        Ok(Model { inner })
    }

    fn predict(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<Vec<f64>> {
        let ds = &dataset.inner;
        let rows: Vec<usize> = (0..ds.len()).collect();
        py.detach(|| self.inner.predict(ds, &rows)).map_err(value_error)
    }

    /// R² and RMSE of this model's predictions on `dataset`.
    fn score(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<(f64, f64)> {
        let pred = self.predict(py, dataset)?;
        let y = dataset.inner.targets();
        Ok((r2(&y, &pred), rmse(&y, &pred)))
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.selection.names.clone()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.model {
            TrainedModel::ElasticNet(_) => "elastic_net",
            TrainedModel::RandomForest(_) => "random_forest",
        }
    }

    /// The trained model as a JSON artifact.
    fn to_json(&self) -> PyResult<String> {
        ModelArtifact {
            model: self.inner.model.clone(),
            training_manifest_digest: String::new(),
        }
        .to_json()
        .map_err(runtime_error)
    }

    /// Round-trips the whole pipeline, selection included.
    fn dumps(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(runtime_error)
    }

    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        Ok(Model {
            inner: serde_json::from_str(text).map_err(value_error)?,
        })
    }
}

/// Grouped cross-validated technique rankings and their accuracy report.
#[pyfunction]
#[pyo3(signature = (dataset, learner="forest", folds=10, alpha=0.5, lam=0.01, n_trees=500, min_leaf=5, select=true, top_k=20, seed=42))]
#[allow(clippy::too_many_arguments)]
fn rank(
    py: Python<'_>,
    dataset: &PyDataset,
    learner: &str,
    folds: usize,
    alpha: f64,
    lam: f64,
    n_trees: usize,
    min_leaf: usize,
    select: bool,
    top_k: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = learner_spec(learner, alpha, lam, n_trees, min_leaf, seed)?;
    let cfg = selection(select, top_k, seed);
    let ds = &dataset.inner;
    let outcome = py.detach(|| rank_techniques(ds, &spec, &cfg, folds, seed)).map_err(value_error)?;
    let report = rank_report(&outcome.lists);
    let value = serde_json::json!({
        "report": report,
        "lists": outcome.lists,
        "cv": {
            "mean_r2": outcome.cv.mean_r2,
            "mean_rmse": outcome.cv.mean_rmse,
            "per_fold": outcome.cv.per_fold,
        },
        "averaged_r2": outcome.averaged_r2,
        "averaged_rmse": outcome.averaged_rmse,
        "folds": outcome.plan.folds,
    });
    to_py(py, &value)
}

/// Runs the command line with `args` (without the program name) and returns
/// its exit status.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| locorank_core::cli::run_with(std::iter::once("locorank".to_string()).chain(args)))
}

#[pymodule]
fn locorank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TECHNIQUES", TechniqueId::ALL.map(TechniqueId::name).to_vec())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(quickdash_score, m)?)?;
    m.add_function(wrap_pyfunction!(validate_session, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(group_folds, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
