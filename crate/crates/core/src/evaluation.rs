//! Grouped cross-validation, regression metrics, hyperparameter search,
//! technique ranking and rank reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Scenario};
use crate::learners::{complexity_key, GridSpec, LearnerError, LearnerKind, LearnerSpec};
use crate::pipeline::{select_features, FoldSelection, SelectionConfig};
use crate::selection::SelectionError;
use crate::session::{Group, TechniqueId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoldError {
    #[error("cannot make {k} folds from {participants} participants")]
    TooManyFolds { k: usize, participants: usize },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("participant {0} is assigned to more than one fold")]
    DuplicateParticipant(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error("fold {fold}: only {train} training instances")]
    FoldTooSmall { fold: usize, train: usize },
    #[error("participant {0} is not covered by the fold plan")]
    PlanMismatch(String),
    #[error("feature selection failed{}: {source}", fold_suffix(*.fold))]
    Selection {
        fold: Option<usize>,
        #[source]
        source: SelectionError,
    },
    #[error("learner failed{}: {source}", fold_suffix(*.fold))]
    Learner {
        fold: Option<usize>,
        #[source]
        source: LearnerError,
    },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("every grid cell failed")]
    AllCellsFailed,
}

fn fold_suffix(fold: Option<usize>) -> String {
    fold.map(|f| format!(" in fold {f}")).unwrap_or_default()
}

static SPLITS_CHECKED: AtomicU64 = AtomicU64::new(0);
static LEAKS_FOUND: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of train/test splits checked for participant overlap,
/// and how many overlapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LeakageCounters {
    pub splits_checked: u64,
    pub violations: u64,
}

pub fn leakage_counters() -> LeakageCounters {
    LeakageCounters {
        splits_checked: SPLITS_CHECKED.load(Ordering::SeqCst),
        violations: LEAKS_FOUND.load(Ordering::SeqCst),
    }
}

/// Row indices of one fold's training and held-out instances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Panics if any participant has rows on both sides. Every split produced by
/// this crate goes through here.
pub fn assert_no_leakage(groups: &[&str], split: &Split) {
    let train: BTreeSet<&str> = split.train.iter().map(|&i| groups[i]).collect();
    let leaked: Vec<&str> = split.test.iter().map(|&i| groups[i]).filter(|g| train.contains(g)).collect();
    SPLITS_CHECKED.fetch_add(1, Ordering::SeqCst);
    if !leaked.is_empty() {
        LEAKS_FOUND.fetch_add(1, Ordering::SeqCst);
        panic!("participant leakage between train and test: {leaked:?}");
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    /// Held-out participant ids per fold.
    pub folds: Vec<Vec<String>>,
}

/// Seeded partition of participants into `k` folds whose sizes differ by at
/// most one.
pub fn group_kfold(participants: &[String], k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    let mut ids: Vec<String> = participants.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 {
        return Err(FoldError::TooFewFolds(k));
    }
    if k > ids.len() {
        return Err(FoldError::TooManyFolds {
            k,
            participants: ids.len(),
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut it = ids.into_iter();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<String> = it.by_ref().take(size).collect();
        fold.sort();
        folds.push(fold);
    }
    Ok(FoldPlan { seed, folds })
}

impl FoldPlan {
    /// A plan from explicit folds; rejects participants listed twice.
    pub fn from_folds(folds: Vec<Vec<String>>) -> Result<Self, FoldError> {
        let mut seen = BTreeSet::new();
        for id in folds.iter().flatten() {
            if !seen.insert(id) {
                return Err(FoldError::DuplicateParticipant(id.clone()));
            }
        }
        if folds.len() < 2 {
            return Err(FoldError::TooFewFolds(folds.len()));
        }
        Ok(FoldPlan { seed: 0, folds })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, participant: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|p| p == participant))
    }

    /// Splits instances (given by participant id) for fold `fold`. Rows whose
    /// participant the plan does not know go to training.
    pub fn split(&self, groups: &[&str], fold: usize) -> Split {
        let held: BTreeSet<&str> = self.folds[fold].iter().map(String::as_str).collect();
        let (test, train): (Vec<usize>, Vec<usize>) = (0..groups.len()).partition(|&i| held.contains(groups[i]));
        let split = Split { train, test };
        assert_no_leakage(groups, &split);
        split
    }

    fn check_covers(&self, ds: &Dataset) -> Result<(), EvalError> {
        let known: BTreeSet<&str> = self.folds.iter().flatten().map(String::as_str).collect();
        match ds.participants().into_iter().find(|p| !known.contains(p.as_str())) {
            Some(p) => Err(EvalError::PlanMismatch(p)),
            None => Ok(()),
        }
    }
}

/// Coefficient of determination; 0 when the truth has no variance.
pub fn r2(y: &[f64], yhat: &[f64]) -> f64 {
    r2_checked(y, yhat).0
}

/// R² plus whether the truth was degenerate (zero variance).
pub fn r2_checked(y: &[f64], yhat: &[f64]) -> (f64, bool) {
    assert_eq!(y.len(), yhat.len(), "r2 length mismatch");
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    if sst == 0.0 {
        (0.0, true)
    } else {
        (1.0 - sse / sst, false)
    }
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len(), "rmse length mismatch");
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    (sse / y.len() as f64).sqrt()
}

/// Mean absolute percent error, in percent.
pub fn mape(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len(), "mape length mismatch");
    100.0 * y.iter().zip(yhat).map(|(a, b)| (a - b).abs() / a).sum::<f64>() / y.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub r2: f64,
    pub rmse: f64,
    pub n_test: usize,
    /// R² was forced to 0 because the held-out truth had no variance.
    pub r2_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub per_fold: Vec<FoldScore>,
    pub mean_r2: f64,
    pub mean_rmse: f64,
    /// One hold-out prediction per dataset instance.
    pub predictions: Vec<f64>,
}

/// Feature selection for every fold, fitted on that fold's training rows.
pub fn fold_selections(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &SelectionConfig,
) -> Result<Vec<FoldSelection>, EvalError> {
    plan.check_covers(ds)?;
    let groups = ds.groups();
    (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let split = plan.split(&groups, f);
            if split.train.len() < 2 {
                return Err(EvalError::FoldTooSmall {
                    fold: f,
                    train: split.train.len(),
                });
            }
            select_features(ds, &split.train, cfg).map_err(|source| EvalError::Selection { fold: Some(f), source })
        })
        .collect()
}

/// Grouped CV reusing precomputed per-fold selections.
pub fn cross_validate_with(
    ds: &Dataset,
    plan: &FoldPlan,
    selections: &[FoldSelection],
    learner: &LearnerSpec,
) -> Result<CvResult, EvalError> {
    plan.check_covers(ds)?;
    let groups = ds.groups();
    let fold_out: Vec<Result<Option<(FoldScore, Vec<usize>, Vec<f64>)>, EvalError>> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let split = plan.split(&groups, f);
            if split.train.len() < 2 {
                return Err(EvalError::FoldTooSmall {
                    fold: f,
                    train: split.train.len(),
                });
            }
            if split.test.is_empty() {
                return Ok(None);
            }
            let sel = &selections[f];
            let model = sel
                .fit(ds, &split.train, learner)
                .map_err(|source| EvalError::Learner { fold: Some(f), source })?;
            let pred = model
                .predict(&sel.design(ds, &split.test))
                .map_err(|source| EvalError::Learner { fold: Some(f), source })?;
            let truth: Vec<f64> = split.test.iter().map(|&i| ds.instances[i].target).collect();
            let (r2v, degenerate) = r2_checked(&truth, &pred);
            if degenerate {
                log::warn!("fold {f}: held-out targets have no variance; R² set to 0");
            }
            let score = FoldScore {
                fold: f,
                r2: r2v,
                rmse: rmse(&truth, &pred),
                n_test: truth.len(),
                r2_degenerate: degenerate,
            };
            Ok(Some((score, split.test, pred)))
        })
        .collect();

    let mut per_fold = Vec::new();
    let mut predictions = vec![f64::NAN; ds.len()];
    for out in fold_out {
        if let Some((score, rows, pred)) = out? {
            for (i, p) in rows.into_iter().zip(pred) {
                predictions[i] = p;
            }
            per_fold.push(score);
        }
    }
    let m = per_fold.len() as f64;
    Ok(CvResult {
        mean_r2: per_fold.iter().map(|s| s.r2).sum::<f64>() / m,
        mean_rmse: per_fold.iter().map(|s| s.rmse).sum::<f64>() / m,
        per_fold,
        predictions,
    })
}

/// Grouped CV with standardization and feature selection fitted inside each
/// training fold.
pub fn cross_validate(
    ds: &Dataset,
    plan: &FoldPlan,
    learner: &LearnerSpec,
    selection: &SelectionConfig,
) -> Result<CvResult, EvalError> {
    let selections = fold_selections(ds, plan, selection)?;
    cross_validate_with(ds, plan, &selections, learner)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learner: LearnerSpec,
    /// Hold-out R² per fold; empty when the cell failed.
    pub fold_r2: Vec<f64>,
    pub mean_r2: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best_index: usize,
    pub best: LearnerSpec,
    pub best_cv: CvResult,
}

/// Evaluates every grid cell by grouped CV and keeps the best mean R².
/// Feature selection does not depend on the learner, so it is fitted once per
/// fold and shared by all cells.
pub fn grid_search(
    ds: &Dataset,
    kind: LearnerKind,
    grid: &GridSpec,
    plan: &FoldPlan,
    selection: &SelectionConfig,
    seed: u64,
) -> Result<GridResult, EvalError> {
    let cells = grid.cells(kind, seed);
    grid_search_cells(ds, &cells, plan, selection)
}

pub fn grid_search_cells(
    ds: &Dataset,
    cells: &[LearnerSpec],
    plan: &FoldPlan,
    selection: &SelectionConfig,
) -> Result<GridResult, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let selections = fold_selections(ds, plan, selection)?;
    let mut table = Vec::with_capacity(cells.len());
    let mut results = Vec::with_capacity(cells.len());
    for spec in cells {
        match cross_validate_with(ds, plan, &selections, spec) {
            Ok(cv) => {
                table.push(GridCell {
                    learner: *spec,
                    fold_r2: cv.per_fold.iter().map(|s| s.r2).collect(),
                    mean_r2: Some(cv.mean_r2),
                    mean_rmse: Some(cv.mean_rmse),
                    error: None,
                });
                results.push(Some(cv));
            }
            Err(e) => {
                log::warn!("grid cell {spec:?} discarded: {e}");
                table.push(GridCell {
                    learner: *spec,
                    fold_r2: Vec::new(),
                    mean_r2: None,
                    mean_rmse: None,
                    error: Some(e.to_string()),
                });
                results.push(None);
            }
        }
    }
    let p = ds.n_features();
    let mut best: Option<usize> = None;
    for (i, cell) in table.iter().enumerate() {
        let Some(score) = cell.mean_r2.filter(|s| s.is_finite()) else {
            continue;
        };
        best = match best {
            None => Some(i),
            Some(b) => {
                let bs = table[b].mean_r2.unwrap();
                let better = score > bs
                    || (score == bs && cmp_keys(&complexity_key(&cell.learner, p), &complexity_key(&table[b].learner, p)).is_lt());
                Some(if better { i } else { b })
            }
        };
    }
    let best_index = best.ok_or(EvalError::AllCellsFailed)?;
    Ok(GridResult {
        best: table[best_index].learner,
        best_cv: results[best_index].take().expect("best cell has results"),
        cells: table,
        best_index,
    })
}

fn cmp_keys(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub technique: TechniqueId,
    pub predicted_time: f64,
    pub predicted_rank: usize,
    pub actual_time: f64,
    pub actual_rank: usize,
    /// The calibration technique: observed, not predicted.
    pub observed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub participant_id: String,
    pub group: Group,
    /// One entry per available technique, in technique order.
    pub entries: Vec<RankEntry>,
    /// Techniques absent for this participant.
    pub missing: Vec<TechniqueId>,
}

impl RankedList {
    pub fn technique_at(&self, rank: usize, predicted: bool) -> Option<&RankEntry> {
        self.entries
            .iter()
            .find(|e| if predicted { e.predicted_rank } else { e.actual_rank } == rank)
    }
}

/// 1-based ranks, fastest first; ties go to the alphabetically earlier
/// technique.
pub fn assign_ranks(times: &[(TechniqueId, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].1.total_cmp(&times[b].1).then(times[a].0.cmp(&times[b].0)));
    let mut ranks = vec![0; times.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Builds one list per participant from per-instance hold-out predictions.
/// For calibration-based datasets the calibration technique joins the list
/// with its observed mean time on both sides.
pub fn ranked_lists(ds: &Dataset, predictions: &[f64]) -> Vec<RankedList> {
    assert_eq!(predictions.len(), ds.len(), "one prediction per instance");
    type Acc = BTreeMap<TechniqueId, (f64, f64, usize)>;
    let mut per: BTreeMap<&str, (Group, Acc)> = BTreeMap::new();
    for (inst, &p) in ds.instances.iter().zip(predictions) {
        let e = per.entry(inst.participant_id.as_str()).or_insert_with(|| (inst.group, Acc::new()));
        let t = e.1.entry(inst.prediction_technique).or_insert((0.0, 0.0, 0));
        t.0 += p;
        t.1 += inst.target;
        t.2 += 1;
    }
    per.into_iter()
        .map(|(pid, (group, acc))| {
            let mut rows: Vec<(TechniqueId, f64, f64, bool)> = acc
                .into_iter()
                .map(|(t, (ps, ys, n))| (t, ps / n as f64, ys / n as f64, false))
                .collect();
            if let (Some(c), Some(&obs)) = (ds.calibration, ds.calibration_times.get(pid)) {
                if !rows.iter().any(|r| r.0 == c) {
                    rows.push((c, obs, obs, true));
                }
            }
            rows.sort_by_key(|r| r.0);
            let pred = assign_ranks(&rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>());
            let act = assign_ranks(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>());
            let missing: Vec<TechniqueId> = TechniqueId::ALL
                .into_iter()
                .filter(|t| !rows.iter().any(|r| r.0 == *t))
                .collect();
            if !missing.is_empty() {
                log::warn!("participant {pid} lacks techniques {missing:?}; ranking the rest");
            }
            RankedList {
                participant_id: pid.to_string(),
                group,
                entries: rows
                    .iter()
                    .zip(pred.iter().zip(&act))
                    .map(|(r, (&pr, &ar))| RankEntry {
                        technique: r.0,
                        predicted_time: r.1,
                        predicted_rank: pr,
                        actual_time: r.2,
                        actual_rank: ar,
                        observed: r.3,
                    })
                    .collect(),
                missing,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub plan: FoldPlan,
    pub cv: CvResult,
    pub lists: Vec<RankedList>,
    /// R² and RMSE of per participant × technique mean predictions against
    /// mean observed times (predicted techniques only).
    pub averaged_r2: f64,
    pub averaged_rmse: f64,
}

/// Grouped k-fold hold-out predictions turned into per-participant rankings.
pub fn rank_techniques(
    ds: &Dataset,
    learner: &LearnerSpec,
    selection: &SelectionConfig,
    k: usize,
    seed: u64,
) -> Result<RankingOutcome, EvalError> {
    let participants = ds.participants();
    let plan = group_kfold(&participants, k.min(participants.len()), seed)?;
    let cv = cross_validate(ds, &plan, learner, selection)?;
    let lists = ranked_lists(ds, &cv.predictions);
    let (truth, pred): (Vec<f64>, Vec<f64>) = lists
        .iter()
        .flat_map(|l| l.entries.iter().filter(|e| !e.observed).map(|e| (e.actual_time, e.predicted_time)))
        .unzip();
    Ok(RankingOutcome {
        averaged_r2: r2(&truth, &pred),
        averaged_rmse: rmse(&truth, &pred),
        plan,
        cv,
        lists,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub by_rank: Vec<f64>,
    pub overall: f64,
}

/// Accuracy (fraction) or MAPE (percent), overall and per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankScores {
    pub by_rank: Vec<f64>,
    pub by_group: BTreeMap<String, RankSummary>,
    pub overall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub participants: usize,
    pub rank_accuracy: RankScores,
    pub mape: RankScores,
}

fn summarize(lists: &[&RankedList]) -> (RankSummary, RankSummary) {
    let depth = lists.iter().map(|l| l.entries.len()).max().unwrap_or(0);
    let mut acc = Vec::with_capacity(depth);
    let mut err = Vec::with_capacity(depth);
    for rank in 1..=depth {
        let (mut hits, mut n, mut pct) = (0usize, 0usize, 0.0);
        for l in lists {
            let (Some(p), Some(a)) = (l.technique_at(rank, true), l.technique_at(rank, false)) else {
                continue;
            };
            n += 1;
            hits += usize::from(p.technique == a.technique);
            pct += (a.actual_time - p.predicted_time).abs() / a.actual_time;
        }
        acc.push(hits as f64 / n as f64);
        err.push(100.0 * pct / n as f64);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    (
        RankSummary {
            overall: mean(&acc),
            by_rank: acc,
        },
        RankSummary {
            overall: mean(&err),
            by_rank: err,
        },
    )
}

/// Per-rank accuracy and MAPE. Accuracy at rank r is the share of
/// participants whose predicted rank-r technique is their actual rank-r
/// technique; MAPE at rank r compares the actual rank-r technique's observed
/// time with the predicted rank-r technique's predicted time. Overall values
/// are unweighted means over ranks.
pub fn rank_report(lists: &[RankedList]) -> RankReport {
    let all: Vec<&RankedList> = lists.iter().collect();
    let (acc, err) = summarize(&all);
    let mut acc_groups = BTreeMap::new();
    let mut err_groups = BTreeMap::new();
    for g in [Group::Impaired, Group::NonImpaired] {
        let subset: Vec<&RankedList> = lists.iter().filter(|l| l.group == g).collect();
        if subset.is_empty() {
            continue;
        }
        let (a, e) = summarize(&subset);
        acc_groups.insert(g.to_string(), a);
        err_groups.insert(g.to_string(), e);
    }
    RankReport {
        participants: lists.len(),
        rank_accuracy: RankScores {
            by_rank: acc.by_rank,
            by_group: acc_groups,
            overall: acc.overall,
        },
        mape: RankScores {
            by_rank: err.by_rank,
            by_group: err_groups,
            overall: err.overall,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub r2: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: Scenario,
    pub calibration: Option<TechniqueId>,
    pub learner: LearnerSpec,
    pub instances: usize,
    pub participants: usize,
    pub per_fold: Vec<FoldSummary>,
    pub mean_r2: f64,
    pub mean_rmse: f64,
    pub averaged_r2: f64,
    pub averaged_rmse: f64,
    pub rank_accuracy: RankScores,
    pub mape: RankScores,
}

impl EvaluationReport {
    pub fn new(ds: &Dataset, learner: &LearnerSpec, cv: &CvResult, ranking: &RankingOutcome) -> Self {
        let report = rank_report(&ranking.lists);
        EvaluationReport {
            scenario: ds.scenario,
            calibration: ds.calibration,
            learner: *learner,
            instances: ds.len(),
            participants: ds.participants().len(),
            per_fold: cv
                .per_fold
                .iter()
                .map(|s| FoldSummary { r2: s.r2, rmse: s.rmse })
                .collect(),
            mean_r2: cv.mean_r2,
            mean_rmse: cv.mean_rmse,
            averaged_r2: ranking.averaged_r2,
            averaged_rmse: ranking.averaged_rmse,
            rank_accuracy: report.rank_accuracy,
            mape: report.mape,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let calib = self.calibration.map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(s, "scenario     {}", self.scenario);
        let _ = writeln!(s, "calibration  {calib}");
        let _ = writeln!(s, "instances    {} ({} participants)", self.instances, self.participants);
        let _ = writeln!(s, "folds        {}", self.per_fold.len());
        let _ = writeln!(s, "mean R2      {:.4}", self.mean_r2);
        let _ = writeln!(s, "mean RMSE    {:.4} s", self.mean_rmse);
        let _ = writeln!(s, "averaged R2  {:.4}", self.averaged_r2);
        let _ = writeln!(s, "averaged RMSE {:.4} s", self.averaged_rmse);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}{:>12}{:>12}", "rank", "accuracy", "MAPE %");
        for (r, (a, m)) in self.rank_accuracy.by_rank.iter().zip(&self.mape.by_rank).enumerate() {
            let _ = writeln!(s, "{:<10}{:>11.1}%{:>12.2}", r + 1, 100.0 * a, m);
        }
        let _ = writeln!(
            s,
            "{:<10}{:>11.1}%{:>12.2}",
            "overall",
            100.0 * self.rank_accuracy.overall,
            self.mape.overall
        );
        for (g, a) in &self.rank_accuracy.by_group {
            let m = &self.mape.by_group[g];
            let _ = writeln!(s, "{:<10}{:>11.1}%{:>12.2}", g, 100.0 * a.overall, m.overall);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i:02}")).collect()
    }

    #[test]
    fn thirty_seven_into_twenty_five() {
        let plan = group_kfold(&ids(37), 25, 7).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 13);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 12);
    }

    #[test]
    fn too_many_folds() {
        assert!(matches!(
            group_kfold(&ids(3), 4, 0),
            Err(FoldError::TooManyFolds { k: 4, participants: 3 })
        ));
    }

    #[test]
    fn metric_examples() {
        assert!((mape(&[10.0, 20.0], &[11.0, 18.0]) - 10.0).abs() < 1e-12);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(r2_checked(&[4.0, 4.0], &[1.0, 9.0]), (0.0, true));
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn rank_ties_alphabetical() {
        let t = TechniqueId::ALL;
        let ranks = assign_ranks(&[(t[3], 4.0), (t[1], 4.0), (t[0], 9.0)]);
        assert_eq!(ranks, vec![2, 1, 3]);
    }
}
