//! Recursive feature elimination with an OLS ranker, and the top-k cap.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureBlock;
use crate::evaluation::{group_kfold, r2, FoldError};

/// Ridge added when the least-squares system is singular.
pub const RIDGE_FALLBACK: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("{rows} rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("{names} feature names for {columns} columns")]
    NamesMismatch { names: usize, columns: usize },
    #[error("no features to select from")]
    NoFeatures,
    #[error("subset size {0} outside [1, number of features]")]
    InvalidSubsetSize(usize),
    #[error("invalid step fraction {0}")]
    InvalidStep(f64),
    #[error("feature unit refers to column {0}, which does not exist")]
    BadUnit(usize),
    #[error("non-finite value in selection input")]
    NonFiniteInput,
    #[error(transparent)]
    Folds(#[from] FoldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfeStep {
    DropOne,
    /// Drop this fraction of the remaining units per round (at least one).
    Fraction(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeConfig {
    /// `None` evaluates 1..=min(p, 25) plus p.
    pub subset_sizes: Option<Vec<usize>>,
    pub step: RfeStep,
    /// Inner grouped folds used to score each subset size.
    pub folds: usize,
    pub seed: u64,
}

impl Default for RfeConfig {
    fn default() -> Self {
        RfeConfig {
            subset_sizes: None,
            step: RfeStep::DropOne,
            folds: 5,
            seed: 42,
        }
    }
}

/// A selection unit: one column, or a one-hot block kept together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeScore {
    pub size: usize,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Best first.
    pub ordering: Vec<RankedUnit>,
    pub cv_scores_by_size: Vec<SizeScore>,
    pub best_size: usize,
    /// Names of the units in the best-scoring subset, best first.
    pub selected: Vec<String>,
}

impl FeatureRanking {
    pub fn selected_units(&self) -> &[RankedUnit] {
        &self.ordering[..self.best_size]
    }
}

/// The best-ranked `min(k, |selected|)` units of the selected subset.
pub fn cap_top_k(ranking: &FeatureRanking, k: usize) -> Vec<RankedUnit> {
    ranking.selected_units().iter().take(k).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ordering: Vec<String>,
    pub cv_scores_by_size: Vec<SizeScore>,
    pub selected: Vec<String>,
    pub capped: Vec<String>,
}

impl RankingReport {
    pub fn new(ranking: &FeatureRanking, k: usize) -> Self {
        RankingReport {
            ordering: ranking.ordering.iter().map(|u| u.name.clone()).collect(),
            cv_scores_by_size: ranking.cv_scores_by_size.clone(),
            selected: ranking.selected.clone(),
            capped: cap_top_k(ranking, k).into_iter().map(|u| u.name).collect(),
        }
    }
}

/// Sufficient statistics for least squares with an intercept.
#[derive(Clone, Debug)]
struct Gram {
    n: f64,
    sx: DVector<f64>,
    sy: f64,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

impl Gram {
    fn of_rows(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> Gram {
        let sub = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
        let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
        Gram {
            n: rows.len() as f64,
            sx: DVector::from_iterator(x.ncols(), sub.column_iter().map(|c| c.sum())),
            sy: ys.sum(),
            xtx: sub.transpose() * &sub,
            xty: sub.transpose() * ys,
        }
    }

    fn minus(&self, other: &Gram) -> Gram {
        Gram {
            n: self.n - other.n,
            sx: &self.sx - &other.sx,
            sy: self.sy - other.sy,
            xtx: &self.xtx - &other.xtx,
            xty: &self.xty - &other.xty,
        }
    }

    /// OLS on the given columns; falls back to a small ridge when singular.
    fn solve(&self, cols: &[usize]) -> (f64, Vec<f64>, bool) {
        let k = cols.len();
        let n = self.n;
        let mx = DVector::from_iterator(k, cols.iter().map(|&c| self.sx[c] / n));
        let my = self.sy / n;
        let mut a = DMatrix::from_fn(k, k, |i, j| self.xtx[(cols[i], cols[j])] - n * mx[i] * mx[j]);
        let b = DVector::from_iterator(k, (0..k).map(|i| self.xty[cols[i]] - n * mx[i] * my));
        let mut ridge_used = false;
        let beta = match well_conditioned_solve(&a, &b) {
            Some(beta) => beta,
            None => {
                ridge_used = true;
                let scale = (0..k).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(n);
                for i in 0..k {
                    a[(i, i)] += scale * RIDGE_FALLBACK;
                }
                well_conditioned_solve(&a, &b).unwrap_or_else(|| DVector::zeros(k))
            }
        };
        let intercept = my - mx.dot(&beta);
        (intercept, beta.iter().copied().collect(), ridge_used)
    }
}

fn well_conditioned_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(hi > 0.0) || (lo / hi).powi(2) < 1e-12 {
        return None;
    }
    let beta = chol.solve(b);
    beta.iter().all(|v| v.is_finite()).then_some(beta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub ridge_used: bool,
}

/// Ordinary least squares with intercept via the normal equations.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, SelectionError> {
    if x.nrows() != y.len() {
        return Err(SelectionError::DimensionMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    let rows: Vec<usize> = (0..y.len()).collect();
    let cols: Vec<usize> = (0..x.ncols()).collect();
    let (intercept, coefficients, ridge_used) = Gram::of_rows(x, y, &rows).solve(&cols);
    if ridge_used {
        log::debug!("singular least-squares fit; used ridge {RIDGE_FALLBACK}");
    }
    Ok(OlsFit {
        intercept,
        coefficients,
        ridge_used,
    })
}

fn requested_sizes(cfg: &RfeConfig, units: usize) -> Result<BTreeSet<usize>, SelectionError> {
    let mut sizes: BTreeSet<usize> = match &cfg.subset_sizes {
        Some(s) => {
            for &k in s {
                if k == 0 || k > units {
                    return Err(SelectionError::InvalidSubsetSize(k));
                }
            }
            s.iter().copied().collect()
        }
        None => (1..=units.min(25)).collect(),
    };
    sizes.insert(units);
    Ok(sizes)
}

/// Recursive feature elimination.
///
/// `x` should be standardized so coefficient magnitudes are comparable.
/// `units` groups columns that are eliminated together; `None` treats every
/// column as its own unit. Subset sizes count units.
pub fn rfe(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[&str],
    names: &[String],
    units: Option<&[FeatureBlock]>,
    cfg: &RfeConfig,
) -> Result<FeatureRanking, SelectionError> {
    let (n, p) = x.shape();
    if n != y.len() || n != groups.len() {
        return Err(SelectionError::DimensionMismatch { rows: n, targets: y.len() });
    }
    if names.len() != p {
        return Err(SelectionError::NamesMismatch {
            names: names.len(),
            columns: p,
        });
    }
    if p == 0 {
        return Err(SelectionError::NoFeatures);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SelectionError::NonFiniteInput);
    }
    if let RfeStep::Fraction(f) = cfg.step {
        if !(f > 0.0 && f < 1.0) {
            return Err(SelectionError::InvalidStep(f));
        }
    }
    let units: Vec<FeatureBlock> = match units {
        Some(u) => u.to_vec(),
        None => (0..p)
            .map(|j| FeatureBlock {
                name: names[j].clone(),
                columns: vec![j],
            })
            .collect(),
    };
    if let Some(bad) = units.iter().flat_map(|u| &u.columns).find(|&&c| c >= p) {
        return Err(SelectionError::BadUnit(*bad));
    }
    if units.is_empty() {
        return Err(SelectionError::NoFeatures);
    }
    let sizes = requested_sizes(cfg, units.len())?;

    let all_rows: Vec<usize> = (0..n).collect();
    let full = Gram::of_rows(x, y, &all_rows);

    // Inner grouped folds for scoring subset sizes.
    let participants: Vec<String> = groups
        .iter()
        .map(|g| g.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let inner: Vec<(Vec<usize>, Gram)> = if participants.len() >= 2 {
        let k = cfg.folds.clamp(2, participants.len());
        let plan = group_kfold(&participants, k, cfg.seed)?;
        (0..plan.k())
            .map(|f| {
                let split = plan.split(groups, f);
                let train = full.minus(&Gram::of_rows(x, y, &split.test));
                (split.test, train)
            })
            .collect()
    } else {
        log::warn!("fewer than two groups; subset sizes are not cross-validated");
        Vec::new()
    };

    let columns_of = |set: &[usize]| -> Vec<usize> { set.iter().flat_map(|&u| units[u].columns.clone()).collect() };
    let score = |cols: &[usize]| -> f64 {
        let scores: Vec<f64> = inner
            .par_iter()
            .map(|(test, train)| {
                let (b0, beta, _) = train.solve(cols);
                let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
                let pred: Vec<f64> = test
                    .iter()
                    .map(|&i| b0 + cols.iter().zip(&beta).map(|(&c, b)| x[(i, c)] * b).sum::<f64>())
                    .collect();
                r2(&truth, &pred)
            })
            .collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    };

    let mut current: Vec<usize> = (0..units.len()).collect();
    let mut eliminated: Vec<usize> = Vec::with_capacity(units.len());
    let mut scores: Vec<SizeScore> = Vec::new();
    let mut fallbacks = 0usize;
    while !current.is_empty() {
        let cols = columns_of(&current);
        if sizes.contains(&current.len()) && !inner.is_empty() {
            scores.push(SizeScore {
                size: current.len(),
                r2: score(&cols),
            });
        }
        if current.len() == 1 {
            eliminated.push(current[0]);
            break;
        }
        let (_, beta, ridge_used) = full.solve(&cols);
        fallbacks += usize::from(ridge_used);
        let mut offset = 0;
        let mut importance: Vec<(f64, usize)> = Vec::with_capacity(current.len());
        for (pos, &u) in current.iter().enumerate() {
            let w = units[u].columns.len();
            let imp = beta[offset..offset + w].iter().fold(0.0f64, |m, b| m.max(b.abs()));
            importance.push((imp, pos));
            offset += w;
        }
        // Weakest first; among equals, the later schema position goes first.
        importance.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let next_size = sizes.range(..current.len()).next_back().copied().unwrap_or(1);
        let want = match cfg.step {
            RfeStep::DropOne => 1,
            RfeStep::Fraction(f) => ((f * current.len() as f64).floor() as usize).max(1),
        };
        let drop = want.min(current.len() - next_size.max(1));
        let mut gone: Vec<usize> = importance[..drop].iter().map(|&(_, pos)| pos).collect();
        eliminated.extend(gone.iter().map(|&pos| current[pos]));
        gone.sort_unstable_by(|a, b| b.cmp(a));
        for pos in gone {
            current.remove(pos);
        }
    }
    if fallbacks > 0 {
        log::debug!("rfe: {fallbacks} singular fits resolved with ridge {RIDGE_FALLBACK}");
    }
    scores.sort_by_key(|s| s.size);

    let ordering: Vec<RankedUnit> = eliminated
        .iter()
        .rev()
        .map(|&u| RankedUnit {
            name: units[u].name.clone(),
            columns: units[u].columns.iter().map(|&c| names[c].clone()).collect(),
        })
        .collect();
    let mut best_size = units.len();
    let mut best = f64::NEG_INFINITY;
    for s in &scores {
        if s.r2 > best {
            best = s.r2;
            best_size = s.size;
        }
    }
    let selected = ordering[..best_size].iter().map(|u| u.name.clone()).collect();
    Ok(FeatureRanking {
        ordering,
        cv_scores_by_size: scores,
        best_size,
        selected,
    })
}
