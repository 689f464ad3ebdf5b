//! Hyperparameter grids.

use serde::{Deserialize, Serialize};

use super::{EnetParams, ForestParams, LearnerKind, LearnerSpec, Mtry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnetGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EnetGrid {
    fn default() -> Self {
        EnetGrid {
            alphas: vec![0.1, 0.5, 0.9],
            lambdas: log_space(1e-4, 1e1, 10),
            max_iter: 10_000,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub mtry: Vec<Mtry>,
    pub min_leaf: Vec<usize>,
    pub max_depth: Option<usize>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: vec![500],
            mtry: vec![Mtry::Third, Mtry::All],
            min_leaf: vec![5],
            max_depth: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub elastic_net: EnetGrid,
    pub random_forest: ForestGrid,
}

/// `n` points spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

impl GridSpec {
    /// Every cell for `kind`, in enumeration order.
    pub fn cells(&self, kind: LearnerKind, seed: u64) -> Vec<LearnerSpec> {
        match kind {
            LearnerKind::ElasticNet => {
                let g = &self.elastic_net;
                let mut out = Vec::new();
                for &alpha in &g.alphas {
                    for &lambda in &g.lambdas {
                        out.push(LearnerSpec::ElasticNet(EnetParams {
                            alpha,
                            lambda,
                            max_iter: g.max_iter,
                            tol: g.tol,
                        }));
                    }
                }
                out
            }
            LearnerKind::RandomForest => {
                let g = &self.random_forest;
                let mut out = Vec::new();
                for &n_trees in &g.n_trees {
                    for &mtry in &g.mtry {
                        for &min_leaf in &g.min_leaf {
                            out.push(LearnerSpec::RandomForest(ForestParams {
                                n_trees,
                                mtry,
                                min_leaf,
                                max_depth: g.max_depth,
                                seed,
                                bootstrap: true,
                            }));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Ordering key among cells with equal scores: smaller is the simpler model.
/// Larger λ first for the elastic net, fewer trees first for the forest, then
/// the remaining parameters in order.
pub fn complexity_key(spec: &LearnerSpec, p: usize) -> Vec<f64> {
    match spec {
        LearnerSpec::ElasticNet(e) => vec![-e.lambda, e.alpha],
        LearnerSpec::RandomForest(f) => vec![
            f.n_trees as f64,
            f.mtry.resolve(p) as f64,
            -(f.min_leaf as f64),
            f.max_depth.map_or(f64::INFINITY, |d| d as f64),
        ],
    }
}
