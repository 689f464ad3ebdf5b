//! Random-forest regression built from CART trees.
//!
//! Each tree draws its bootstrap sample and per-node feature subsets from its
//! own ChaCha stream keyed by `(seed, tree_index)`, so the fitted forest does
//! not depend on how trees are scheduled across threads.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::check_inputs;
use super::LearnerError;

/// Features tried per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mtry {
    /// `ceil(p / 3)`, the usual regression default.
    Third,
    Sqrt,
    All,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, p: usize) -> usize {
        let m = match self {
            Mtry::Third => p.div_ceil(3),
            Mtry::Sqrt => (p as f64).sqrt().ceil() as usize,
            Mtry::All => p,
            Mtry::Fixed(m) => m,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: Mtry,
    pub min_leaf: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Disabling bootstrap makes every tree see the full training set.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

fn default_bootstrap() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            mtry: Mtry::Third,
            min_leaf: 5,
            max_depth: None,
            seed: 42,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub hyperparameters: ForestParams,
    /// Resolved features-per-split for this training set.
    pub mtry: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

/// The random stream for one tree.
pub fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

/// In-bag rows (a multiset, drawn with replacement) and the out-of-bag rows
/// never drawn, exactly as tree `tree_index` sees them.
pub fn bootstrap_sample(seed: u64, tree_index: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = tree_rng(seed, tree_index);
    let in_bag = draw_bootstrap(&mut rng, n);
    let mut drawn = vec![false; n];
    for &i in &in_bag {
        drawn[i] = true;
    }
    let oob = (0..n).filter(|&i| !drawn[i]).collect();
    (in_bag, oob)
}

fn draw_bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &i in rows {
            let v = self.y[i];
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        // Rounding in the sum can push the mean a hair outside the observed range.
        let value = (sum / rows.len() as f64).clamp(lo, hi);
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<Split> {
        let m = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let base = total * total / m as f64;
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for &f in features {
            let col = self.x.column(f);
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for k in 0..m - 1 {
                left += pairs[k].1;
                let nl = k + 1;
                if pairs[k].0 == pairs[k + 1].0 || nl < self.min_leaf || m - nl < self.min_leaf {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / (m - nl) as f64 - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(Split {
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let m = rows.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if m < 2 * self.min_leaf || m < 2 || sse <= 0.0 || depth_capped {
            return self.leaf(rows);
        }
        let p = self.x.ncols();
        let mut features = sample_indices(rng, p, self.mtry).into_vec();
        features.sort_unstable();
        let split = match self.best_split(rows, &features) {
            Some(s) if s.gain > 1e-12 * sse => s,
            _ => return self.leaf(rows),
        };
        let col = self.x.column(split.feature);
        // Stable partition keeps row order deterministic.
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        let left = self.grow(&mut l, depth + 1, rng);
        let right = self.grow(&mut r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

fn fit_tree(x: &DMatrix<f64>, y: &[f64], params: &ForestParams, mtry: usize, tree_index: usize) -> RegressionTree {
    let mut rng = tree_rng(params.seed, tree_index);
    let mut rows = if params.bootstrap {
        draw_bootstrap(&mut rng, y.len())
    } else {
        (0..y.len()).collect()
    };
    let mut b = Builder {
        x,
        y,
        mtry,
        min_leaf: params.min_leaf.max(1),
        max_depth: params.max_depth,
        nodes: Vec::new(),
    };
    b.grow(&mut rows, 0, &mut rng);
    RegressionTree { nodes: b.nodes }
}

/// Fits `n_trees` CART regression trees on bootstrap samples with
/// variance-reduction splits over `mtry` random features per node.
pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    feature_names: &[String],
    params: &ForestParams,
) -> Result<ForestModel, LearnerError> {
    check_inputs(x, y)?;
    if feature_names.len() != x.ncols() {
        return Err(LearnerError::SchemaMismatch {
            expected: x.ncols(),
            got: feature_names.len(),
        });
    }
    if params.n_trees == 0 {
        return Err(LearnerError::InvalidParameter("n_trees must be positive".into()));
    }
    if let Mtry::Fixed(m) = params.mtry {
        if m == 0 || m > x.ncols() {
            return Err(LearnerError::InvalidParameter(format!(
                "mtry {m} outside [1, {}]",
                x.ncols()
            )));
        }
    }
    let mtry = params.mtry.resolve(x.ncols());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(x, y, params, mtry, t))
        .collect();
    Ok(ForestModel {
        hyperparameters: *params,
        mtry,
        feature_names: feature_names.to_vec(),
        trees,
    })
}

impl ForestModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, LearnerError> {
        if x.ncols() != self.feature_names.len() {
            return Err(LearnerError::SchemaMismatch {
                expected: self.feature_names.len(),
                got: x.ncols(),
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok((0..x.nrows())
            .map(|i| {
                self.trees
                    .iter()
                    .map(|t| t.predict_row(|j| x[(i, j)]))
                    .sum::<f64>()
                    / n_trees
            })
            .collect())
    }
}
