//! Elastic-net linear regression by cyclic coordinate descent.
//!
//! Minimises
//!
//! ```text
//! (1/2n) ‖y − Xβ − b‖² + λ (α‖β‖₁ + (1−α)/2 ‖β‖²)
//! ```
//!
//! with the intercept `b` unpenalised. Inputs are expected to be standardized;
//! [`LinearModel`] handles that for raw feature matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::dataset::Standardizer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnetParams {
    /// L1 share of the penalty, in `[0, 1]`.
    pub alpha: f64,
    /// Overall penalty strength, `>= 0`.
    pub lambda: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-7
}

impl EnetParams {
    pub fn new(alpha: f64, lambda: f64) -> Self {
        EnetParams {
            alpha,
            lambda,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LearnerError::InvalidParameter(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LearnerError::InvalidParameter(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(LearnerError::InvalidParameter("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnetFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each full sweep.
    pub objective_trace: Vec<f64>,
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

pub fn elastic_net_objective(
    x: &DMatrix<f64>,
    y: &[f64],
    intercept: f64,
    beta: &[f64],
    alpha: f64,
    lambda: f64,
) -> f64 {
    let n = y.len() as f64;
    let mut rss = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let fit: f64 = intercept + beta.iter().enumerate().map(|(j, b)| x[(i, j)] * b).sum::<f64>();
        rss += (yi - fit) * (yi - fit);
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    rss / (2.0 * n) + lambda * (alpha * l1 + (1.0 - alpha) / 2.0 * l2)
}

pub(crate) fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<(), LearnerError> {
    if x.nrows() != y.len() {
        return Err(LearnerError::DimensionMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(LearnerError::TooFewSamples(y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteInput);
    }
    Ok(())
}

/// Fits the elastic net on an already-standardized design.
///
/// Non-convergence within `max_iter` sweeps is reported through
/// `EnetFit::converged`, not as an error.
pub fn fit_elastic_net(x: &DMatrix<f64>, y: &[f64], params: &EnetParams) -> Result<EnetFit, LearnerError> {
    check_inputs(x, y)?;
    params.validate()?;
    let (n, p) = x.shape();
    let nf = n as f64;
    let l1 = params.lambda * params.alpha;
    let l2 = params.lambda * (1.0 - params.alpha);

    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut intercept = y.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let col = x.column(j);
            let old = beta[j];
            let denom = col_sq[j] + l2;
            let new = if denom > 0.0 {
                let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * old;
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        let shift = resid.iter().sum::<f64>() / nf;
        if shift != 0.0 {
            intercept += shift;
            resid.iter_mut().for_each(|r| *r -= shift);
            max_change = max_change.max(shift.abs());
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let pen = l1 * beta.iter().map(|b| b.abs()).sum::<f64>()
            + l2 / 2.0 * beta.iter().map(|b| b * b).sum::<f64>();
        trace.push(rss / (2.0 * nf) + pen);
        if max_change < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "elastic net did not converge in {} sweeps (alpha={}, lambda={})",
            params.max_iter,
            params.alpha,
            params.lambda
        );
    }
    Ok(EnetFit {
        intercept,
        coefficients: beta,
        converged,
        iterations,
        objective_trace: trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub hyperparameters: EnetParams,
    pub feature_names: Vec<String>,
    pub standardization: Standardizer,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    /// Standardizes `x` with its own statistics, then fits.
    pub fn train(
        x: &DMatrix<f64>,
        y: &[f64],
        feature_names: &[String],
        indicator: &[bool],
        params: &EnetParams,
    ) -> Result<Self, LearnerError> {
        if feature_names.len() != x.ncols() {
            return Err(LearnerError::SchemaMismatch {
                expected: x.ncols(),
                got: feature_names.len(),
            });
        }
        check_inputs(x, y)?;
        let standardization = Standardizer::fit(x, indicator);
        let fit = fit_elastic_net(&standardization.transform(x), y, params)?;
        Ok(LinearModel {
            hyperparameters: *params,
            feature_names: feature_names.to_vec(),
            standardization,
            intercept: fit.intercept,
            coefficients: fit.coefficients,
            converged: fit.converged,
            iterations: fit.iterations,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, LearnerError> {
        if x.ncols() != self.coefficients.len() {
            return Err(LearnerError::SchemaMismatch {
                expected: self.coefficients.len(),
                got: x.ncols(),
            });
        }
        let z = self.standardization.transform(x);
        Ok((0..z.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, b)| z[(i, j)] * b)
                        .sum::<f64>()
            })
            .collect())
    }
}
