//! Ridge least squares and ridge logistic regression on a design matrix of
//! distances, plus cross-validated selection of the penalty weight.
//!
//! Both models penalize `lambda * sum(beta_j^2)` and leave the intercept
//! unpenalized. Rows of the design matrix are labeled real images and
//! columns are synthetic images.

mod cv;
mod logistic;
mod ridge;

pub use cv::{
    cross_validate_lambda, cross_validate_lambda_with, lambda_grid, lambda_max, stratified_folds, CvOptions,
    CvScore, LambdaPath,
};
pub(crate) use cv::{fit_model, split as cv_split};
pub use logistic::{
    log1pexp, logistic_loglik, penalized_gradient, penalized_loglik, ridge_logistic_fit, ridge_logistic_fit_traced,
    ridge_logistic_fit_with, sigmoid, Iterate,
};
pub use ridge::{ridge_least_squares, ridge_least_squares_with};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::GlmError;

/// Which penalized model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RidgeLs,
    #[default]
    RidgeLogistic,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ridge_ls" => Ok(ModelKind::RidgeLs),
            "ridge_logistic" => Ok(ModelKind::RidgeLogistic),
            other => Err(format!("expected ridge_ls or ridge_logistic, got `{other}`")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::RidgeLs => "ridge_ls",
            ModelKind::RidgeLogistic => "ridge_logistic",
        })
    }
}

/// Distance features `x` (n x p) and binary responses `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    y: Vec<u8>,
    pub real_ids: Vec<String>,
    pub synthetic_ids: Vec<String>,
}

impl DesignMatrix {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<u8>,
        real_ids: Vec<String>,
        synthetic_ids: Vec<String>,
    ) -> Result<Self, GlmError> {
        let d = Self::unchecked(x, y, real_ids, synthetic_ids)?;
        if !d.y.contains(&0) || !d.y.contains(&1) {
            return Err(GlmError::Design("y must contain both classes".into()));
        }
        Ok(d)
    }

    /// Design matrix with generated ids, for tests and simulations.
    pub fn from_parts(x: DMatrix<f64>, y: Vec<u8>) -> Result<Self, GlmError> {
        let real_ids = (0..x.nrows()).map(|i| format!("r{i}")).collect();
        let synthetic_ids = (0..x.ncols()).map(|j| format!("s{j}")).collect();
        Self::new(x, y, real_ids, synthetic_ids)
    }

    /// Shape and value checks only; validation folds may hold a single class.
    fn unchecked(
        x: DMatrix<f64>,
        y: Vec<u8>,
        real_ids: Vec<String>,
        synthetic_ids: Vec<String>,
    ) -> Result<Self, GlmError> {
        if x.nrows() != y.len() || real_ids.len() != y.len() {
            return Err(GlmError::Design(format!(
                "{} rows, {} responses, {} real ids",
                x.nrows(),
                y.len(),
                real_ids.len()
            )));
        }
        if synthetic_ids.len() != x.ncols() {
            return Err(GlmError::Design(format!(
                "{} columns but {} synthetic ids",
                x.ncols(),
                synthetic_ids.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(GlmError::Design(format!("entry {v} is not a finite nonnegative distance")));
        }
        if let Some(v) = y.iter().find(|&&v| v > 1) {
            return Err(GlmError::Design(format!("response {v} outside {{0,1}}")));
        }
        Ok(Self {
            x,
            y,
            real_ids,
            synthetic_ids,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn y_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.y.len(), self.y.iter().map(|&v| v as f64))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.n() as f64
    }

    /// Copy with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let x = self.x.select_rows(rows);
        DesignMatrix {
            x,
            y: rows.iter().map(|&r| self.y[r]).collect(),
            real_ids: rows.iter().map(|&r| self.real_ids[r].clone()).collect(),
            synthetic_ids: self.synthetic_ids.clone(),
        }
    }

    /// Copy with the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
            real_ids: self.real_ids.clone(),
            synthetic_ids: cols.iter().map(|&c| self.synthetic_ids[c].clone()).collect(),
        }
    }

    /// Copy with responses recoded `y -> 1 - y`.
    pub fn flipped(&self) -> DesignMatrix {
        DesignMatrix {
            y: self.y.iter().map(|&v| 1 - v).collect(),
            ..self.clone()
        }
    }
}

/// Solver settings shared by both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Gradient infinity-norm below which a fit counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Z-score feature columns before fitting; coefficients are reported on
    /// the raw scale either way.
    pub standardize: bool,
    /// Ridge least squares only: include an unpenalized intercept.
    pub fit_intercept: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
            standardize: false,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub model: ModelKind,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity-norm of the objective gradient at the returned parameters,
    /// intercept included.
    pub final_gradient_norm: f64,
    /// Penalized residual sum of squares (least squares, minimized) or
    /// penalized log-likelihood (logistic, maximized).
    pub objective: f64,
}

impl RidgeFit {
    pub fn linear_predictor(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept + row.into_iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    /// Linear predictor for every row of `x`.
    pub fn predict_linear(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.linear_predictor(x.row(i).iter().copied()))
            .collect()
    }

    /// Predicted probabilities for logistic fits, fitted values for least squares.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let eta = self.predict_linear(x);
        match self.model {
            ModelKind::RidgeLogistic => eta.into_iter().map(sigmoid).collect(),
            ModelKind::RidgeLs => eta,
        }
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<(), GlmError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(GlmError::Lambda(lambda));
    }
    Ok(())
}

/// Column means and standard deviations used for z-scoring. Constant columns
/// keep scale 1.
pub(crate) struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn of(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j])
    }

    /// Maps `(intercept, beta)` fitted on scaled columns back to raw columns.
    pub fn unscale(&self, intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let raw: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = raw.iter().zip(&self.mean).map(|(b, m)| b * m).sum();
        (intercept - shift, raw)
    }
}

/// Symmetric positive-definite solve, or `None` when the matrix is singular
/// to working precision.
pub(crate) fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !min_pivot.is_finite() || !max_diag.is_finite() || min_pivot <= 1e-13 * max_diag.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(chol.solve(b))
}

pub(crate) fn inf_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
