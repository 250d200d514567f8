use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{log1pexp, ridge_logistic_fit_traced};
use super::ridge::ridge_least_squares_with;
use super::{DesignMatrix, FitOptions, ModelKind, RidgeFit};
use crate::error::GlmError;

/// Smallest grid value relative to `lambda_max`.
const GRID_SPAN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub fit: FitOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_size: 50,
            seed: 0,
            model: ModelKind::RidgeLogistic,
            fit: FitOptions::default(),
        }
    }
}

/// Validation deviance at one grid point, averaged over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    /// Descending.
    pub grid: Vec<f64>,
    pub cv_scores: Vec<CvScore>,
    pub chosen: f64,
    pub folds: usize,
    /// Fold fits that hit the iteration cap; their deviances are still used.
    pub unconverged_fits: usize,
}

/// Assigns each observation a fold in `0..folds`.
///
/// Observations are visited in one seeded random order and dealt round-robin
/// within their class, so every fold receives `floor` or `ceil` of each
/// class's share and swapping the class coding leaves the split unchanged.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>, GlmError> {
    if folds < 2 {
        return Err(GlmError::Folds(format!("need at least 2 folds, got {folds}")));
    }
    if y.len() < folds {
        return Err(GlmError::Folds(format!("{} observations for {folds} folds", y.len())));
    }
    for class in [0u8, 1] {
        let count = y.iter().filter(|&&v| v == class).count();
        if count < folds {
            return Err(GlmError::Folds(format!(
                "class {class} has {count} observations, fewer than {folds} folds, so some fold would lack it"
            )));
        }
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut next = [0usize; 2];
    let mut assignment = vec![0; y.len()];
    for i in order {
        let c = y[i] as usize;
        assignment[i] = next[c] % folds;
        next[c] += 1;
    }
    Ok(assignment)
}

/// `max_j |x_j . (y - mean(y))|`, falling back to 1 when every column is
/// orthogonal to the centered response.
pub fn lambda_max(d: &DesignMatrix) -> f64 {
    let ybar = d.mean_y();
    let value = d
        .x()
        .column_iter()
        .map(|col| col.iter().zip(d.y()).map(|(x, &y)| x * (y as f64 - ybar)).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if value > 0.0 && value.is_finite() {
        value
    } else {
        1.0
    }
}

/// `grid_size` values log-spaced from `lambda_max` down to `1e-4 * lambda_max`.
pub fn lambda_grid(d: &DesignMatrix, grid_size: usize) -> Vec<f64> {
    let top = lambda_max(d);
    match grid_size {
        0 => Vec::new(),
        1 => vec![top],
        g => (0..g)
            .map(|k| top * GRID_SPAN.powf(k as f64 / (g - 1) as f64))
            .collect(),
    }
}

pub(crate) fn fit_model(d: &DesignMatrix, lambda: f64, model: ModelKind, opts: &FitOptions) -> Result<RidgeFit, GlmError> {
    match model {
        ModelKind::RidgeLs => ridge_least_squares_with(d, lambda, opts),
        ModelKind::RidgeLogistic => ridge_logistic_fit_traced(d, lambda, opts).map(|(fit, _)| fit),
    }
}

/// Mean per-observation deviance of `fit` on `d`: binomial deviance for the
/// logistic model, squared error for least squares.
pub(crate) fn deviance(fit: &RidgeFit, d: &DesignMatrix) -> f64 {
    let eta = fit.predict_linear(d.x());
    let total: f64 = eta
        .iter()
        .zip(d.y())
        .map(|(&e, &y)| match fit.model {
            ModelKind::RidgeLogistic => -2.0 * (y as f64 * e - log1pexp(e)),
            ModelKind::RidgeLs => (y as f64 - e).powi(2),
        })
        .sum();
    total / d.n() as f64
}

/// Train/validation row indices for fold `k`.
pub(crate) fn split(assignment: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != k)
}

/// [`cross_validate_lambda_with`] using seed 0 and default solver settings.
pub fn cross_validate_lambda(d: &DesignMatrix, folds: usize, grid_size: usize) -> Result<LambdaPath, GlmError> {
    cross_validate_lambda_with(
        d,
        &CvOptions {
            folds,
            grid_size,
            ..CvOptions::default()
        },
    )
}

/// K-fold stratified cross-validation over [`lambda_grid`]. The chosen value
/// minimizes mean validation deviance; exact ties go to the larger lambda.
pub fn cross_validate_lambda_with(d: &DesignMatrix, opts: &CvOptions) -> Result<LambdaPath, GlmError> {
    if opts.grid_size == 0 {
        return Err(GlmError::Folds("lambda grid is empty".into()));
    }
    let assignment = stratified_folds(d.y(), opts.folds, opts.seed)?;
    let grid = lambda_grid(d, opts.grid_size);
    let parts: Vec<(DesignMatrix, DesignMatrix)> = (0..opts.folds)
        .map(|k| {
            let (train, valid) = split(&assignment, k);
            (d.select_rows(&train), d.select_rows(&valid))
        })
        .collect();

    // Every (fold, lambda) fit is independent; results land in fixed slots.
    let cells: Vec<(f64, bool)> = (0..opts.folds * grid.len())
        .into_par_iter()
        .map(|cell| {
            let (k, g) = (cell / grid.len(), cell % grid.len());
            let (train, valid) = &parts[k];
            let fit = fit_model(train, grid[g], opts.model, &opts.fit)?;
            Ok((deviance(&fit, valid), fit.converged))
        })
        .collect::<Result<_, GlmError>>()?;

    let unconverged_fits = cells.iter().filter(|(_, ok)| !ok).count();
    let folds = opts.folds as f64;
    let cv_scores: Vec<CvScore> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let devs: Vec<f64> = (0..opts.folds).map(|k| cells[k * grid.len() + g].0).collect();
            let mean = devs.iter().sum::<f64>() / folds;
            let var = devs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (folds - 1.0);
            CvScore {
                lambda,
                mean,
                std_error: (var / folds).sqrt(),
            }
        })
        .collect();

    let mut best = 0;
    for (g, s) in cv_scores.iter().enumerate() {
        if s.mean < cv_scores[best].mean {
            best = g;
        }
    }
    Ok(LambdaPath {
        chosen: grid[best],
        grid,
        cv_scores,
        folds: opts.folds,
        unconverged_fits,
    })
}
