use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{check_lambda, inf_norm, spd_solve, DesignMatrix, FitOptions, ModelKind, RidgeFit, Scaling};
use crate::error::GlmError;

/// Linear predictors beyond this magnitude at `lambda = 0` mean the fitted
/// probabilities have saturated, i.e. the classes are separable.
const SEPARATION_ETA: f64 = 25.0;

/// `log(1 + e^eta)` without overflow.
#[inline]
pub fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn linear_predictor(x: &DMatrix<f64>, beta0: f64, beta: &[f64]) -> DVector<f64> {
    let mut eta = if beta.is_empty() {
        DVector::zeros(x.nrows())
    } else {
        x * DVector::from_column_slice(beta)
    };
    eta.add_scalar_mut(beta0);
    eta
}

/// `sum [y_i eta_i - log(1 + e^eta_i)]` with `eta_i = beta0 + x_i.beta`.
pub fn logistic_loglik(d: &DesignMatrix, beta0: f64, beta: &[f64]) -> f64 {
    loglik_raw(d.x(), d.y(), beta0, beta)
}

fn loglik_raw(x: &DMatrix<f64>, y: &[u8], beta0: f64, beta: &[f64]) -> f64 {
    linear_predictor(x, beta0, beta)
        .iter()
        .zip(y)
        .map(|(&eta, &yi)| if yi == 1 { -log1pexp(-eta) } else { -log1pexp(eta) })
        .sum()
}

/// Log-likelihood minus `lambda * sum beta_j^2`; the intercept is not penalized.
pub fn penalized_loglik(d: &DesignMatrix, beta0: f64, beta: &[f64], lambda: f64) -> f64 {
    logistic_loglik(d, beta0, beta) - lambda * beta.iter().map(|b| b * b).sum::<f64>()
}

fn gradient_raw(x: &DMatrix<f64>, y: &[u8], beta0: f64, beta: &[f64], lambda: f64) -> Vec<f64> {
    let eta = linear_predictor(x, beta0, beta);
    let resid = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &yi)| yi as f64 - sigmoid(e)));
    let mut grad = Vec::with_capacity(beta.len() + 1);
    grad.push(resid.sum());
    let xr = x.transpose() * &resid;
    grad.extend(xr.iter().zip(beta).map(|(g, b)| g - 2.0 * lambda * b));
    grad
}

/// Gradient of [`penalized_loglik`], intercept first.
pub fn penalized_gradient(d: &DesignMatrix, beta0: f64, beta: &[f64], lambda: f64) -> Vec<f64> {
    gradient_raw(d.x(), d.y(), beta0, beta, lambda)
}

/// One accepted Newton iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iterate {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub halvings: usize,
}

pub fn ridge_logistic_fit(d: &DesignMatrix, lambda: f64) -> Result<RidgeFit, GlmError> {
    ridge_logistic_fit_with(d, lambda, &FitOptions::default())
}

/// Fails with [`GlmError::NoConvergence`] if the tolerance was not reached.
pub fn ridge_logistic_fit_with(d: &DesignMatrix, lambda: f64, opts: &FitOptions) -> Result<RidgeFit, GlmError> {
    let (fit, _) = ridge_logistic_fit_traced(d, lambda, opts)?;
    if !fit.converged {
        return Err(GlmError::NoConvergence {
            iterations: fit.iterations,
            gradient_norm: fit.final_gradient_norm,
        });
    }
    Ok(fit)
}

/// Newton-Raphson (IRLS) on the penalized log-likelihood.
///
/// Each step solves `(A'WA + 2 lambda I*) delta = A'(y - pi) - 2 lambda beta*`
/// where `A = [1 X]` and `I*`, `beta*` are zero at the intercept, then halves
/// the step until the objective does not decrease. Returns the fit (possibly
/// unconverged) together with the accepted iterates, starting point first.
pub fn ridge_logistic_fit_traced(
    d: &DesignMatrix,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(RidgeFit, Vec<Iterate>), GlmError> {
    check_lambda(lambda)?;
    let scaling = opts.standardize.then(|| Scaling::of(d.x()));
    let x = match &scaling {
        Some(s) => s.apply(d.x()),
        None => d.x().clone(),
    };
    let y = d.y();
    let p = x.ncols();
    let penalty = |beta: &[f64]| lambda * beta.iter().map(|b| b * b).sum::<f64>();
    let objective = |b0: f64, beta: &[f64]| loglik_raw(&x, y, b0, beta) - penalty(beta);

    let mut b0 = 0.0;
    let mut beta = vec![0.0; p];
    let mut obj = objective(b0, &beta);
    let mut grad = gradient_raw(&x, y, b0, &beta, lambda);
    let mut gnorm = inf_norm(grad.iter().copied());
    let mut trace = vec![Iterate {
        intercept: b0,
        coefficients: beta.clone(),
        objective: obj,
        gradient_norm: gnorm,
        halvings: 0,
    }];
    let mut converged = gnorm < opts.tolerance;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let eta = linear_predictor(&x, b0, &beta);
        let w: Vec<f64> = eta
            .iter()
            .map(|&e| {
                let pi = sigmoid(e);
                pi * (1.0 - pi)
            })
            .collect();
        let dim = p + 1;
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let row = x.row(i);
            hess[(0, 0)] += wi;
            for a in 0..p {
                let wa = wi * row[a];
                hess[(0, a + 1)] += wa;
                for b in a..p {
                    hess[(a + 1, b + 1)] += wa * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 1..dim {
            hess[(j, j)] += 2.0 * lambda;
        }
        let rhs = DVector::from_column_slice(&grad);
        let Some(step) = spd_solve(hess.clone(), &rhs).or_else(|| hess.lu().solve(&rhs)) else {
            if lambda == 0.0 {
                return Err(GlmError::Singular(lambda));
            }
            break;
        };

        // Near the optimum the gain per step falls below the resolution of the
        // objective; changes within rounding count as no decrease.
        let slack = 1e-13 * (1.0 + obj.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for halvings in 0..=opts.max_halvings {
            let nb0 = b0 + t * step[0];
            let nbeta: Vec<f64> = beta.iter().zip(step.iter().skip(1)).map(|(b, s)| b + t * s).collect();
            let nobj = objective(nb0, &nbeta);
            if nobj >= obj - slack {
                accepted = Some((nb0, nbeta, nobj, halvings));
                break;
            }
            t *= 0.5;
        }
        let Some((nb0, nbeta, nobj, halvings)) = accepted else {
            // No ascent available at working precision.
            break;
        };
        b0 = nb0;
        beta = nbeta;
        obj = nobj;
        grad = gradient_raw(&x, y, b0, &beta, lambda);
        gnorm = inf_norm(grad.iter().copied());
        trace.push(Iterate {
            intercept: b0,
            coefficients: beta.clone(),
            objective: obj,
            gradient_norm: gnorm,
            halvings,
        });
        converged = gnorm < opts.tolerance;
    }

    if lambda == 0.0 && p > 0 {
        let eta = linear_predictor(&x, b0, &beta);
        if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
            return Err(GlmError::Separable);
        }
    }

    let (intercept, coefficients) = match &scaling {
        Some(s) => s.unscale(b0, &beta),
        None => (b0, beta),
    };
    let fit = RidgeFit {
        model: ModelKind::RidgeLogistic,
        intercept,
        coefficients,
        lambda,
        converged,
        iterations,
        final_gradient_norm: gnorm,
        objective: obj,
    };
    Ok((fit, trace))
}
