use nalgebra::{DMatrix, DVector};

use super::{check_lambda, inf_norm, spd_solve, DesignMatrix, FitOptions, ModelKind, RidgeFit, Scaling};
use crate::error::GlmError;

/// Minimizes `sum (y_i - b0 - x_i.b)^2 + lambda * sum b_j^2` in closed form.
pub fn ridge_least_squares(d: &DesignMatrix, lambda: f64) -> Result<RidgeFit, GlmError> {
    ridge_least_squares_with(d, lambda, &FitOptions::default())
}

/// With an intercept, features and response are centered so the intercept
/// drops out of the penalized normal equations and is recovered afterwards
/// as `mean(y) - mean(x).b`.
pub fn ridge_least_squares_with(d: &DesignMatrix, lambda: f64, opts: &FitOptions) -> Result<RidgeFit, GlmError> {
    check_lambda(lambda)?;
    let (n, p) = (d.n(), d.p());
    let y = d.y_f64();
    let scaling = opts.standardize.then(|| Scaling::of(d.x()));
    let x = match &scaling {
        Some(s) => s.apply(d.x()),
        None => d.x().clone(),
    };

    let (xc, yc, x_mean, y_mean) = if opts.fit_intercept {
        let x_mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n as f64).collect();
        let y_mean = y.sum() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
        let yc = y.map(|v| v - y_mean);
        (xc, yc, x_mean, y_mean)
    } else {
        (x.clone(), y.clone(), vec![0.0; p], 0.0)
    };

    let beta = if p == 0 {
        DVector::zeros(0)
    } else {
        let mut gram = xc.transpose() * &xc;
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let rhs = xc.transpose() * &yc;
        spd_solve(gram, &rhs).ok_or(GlmError::Singular(lambda))?
    };
    let intercept = if opts.fit_intercept {
        y_mean - x_mean.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>()
    } else {
        0.0
    };

    let resid = DVector::from_fn(n, |i, _| y[i] - intercept - x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>());
    let objective = resid.norm_squared() + lambda * beta.norm_squared();
    let grad_beta = (x.transpose() * &resid) * -2.0 + &beta * (2.0 * lambda);
    let grad_intercept = if opts.fit_intercept { -2.0 * resid.sum() } else { 0.0 };
    let final_gradient_norm = inf_norm(std::iter::once(grad_intercept).chain(grad_beta.iter().copied()));

    let (intercept, coefficients) = match &scaling {
        Some(s) => s.unscale(intercept, beta.as_slice()),
        None => (intercept, beta.as_slice().to_vec()),
    };
    Ok(RidgeFit {
        model: ModelKind::RidgeLs,
        intercept,
        coefficients,
        lambda,
        converged: true,
        iterations: 1,
        final_gradient_norm,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian elimination with partial pivoting on `[1 X]^T [1 X] theta = [1 X]^T y`.
    fn brute_normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let (n, p) = (x.nrows(), x.ncols());
        let a = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
        let dim = p + 1;
        let mut m = vec![vec![0.0; dim + 1]; dim];
        for r in 0..dim {
            for c in 0..dim {
                m[r][c] = (0..n).map(|i| a(i, r) * a(i, c)).sum();
            }
            m[r][dim] = (0..n).map(|i| a(i, r) * y[i]).sum();
        }
        for col in 0..dim {
            let piv = (col..dim).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            for r in 0..dim {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=dim {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        (0..dim).map(|r| m[r][dim] / m[r][r]).collect()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..5.0));
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        DesignMatrix::from_parts(x, y).unwrap()
    }

    #[test]
    fn identity_design_without_intercept() {
        let d = DesignMatrix::from_parts(DMatrix::identity(2, 2), vec![1, 0]).unwrap();
        let opts = FitOptions {
            fit_intercept: false,
            ..FitOptions::default()
        };
        let fit = ridge_least_squares_with(&d, 1.0, &opts).unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 1e-15);
        assert!(fit.coefficients[1].abs() < 1e-15);
        assert_eq!(fit.intercept, 0.0);
        // (1 - 0.5)^2 + 0 + 1 * 0.25
        assert!((fit.objective - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_lambda_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = random_design(&mut rng, 30, 6);
            let fit = ridge_least_squares(&d, 0.0).unwrap();
            let y: Vec<f64> = d.y().iter().map(|&v| v as f64).collect();
            let oracle = brute_normal_equations(d.x(), &y);
            assert!((fit.intercept - oracle[0]).abs() < 1e-8);
            for (b, o) in fit.coefficients.iter().zip(&oracle[1..]) {
                assert!((b - o).abs() < 1e-8, "{b} vs {o}");
            }
            assert!(fit.final_gradient_norm < 1e-8);
        }
    }

    #[test]
    fn huge_lambda_collapses_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_design(&mut rng, 25, 40);
        let fit = ridge_least_squares(&d, 1e12).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.abs() < 1e-6));
        assert!((fit.intercept - d.mean_y()).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_at_zero_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_design(&mut rng, 5, 8);
        assert_eq!(ridge_least_squares(&d, 0.0), Err(GlmError::Singular(0.0)));
        assert!(ridge_least_squares(&d, 0.1).is_ok());
        assert_eq!(ridge_least_squares(&d, -1.0), Err(GlmError::Lambda(-1.0)));
    }

    #[test]
    fn standardized_fit_keeps_zero_lambda_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_design(&mut rng, 40, 5);
        let raw = ridge_least_squares(&d, 0.0).unwrap();
        let opts = FitOptions {
            standardize: true,
            ..FitOptions::default()
        };
        let z = ridge_least_squares_with(&d, 0.0, &opts).unwrap();
        assert!((raw.intercept - z.intercept).abs() < 1e-9);
        for (a, b) in raw.coefficients.iter().zip(&z.coefficients) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
