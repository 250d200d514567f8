//! Built-in oracle checks run by `fairlabel selftest`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit;
use crate::error::TransportError;
use crate::glm::{self, DesignMatrix, FitOptions};
use crate::histogram::{bin_distance_costs, CostMatrix, Histogram};
use crate::transport::{self, TransportPlan};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub type ExactSolver = fn(&Histogram, &Histogram, &CostMatrix) -> Result<TransportPlan, TransportError>;

/// Implementations under test; swapped out to confirm the checks can fail.
#[derive(Clone, Copy)]
pub struct Solvers {
    pub emd_exact: ExactSolver,
}

impl Default for Solvers {
    fn default() -> Self {
        Self {
            emd_exact: transport::emd_exact,
        }
    }
}

fn random_histogram(rng: &mut ChaCha8Rng, bins: usize) -> Histogram {
    let counts: Vec<f64> = (0..bins)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    Histogram::from_counts(&counts).unwrap_or_else(|_| {
        let mut c = vec![0.0; bins];
        c[0] = 1.0;
        Histogram::new(c).expect("unit mass")
    })
}

/// Closed-form 1D EMD against the network-simplex LP on random pairs.
pub fn check_emd_equivalence(solvers: &Solvers, pairs: usize, bins: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE3D);
    let cost = bin_distance_costs(bins, 1.0).expect("bins >= 2");
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for _ in 0..pairs {
        let (q, p) = (random_histogram(&mut rng, bins), random_histogram(&mut rng, bins));
        let closed = transport::emd_1d(&q, &p).expect("same bins");
        match (solvers.emd_exact)(&q, &p, &cost) {
            Ok(plan) => worst = worst.max((plan.total_cost - closed).abs()),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    CheckOutcome {
        name: "emd_1d_vs_lp",
        passed: failure.is_none() && worst < 1e-9,
        detail: failure.unwrap_or_else(|| format!("{pairs} pairs, {bins} bins, max |diff| = {worst:.3e}")),
    }
}

/// Largest relative mismatch between the analytic gradient and central
/// differences of the penalized log-likelihood at one point.
pub fn gradient_mismatch(d: &DesignMatrix, lambda: f64, beta0: f64, beta: &[f64], h: f64) -> f64 {
    let analytic = glm::penalized_gradient(d, beta0, beta, lambda);
    let mut worst: f64 = 0.0;
    for k in 0..=beta.len() {
        let eval = |delta: f64| {
            if k == 0 {
                glm::penalized_loglik(d, beta0 + delta, beta, lambda)
            } else {
                let mut b = beta.to_vec();
                b[k - 1] += delta;
                glm::penalized_loglik(d, beta0, &b, lambda)
            }
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max((numeric - analytic[k]).abs() / analytic[k].abs().max(1.0));
    }
    worst
}

/// Fits a seeded ridge logistic problem and compares its gradient with
/// finite differences along the iterate path.
pub fn check_gradient() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let (n, p) = (40, 12);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..4.0));
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let d = DesignMatrix::from_parts(x, y).expect("both classes");
    let lambda = 0.3;
    let (fit, trace) = match glm::ridge_logistic_fit_traced(&d, lambda, &FitOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            return CheckOutcome {
                name: "gradient_vs_finite_differences",
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    let worst = trace
        .iter()
        .map(|it| gradient_mismatch(&d, lambda, it.intercept, &it.coefficients, 1e-5))
        .fold(0.0, f64::max);
    CheckOutcome {
        name: "gradient_vs_finite_differences",
        passed: fit.converged && fit.final_gradient_norm < 1e-8 && worst < 1e-6,
        detail: format!(
            "{} iterates, max relative error {worst:.3e}, final gradient {:.3e}",
            trace.len(),
            fit.final_gradient_norm
        ),
    }
}

/// Log-space binomial tails against exact integer summation, all `n <= 120`.
pub fn check_sign_test() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for n in 1u32..=120 {
        let mut choose: u128 = 1;
        let mut cumulative: u128 = 0;
        for k in 0..=n / 2 {
            if k > 0 {
                choose = choose * (n - k + 1) as u128 / k as u128;
            }
            cumulative += choose;
            let exact = cumulative as f64 / 2f64.powi(n as i32);
            let got = audit::binomial_half_cdf(n as u64, k as u64);
            worst = worst.max((got - exact).abs() / exact);
        }
    }
    CheckOutcome {
        name: "sign_test_exact_tails",
        passed: worst < 1e-12,
        detail: format!("n <= 120, max relative error {worst:.3e}"),
    }
}

/// Trapezoidal ROC area against the Mann-Whitney statistic with ties.
pub fn check_roc() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0C);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(4..80);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let curve = audit::roc_auc(&scores, &labels).expect("valid inputs");
        worst = worst.max((curve.auc - curve.auc_mann_whitney).abs());
    }
    CheckOutcome {
        name: "roc_trapezoid_vs_mann_whitney",
        passed: worst < 1e-12,
        detail: format!("50 tied samples, max |diff| = {worst:.3e}"),
    }
}

pub fn run_checks(solvers: &Solvers) -> Vec<CheckOutcome> {
    vec![
        check_emd_equivalence(solvers, 200, 64),
        check_gradient(),
        check_sign_test(),
        check_roc(),
    ]
}

pub fn run_all() -> Vec<CheckOutcome> {
    run_checks(&Solvers::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perturbed(q: &Histogram, p: &Histogram, c: &CostMatrix) -> Result<TransportPlan, TransportError> {
        let mut plan = transport::emd_exact(q, p, c)?;
        plan.total_cost *= 1.0 + 1e-6;
        plan.total_cost += 1e-6;
        Ok(plan)
    }

    #[test]
    fn all_checks_pass() {
        let out = run_all();
        assert!(out.len() >= 3);
        for c in &out {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn perturbed_solver_fails_equivalence() {
        let out = check_emd_equivalence(&Solvers { emd_exact: perturbed }, 20, 16);
        assert!(!out.passed);
    }
}
