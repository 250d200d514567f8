//! Bias audit of label counts and ROC evaluation of held-out predictions.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, GlmError};
use crate::glm::{self, CvOptions, DesignMatrix, ModelKind};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Biased,
    Unbiased,
}

/// Exact sign test of two counts against `Binomial(n, 1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub count_a: u64,
    pub count_b: u64,
    pub n: u64,
    pub p_two_tailed: f64,
    pub p_one_tailed: f64,
    pub alpha: f64,
    pub verdict: Verdict,
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`, summing probabilities built in
/// log space so large `n` neither overflows nor underflows.
pub fn binomial_half_cdf(n: u64, k: u64) -> f64 {
    if k >= n {
        return 1.0;
    }
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut log_terms = Vec::with_capacity(k as usize + 1);
    let mut ln_choose = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        log_terms.push(ln_choose + ln_half_n);
    }
    // Terms increase with i up to n/2, so the last one is the largest.
    let top = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = log_terms.iter().map(|t| (t - top).exp()).sum();
    (top + scaled.ln()).exp().min(1.0)
}

pub fn sign_test(count_a: u64, count_b: u64) -> Result<AuditResult, AuditError> {
    sign_test_at(count_a, count_b, DEFAULT_ALPHA)
}

/// One-tailed p is `P(X <= min(a, b))`; two-tailed doubles it, capped at 1.
pub fn sign_test_at(count_a: u64, count_b: u64, alpha: f64) -> Result<AuditResult, AuditError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::Alpha(alpha));
    }
    let n = count_a + count_b;
    if n == 0 {
        return Err(AuditError::NoObservations);
    }
    let p_one_tailed = binomial_half_cdf(n, count_a.min(count_b));
    let p_two_tailed = (2.0 * p_one_tailed).min(1.0);
    Ok(AuditResult {
        count_a,
        count_b,
        n,
        p_two_tailed,
        p_one_tailed,
        alpha,
        verdict: if p_two_tailed < alpha {
            Verdict::Biased
        } else {
            Verdict::Unbiased
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0,0)` to `(1,1)`, one point per distinct threshold.
    pub points: Vec<RocPoint>,
    /// Trapezoidal area under `points`.
    pub auc: f64,
    /// Pair-counting estimate; equals `auc` up to rounding.
    pub auc_mann_whitney: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), AuditError> {
    if scores.len() != labels.len() {
        return Err(AuditError::Length(scores.len(), labels.len()));
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(AuditError::NonFinite(s));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AuditError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC from midranks: `(R_pos - P(P+1)/2) / (P N)`.
pub fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> Result<f64, AuditError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += order[start..end].iter().filter(|&&i| labels[i] == 1).count() as f64 * midrank;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC curve over all distinct score thresholds, tied scores moved together.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve, AuditError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if labels[order[end]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        start = end;
    }
    let auc = trapezoid(&points);
    Ok(RocCurve {
        points,
        auc,
        auc_mann_whitney: mann_whitney_auc(scores, labels)?,
    })
}

pub fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Out-of-fold predicted probabilities at a fixed lambda under the ridge
/// logistic model, paired with the true labels, in observation order.
pub fn cv_scores_for_roc(d: &DesignMatrix, lambda: f64, folds: usize) -> Result<Vec<(f64, u8)>, GlmError> {
    cv_scores_with(
        d,
        lambda,
        &CvOptions {
            folds,
            ..CvOptions::default()
        },
    )
}

/// Like [`cv_scores_for_roc`] but with the fold seed, model, and solver
/// settings taken from `opts`. Least-squares fits yield fitted values rather
/// than probabilities.
pub fn cv_scores_with(d: &DesignMatrix, lambda: f64, opts: &CvOptions) -> Result<Vec<(f64, u8)>, GlmError> {
    use rayon::prelude::*;
    let assignment = glm::stratified_folds(d.y(), opts.folds, opts.seed)?;
    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = (0..opts.folds)
        .into_par_iter()
        .map(|k| {
            let (train, valid) = glm::cv_split(&assignment, k);
            let fit = glm::fit_model(&d.select_rows(&train), lambda, opts.model, &opts.fit)?;
            let preds = fit.predict(d.select_rows(&valid).x());
            Ok((valid, preds))
        })
        .collect::<Result<_, GlmError>>()?;
    let mut scores = vec![(0.0, 0u8); d.n()];
    for (valid, preds) in per_fold {
        for (i, s) in valid.into_iter().zip(preds) {
            scores[i] = (s, d.y()[i]);
        }
    }
    debug_assert!(opts.model != ModelKind::RidgeLogistic || scores.iter().all(|(s, _)| (0.0..=1.0).contains(s)));
    Ok(scores)
}
