//! End-to-end labeling: distances from every real image to every synthetic
//! image form the design matrix, a ridge model is fitted on the real labels,
//! and each synthetic image takes the class indicated by its coefficient sign.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::audit::{self, AuditResult, RocCurve};
use crate::config::{Config, LambdaChoice, Parallelism, SignConvention};
use crate::dataset::{self, ImageRecord, Manifest, Role};
use crate::error::{Error, GlmError, LabelError, Result, Stage};
use crate::glm::{self, CvOptions, DesignMatrix, FitOptions, LambdaPath, ModelKind, RidgeFit};
use crate::histogram::{to_histogram, Histogram};
use crate::transport::pairwise_emd_1d;

/// Coefficients smaller than this in magnitude carry no sign.
pub const UNDETERMINED_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Positive,
    Undetermined,
}

impl Sign {
    pub fn of(coefficient: f64) -> Self {
        if coefficient.abs() < UNDETERMINED_THRESHOLD || coefficient.is_nan() {
            Sign::Undetermined
        } else if coefficient < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Negative => "negative",
            Sign::Positive => "positive",
            Sign::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub synthetic_id: String,
    pub coefficient: f64,
    pub sign: Sign,
    /// `None` when the sign is undetermined.
    pub assigned_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub attribute: String,
    pub entries: Vec<LabelEntry>,
    pub model_kind: ModelKind,
    pub lambda_used: f64,
    pub sign_convention: SignConvention,
    /// Reference class first, then positive class.
    pub counts: Vec<ClassCount>,
    pub undetermined: usize,
}

impl LabelReport {
    pub fn reference_count(&self) -> usize {
        self.counts[0].count
    }

    pub fn positive_count(&self) -> usize {
        self.counts[1].count
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("synthetic_id,coefficient,sign,assigned_class\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_escape(&e.synthetic_id),
                e.coefficient,
                e.sign.as_str(),
                csv_escape(e.assigned_class.as_deref().unwrap_or(""))
            ));
        }
        out
    }
}

pub(crate) fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn histograms(records: &[ImageRecord], bins: usize) -> Result<Vec<Histogram>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| to_histogram(r, bins).map_err(Error::from))
        .collect()
}

/// `x[i][j] = EMD(hist(real_i), hist(synthetic_j))` under `|i - j|` bin cost.
pub fn build_design_matrix(reals: &[ImageRecord], synthetics: &[ImageRecord], bins: usize) -> Result<DesignMatrix> {
    if reals.is_empty() {
        return Err(LabelError::NoReals.into());
    }
    if synthetics.is_empty() {
        return Err(LabelError::NoSynthetics.into());
    }
    let mut y = Vec::with_capacity(reals.len());
    for r in reals {
        match (r.role, r.label) {
            (Role::Real, Some(l)) if l <= 1 => y.push(l),
            _ => return Err(LabelError::Role(r.id.clone()).into()),
        }
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(LabelError::OneClass.into());
    }
    if let Some(s) = synthetics.iter().find(|s| s.role != Role::Synthetic) {
        return Err(LabelError::Role(s.id.clone()).into());
    }
    let real_h = histograms(reals, bins).map_err(|e| e.at(Stage::Histogram))?;
    let synth_h = histograms(synthetics, bins).map_err(|e| e.at(Stage::Histogram))?;
    let x = pairwise_emd_1d(&real_h, &synth_h).map_err(|e| Error::from(e).at(Stage::Transport))?;
    Ok(DesignMatrix::new(
        x,
        y,
        reals.iter().map(|r| r.id.clone()).collect(),
        synthetics.iter().map(|r| r.id.clone()).collect(),
    )?)
}

/// Maps each coefficient's sign onto a class name.
pub fn classify_by_sign(fit: &RidgeFit, manifest: &Manifest, convention: SignConvention) -> Result<LabelReport, LabelError> {
    if fit.coefficients.len() != manifest.n_synthetic() {
        return Err(LabelError::Length {
            fit: fit.coefficients.len(),
            manifest: manifest.n_synthetic(),
        });
    }
    let coding = &manifest.coding;
    let (negative, positive) = match convention {
        SignConvention::NegativeReference => (&coding.reference_class_name, &coding.positive_class_name),
        SignConvention::NegativePositive => (&coding.positive_class_name, &coding.reference_class_name),
    };
    let entries: Vec<LabelEntry> = manifest
        .synthetic_entries
        .iter()
        .zip(&fit.coefficients)
        .map(|(id, &b)| {
            let sign = Sign::of(b);
            LabelEntry {
                synthetic_id: id.clone(),
                coefficient: b,
                sign,
                assigned_class: match sign {
                    Sign::Negative => Some(negative.clone()),
                    Sign::Positive => Some(positive.clone()),
                    Sign::Undetermined => None,
                },
            }
        })
        .collect();
    let count = |name: &str| entries.iter().filter(|e| e.assigned_class.as_deref() == Some(name)).count();
    Ok(LabelReport {
        attribute: coding.attribute_name.clone(),
        counts: vec![
            ClassCount {
                class: coding.reference_class_name.clone(),
                count: count(&coding.reference_class_name),
            },
            ClassCount {
                class: coding.positive_class_name.clone(),
                count: count(&coding.positive_class_name),
            },
        ],
        undetermined: entries.iter().filter(|e| e.sign == Sign::Undetermined).count(),
        entries,
        model_kind: fit.model,
        lambda_used: fit.lambda,
        sign_convention: convention,
    })
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: LabelReport,
    pub fit: RidgeFit,
    /// Present when lambda was selected by cross-validation.
    pub path: Option<LambdaPath>,
    pub audit: AuditResult,
    pub roc: RocCurve,
    pub design: DesignMatrix,
    /// Fold count actually used, after capping at the smaller class size.
    pub folds: usize,
}

fn effective_folds(d: &DesignMatrix, requested: usize) -> Result<usize> {
    let smaller = d.y().iter().filter(|&&v| v == 0).count().min(d.y().iter().filter(|&&v| v == 1).count());
    if smaller < 2 {
        return Err(Error::from(GlmError::Folds(format!(
            "cross-validation needs at least 2 real images per class, smaller class has {smaller}"
        )))
        .at(Stage::CrossValidation));
    }
    if smaller < requested {
        warn!("using {smaller} folds instead of {requested}: smaller class has only {smaller} images");
    }
    Ok(requested.min(smaller))
}

/// Runs the pipeline on already-decoded images: reals first, then synthetics,
/// both in manifest order.
pub fn run_on_records(manifest: &Manifest, records: &[ImageRecord], config: &Config) -> Result<PipelineRun> {
    config.validate()?;
    let n = manifest.n_real();
    if records.len() != n + manifest.n_synthetic() {
        return Err(Error::from(LabelError::Length {
            fit: records.len().saturating_sub(n),
            manifest: manifest.n_synthetic(),
        })
        .at(Stage::Load));
    }
    let (reals, synthetics) = records.split_at(n);
    let design = build_design_matrix(reals, synthetics, config.bins).map_err(|e| e.at(Stage::Transport))?;
    info!("design matrix {} x {}", design.n(), design.p());

    let fit_opts = FitOptions {
        standardize: config.standardize,
        ..FitOptions::default()
    };
    let folds = effective_folds(&design, config.folds)?;
    let cv = CvOptions {
        folds,
        grid_size: config.grid_size,
        seed: config.seed,
        model: config.model,
        fit: fit_opts.clone(),
    };
    let (lambda, path) = match config.lambda {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::Auto => {
            let path = glm::cross_validate_lambda_with(&design, &cv).map_err(|e| Error::from(e).at(Stage::CrossValidation))?;
            info!("cross-validation chose lambda = {}", path.chosen);
            (path.chosen, Some(path))
        }
    };

    let fit = match config.model {
        ModelKind::RidgeLogistic => glm::ridge_logistic_fit_with(&design, lambda, &fit_opts),
        ModelKind::RidgeLs => glm::ridge_least_squares_with(&design, lambda, &fit_opts),
    }
    .map_err(|e| Error::from(e).at(Stage::Fit))?;

    let report = classify_by_sign(&fit, manifest, config.sign_convention).map_err(|e| Error::from(e).at(Stage::Classify))?;

    let audit = audit::sign_test_at(report.reference_count() as u64, report.positive_count() as u64, config.alpha)
        .map_err(|e| Error::from(e).at(Stage::Audit))?;
    let scores = audit::cv_scores_with(&design, lambda, &cv).map_err(|e| Error::from(e).at(Stage::Audit))?;
    let (s, l): (Vec<f64>, Vec<u8>) = scores.into_iter().unzip();
    let roc = audit::roc_auc(&s, &l).map_err(|e| Error::from(e).at(Stage::Audit))?;

    Ok(PipelineRun {
        report,
        fit,
        path,
        audit,
        roc,
        design,
        folds,
    })
}

/// Loads the manifest's images and runs every stage, inside a worker pool
/// sized by `config.parallelism`.
pub fn run_pipeline(manifest: &Manifest, config: &Config) -> Result<PipelineRun> {
    config.validate()?;
    let work = || {
        let records = dataset::load_images(manifest).map_err(|e| Error::from(e).at(Stage::Load))?;
        run_on_records(manifest, &records, config)
    };
    match config.parallelism {
        Parallelism::Auto => work(),
        Parallelism::Workers(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io {
                context: "building worker pool".into(),
                source: std::io::Error::other(e),
            })?
            .install(work),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassCoding, RealEntry};

    fn coding() -> ClassCoding {
        ClassCoding {
            attribute_name: "group".into(),
            positive_class_name: "north".into(),
            reference_class_name: "south".into(),
        }
    }

    fn manifest(p: usize) -> Manifest {
        Manifest::new(
            vec![
                RealEntry { path: "a".into(), label: 0 },
                RealEntry { path: "b".into(), label: 1 },
            ],
            (0..p).map(|j| format!("s{j}")).collect(),
            coding(),
            ".",
            ".",
        )
        .unwrap()
    }

    fn fit_with(coefficients: Vec<f64>) -> RidgeFit {
        RidgeFit {
            model: ModelKind::RidgeLogistic,
            intercept: 0.0,
            coefficients,
            lambda: 1.0,
            converged: true,
            iterations: 1,
            final_gradient_norm: 0.0,
            objective: 0.0,
        }
    }

    #[test]
    fn negative_reference_mapping() {
        let r = classify_by_sign(&fit_with(vec![-0.3, 0.2]), &manifest(2), SignConvention::NegativeReference).unwrap();
        let classes: Vec<_> = r.entries.iter().map(|e| e.assigned_class.clone().unwrap()).collect();
        assert_eq!(classes, ["south", "north"]);
        assert_eq!((r.reference_count(), r.positive_count()), (1, 1));
    }

    #[test]
    fn negative_positive_mapping_is_the_mirror() {
        let r = classify_by_sign(&fit_with(vec![-0.3, 0.2]), &manifest(2), SignConvention::NegativePositive).unwrap();
        let classes: Vec<_> = r.entries.iter().map(|e| e.assigned_class.clone().unwrap()).collect();
        assert_eq!(classes, ["north", "south"]);
    }

    #[test]
    fn exact_zero_is_undetermined() {
        let r = classify_by_sign(&fit_with(vec![0.0]), &manifest(1), SignConvention::default()).unwrap();
        assert_eq!(r.entries[0].sign, Sign::Undetermined);
        assert_eq!(r.entries[0].assigned_class, None);
        assert_eq!(r.undetermined, 1);
        assert_eq!(r.reference_count() + r.positive_count(), 0);
        assert!(r.to_csv().ends_with("s0,0,undetermined,\n"));
    }

    #[test]
    fn same_sign_puts_everything_in_one_class() {
        let r = classify_by_sign(&fit_with(vec![0.5; 7]), &manifest(7), SignConvention::NegativeReference).unwrap();
        assert_eq!((r.reference_count(), r.positive_count()), (0, 7));
        assert_eq!(r.entries.len(), 7);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            classify_by_sign(&fit_with(vec![1.0]), &manifest(2), SignConvention::default()),
            Err(LabelError::Length { fit: 1, manifest: 2 })
        );
    }

    fn real(id: &str, fill: u8, label: u8) -> ImageRecord {
        ImageRecord::new(id, vec![fill; 16], 4, 4, 1, Role::Real, Some(label)).unwrap()
    }

    #[test]
    fn design_matrix_shape_and_identity() {
        let reals = vec![real("a", 10, 0), real("b", 200, 1)];
        let synth = vec![
            ImageRecord::gray("s0", 4, 4, vec![10; 16]),
            ImageRecord::gray("s1", 2, 2, vec![100; 4]),
            ImageRecord::gray("s2", 4, 4, vec![250; 16]),
        ];
        let d = build_design_matrix(&reals, &synth, 8).unwrap();
        assert_eq!((d.n(), d.p(), d.y().len()), (2, 3, 2));
        assert_eq!(d.x()[(0, 0)], 0.0);
        assert!(d.x().iter().all(|&v| v >= 0.0));
        // 10 -> bin 0, 200 -> bin 6 of 8
        assert_eq!(d.x()[(1, 0)], 6.0);
        assert_eq!(d.synthetic_ids, ["s0", "s1", "s2"]);
    }

    #[test]
    fn design_matrix_errors() {
        let synth = vec![ImageRecord::gray("s0", 1, 1, vec![0])];
        assert!(build_design_matrix(&[], &synth, 4).is_err());
        let reals = vec![real("a", 1, 0), real("b", 2, 0)];
        assert!(matches!(
            build_design_matrix(&reals, &synth, 4).unwrap_err().root(),
            Error::Label(LabelError::OneClass)
        ));
    }
}
