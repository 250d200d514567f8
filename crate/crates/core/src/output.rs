//! Report files written for each run. All text is UTF-8 with LF line endings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::glm::DesignMatrix;
use crate::histogram::Histogram;
use crate::labeler::{csv_escape, PipelineRun};

pub const LABELS_CSV: &str = "labels.csv";
pub const LABELS_JSON: &str = "labels.json";
pub const FIT_JSON: &str = "fit.json";
pub const AUDIT_JSON: &str = "audit.json";
pub const ROC_CSV: &str = "roc.csv";
pub const DISTANCES_CSV: &str = "distances.csv";
pub const RUN_JSON: &str = "run.json";

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Chosen lambda, CV path, and coefficients keyed by synthetic id.
pub fn fit_json(run: &PipelineRun) -> String {
    let coefficients: Map<String, Value> = run
        .design
        .synthetic_ids
        .iter()
        .zip(&run.fit.coefficients)
        .map(|(id, &b)| (id.clone(), json!(b)))
        .collect();
    let cv = run.path.as_ref().map(|p| {
        json!({
            "folds": p.folds,
            "grid": p.grid,
            "deviance_mean": p.cv_scores.iter().map(|s| s.mean).collect::<Vec<_>>(),
            "deviance_std_error": p.cv_scores.iter().map(|s| s.std_error).collect::<Vec<_>>(),
            "chosen": p.chosen,
            "unconverged_fits": p.unconverged_fits,
        })
    });
    pretty(&json!({
        "model": run.fit.model,
        "lambda": run.fit.lambda,
        "cross_validation": cv,
        "intercept": run.fit.intercept,
        "coefficients": coefficients,
        "converged": run.fit.converged,
        "iterations": run.fit.iterations,
        "final_gradient_norm": run.fit.final_gradient_norm,
        "objective": run.fit.objective,
    }))
}

pub fn audit_json(run: &PipelineRun) -> String {
    let r = &run.report;
    pretty(&json!({
        "attribute": r.attribute,
        "class_a": r.counts[0].class,
        "class_b": r.counts[1].class,
        "undetermined": r.undetermined,
        "sign_test": run.audit,
        "roc_auc": run.roc.auc,
        "roc_folds": run.folds,
    }))
}

pub fn labels_json(run: &PipelineRun) -> String {
    pretty(&run.report)
}

/// Rows are real ids, columns synthetic ids.
pub fn distances_csv(d: &DesignMatrix) -> String {
    let mut out = String::from("id");
    for s in &d.synthetic_ids {
        out.push(',');
        out.push_str(&csv_escape(s));
    }
    out.push('\n');
    for (i, id) in d.real_ids.iter().enumerate() {
        out.push_str(&csv_escape(id));
        for j in 0..d.p() {
            out.push_str(&format!(",{}", d.x()[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// `id,b0,...,b{B-1}` with one row per histogram.
pub fn histograms_csv(ids: &[String], hists: &[Histogram]) -> String {
    let bins = hists.first().map_or(0, Histogram::bins);
    let mut out = String::from("id");
    for b in 0..bins {
        out.push_str(&format!(",b{b}"));
    }
    out.push('\n');
    for (id, h) in ids.iter().zip(hists) {
        out.push_str(&csv_escape(id));
        for m in h.mass() {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })?;
    Ok(path)
}

/// Writes the report files for `run` into `config.output_dir`.
pub fn write_reports(run: &PipelineRun, config: &Config) -> Result<Vec<PathBuf>> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        context: format!("creating {}", dir.display()),
        source,
    })?;
    let mut written = vec![
        write(dir, LABELS_CSV, &run.report.to_csv())?,
        write(dir, LABELS_JSON, &labels_json(run))?,
        write(dir, FIT_JSON, &fit_json(run))?,
        write(dir, AUDIT_JSON, &audit_json(run))?,
        write(dir, ROC_CSV, &run.roc.to_csv())?,
    ];
    if config.write_distances {
        written.push(write(dir, DISTANCES_CSV, &distances_csv(&run.design))?);
    }
    Ok(written)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance written as `run.json`: enough to repeat the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub config: Config,
    pub real_manifest: PathBuf,
    pub synthetic_manifest: PathBuf,
    pub manifest_digests: Vec<InputDigest>,
    pub image_digests: Vec<InputDigest>,
}

impl RunRecord {
    pub fn capture(config: &Config, real_manifest: &Path, synthetic_manifest: &Path, manifest: &Manifest) -> Result<Self> {
        let manifest_digests = [real_manifest, synthetic_manifest]
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: digest_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        let mut image_digests = Vec::new();
        for e in &manifest.real_entries {
            image_digests.push(InputDigest {
                path: e.path.clone(),
                sha256: digest_file(&manifest.real_root.join(&e.path))?,
            });
        }
        for p in &manifest.synthetic_entries {
            image_digests.push(InputDigest {
                path: p.clone(),
                sha256: digest_file(&manifest.synthetic_root.join(p))?,
            });
        }
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            real_manifest: real_manifest.into(),
            synthetic_manifest: synthetic_manifest.into(),
            manifest_digests,
            image_digests,
        })
    }

    /// Digests that no longer match the files on disk.
    pub fn stale_inputs(&self, manifest: &Manifest) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for d in &self.manifest_digests {
            if digest_file(Path::new(&d.path))? != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        let roots = manifest
            .real_entries
            .iter()
            .map(|e| manifest.real_root.join(&e.path))
            .chain(manifest.synthetic_entries.iter().map(|p| manifest.synthetic_root.join(p)));
        for (d, path) in self.image_digests.iter().zip(roots) {
            if digest_file(&path)? != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        Ok(stale)
    }

    pub fn to_json(&self) -> String {
        pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io {
            context: "parsing run record".into(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write(dir, RUN_JSON, &self.to_json())
    }
}
