//! Label unlabeled synthetic images with a protected attribute learned from
//! labeled real images, then audit the resulting label counts for bias.
//!
//! The pipeline reduces every image to a luminance histogram, measures Earth
//! Mover's Distance from each real image to each synthetic image, and fits a
//! ridge logistic regression of the real labels on those distances with one
//! coefficient per synthetic image. A synthetic image's class follows the
//! sign of its coefficient. The label counts then go through an exact
//! binomial sign test, and cross-validated predictions on the real images
//! give a ROC curve.
//!
//! ```no_run
//! use std::path::Path;
//! use fairlabel::{config::Config, dataset, labeler};
//!
//! let config = Config::default();
//! let manifest = dataset::load_manifest(
//!     Path::new("real.csv"),
//!     Path::new("synthetic.csv"),
//!     config.coding(),
//! )?;
//! let run = labeler::run_pipeline(&manifest, &config)?;
//! println!("{:?} (p = {})", run.report.counts, run.audit.p_two_tailed);
//! # Ok::<(), fairlabel::error::Error>(())
//! ```

#![forbid(unsafe_code)]

pub mod audit;
pub mod config;
pub mod dataset;
pub mod error;
pub mod glm;
pub mod histogram;
pub mod labeler;
pub mod output;
pub mod planted;
pub mod selftest;
pub mod transport;

pub use error::{Error, Result};
