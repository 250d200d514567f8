use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading manifests and decoding images.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV at row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: label outside {{0,1}} at row {row}: `{value}`")]
    BadLabel {
        path: PathBuf,
        row: usize,
        value: String,
    },
    #[error("{path}: duplicate id `{id}` at row {row}")]
    DuplicateId { path: PathBuf, row: usize, id: String },
    #[error("{path}: `{id}` at row {row} also appears in the real manifest")]
    CrossListed { path: PathBuf, row: usize, id: String },
    #[error("class {label} absent from real manifest")]
    EmptyClass { label: u8 },
    #[error("synthetic manifest has no entries")]
    NoSynthetics,
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("image {path} has zero area")]
    ZeroArea { path: PathBuf },
    #[error("image `{id}`: pixel buffer has {len} bytes, expected {expected}")]
    BufferSize {
        id: String,
        len: usize,
        expected: usize,
    },
}

impl DatasetError {
    /// True for problems with the manifest contents themselves, as opposed
    /// to I/O or decoding of the referenced images.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            DatasetError::Csv { .. }
                | DatasetError::Header { .. }
                | DatasetError::BadLabel { .. }
                | DatasetError::DuplicateId { .. }
                | DatasetError::CrossListed { .. }
                | DatasetError::EmptyClass { .. }
                | DatasetError::NoSynthetics
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("image `{0}` has no pixels")]
    EmptyImage(String),
    #[error("histogram entry {index} is {value}; entries must be finite and nonnegative")]
    BadMass { index: usize, value: f64 },
    #[error("histogram mass sums to {0}, expected 1")]
    Unnormalized(f64),
    #[error("unsupported ground-distance exponent {0}; use 1 or 2")]
    Exponent(f64),
    #[error("cost matrix entry ({row},{col}) is {value}")]
    BadCost { row: usize, col: usize, value: f64 },
    #[error("cost matrix must be square with a zero diagonal")]
    CostShape,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("network simplex did not terminate within {0} pivots")]
    PivotLimit(usize),
    #[error("EMD at cell ({row},{col}): {source}")]
    Cell {
        row: usize,
        col: usize,
        #[source]
        source: Box<TransportError>,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("design matrix: {0}")]
    Design(String),
    #[error("lambda must be finite and nonnegative, got {0}")]
    Lambda(f64),
    #[error("normal equations are singular at lambda = {0}")]
    Singular(f64),
    #[error("data are separable; the unpenalized likelihood has no maximum")]
    Separable,
    #[error("ridge logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("cross-validation: {0}")]
    Folds(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("sign test needs at least one observation")]
    NoObservations,
    #[error("alpha must lie in (0,1), got {0}")]
    Alpha(f64),
    #[error("scores and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("ROC needs both label classes present")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("fit has {fit} coefficients but the manifest lists {manifest} synthetic images")]
    Length { fit: usize, manifest: usize },
    #[error("no real images supplied")]
    NoReals,
    #[error("no synthetic images supplied")]
    NoSynthetics,
    #[error("real images must include both classes")]
    OneClass,
    #[error("record `{0}` has the wrong role for this list")]
    Role(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Pipeline stage, used to tag errors surfaced by [`crate::labeler::run_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Histogram,
    Transport,
    CrossValidation,
    Fit,
    Classify,
    Audit,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Histogram => "histogram",
            Stage::Transport => "transport",
            Stage::CrossValidation => "cross-validation",
            Stage::Fit => "fit",
            Stage::Classify => "classify",
            Stage::Audit => "audit",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Unwraps stage annotations down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Configuration and manifest-validation problems, which the CLI reports
    /// with a distinct exit status.
    pub fn is_input_error(&self) -> bool {
        match self.root() {
            Error::Config(_) => true,
            Error::Dataset(d) => d.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
