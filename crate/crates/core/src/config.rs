//! Run configuration.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and values
//! may be wrapped in double quotes. Keys match the [`Config`] field names.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassCoding;
use crate::error::ConfigError;
use crate::glm::ModelKind;

pub const OUTPUT_DIR_ENV: &str = "FAIRLABEL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    Auto,
    Fixed(f64),
}

/// How a coefficient's sign maps onto the two classes.
///
/// Features are distances, so a negative coefficient means the synthetic
/// image is closer to the real images coded `y = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Negative -> positive class (`y = 1`), positive -> reference class.
    #[default]
    NegativePositive,
    /// Negative -> reference class (`y = 0`), positive -> positive class.
    NegativeReference,
}

impl FromStr for SignConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative_positive" => Ok(Self::NegativePositive),
            "negative_reference" => Ok(Self::NegativeReference),
            other => Err(format!("expected negative_positive or negative_reference, got `{other}`")),
        }
    }
}

impl std::fmt::Display for SignConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NegativePositive => "negative_positive",
            Self::NegativeReference => "negative_reference",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Auto,
    Workers(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub bins: usize,
    pub model: ModelKind,
    pub lambda: LambdaChoice,
    pub folds: usize,
    pub grid_size: usize,
    pub alpha: f64,
    pub sign_convention: SignConvention,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parallelism: Parallelism,
    pub standardize: bool,
    pub write_distances: bool,
    pub attribute: String,
    pub positive_class: String,
    pub reference_class: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bins: 64,
            model: ModelKind::RidgeLogistic,
            lambda: LambdaChoice::Auto,
            folds: 5,
            grid_size: 50,
            alpha: 0.05,
            sign_convention: SignConvention::default(),
            seed: 0,
            output_dir: PathBuf::from("fairlabel-out"),
            parallelism: Parallelism::Auto,
            standardize: false,
            write_distances: true,
            attribute: "attribute".into(),
            positive_class: "positive".into(),
            reference_class: "reference".into(),
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        message: message.into(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, format!("`{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, format!("`{value}` is not a boolean"))),
    }
}

impl Config {
    /// Defaults, with `output_dir` taken from the environment when set.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = dir.into();
        }
        cfg
    }

    pub fn coding(&self) -> ClassCoding {
        ClassCoding {
            attribute_name: self.attribute.clone(),
            positive_class_name: self.positive_class.clone(),
            reference_class_name: self.reference_class.clone(),
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "bins" => self.bins = parse(key, value)?,
            "model" | "model_kind" => self.model = parse(key, value)?,
            "lambda" => {
                self.lambda = if value == "auto" {
                    LambdaChoice::Auto
                } else {
                    LambdaChoice::Fixed(parse(key, value)?)
                }
            }
            "folds" => self.folds = parse(key, value)?,
            "grid_size" => self.grid_size = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "sign_convention" => self.sign_convention = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "parallelism" => {
                self.parallelism = if value == "auto" {
                    Parallelism::Auto
                } else {
                    Parallelism::Workers(parse(key, value)?)
                }
            }
            "standardize" => self.standardize = parse_bool(key, value)?,
            "write_distances" => self.write_distances = parse_bool(key, value)?,
            "attribute" | "attribute_name" => self.attribute = value.into(),
            "positive_class" | "positive_class_name" => self.positive_class = value.into(),
            "reference_class" | "reference_class_name" => self.reference_class = value.into(),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            self.set(key.trim(), value).map_err(|e| ConfigError::Syntax {
                line: k + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bins < 2 {
            return Err(bad("bins", "must be at least 2"));
        }
        if self.bins > 256 {
            return Err(bad("bins", "at most 256 luminance levels exist"));
        }
        if self.folds < 2 {
            return Err(bad("folds", "must be at least 2"));
        }
        if self.grid_size < 1 {
            return Err(bad("grid_size", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", "must lie strictly between 0 and 1"));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(bad("lambda", "must be `auto` or a finite nonnegative number"));
            }
        }
        if self.parallelism == Parallelism::Workers(0) {
            return Err(bad("parallelism", "worker count must be positive"));
        }
        if self.positive_class == self.reference_class {
            return Err(bad("positive_class", "class names must differ"));
        }
        Ok(())
    }

    /// Serializes as the same `key = value` format [`Config::apply_text`] reads.
    pub fn to_text(&self) -> String {
        let lambda = match self.lambda {
            LambdaChoice::Auto => "auto".to_string(),
            LambdaChoice::Fixed(l) => l.to_string(),
        };
        let parallelism = match self.parallelism {
            Parallelism::Auto => "auto".to_string(),
            Parallelism::Workers(n) => n.to_string(),
        };
        [
            ("bins", self.bins.to_string()),
            ("model", self.model.to_string()),
            ("lambda", lambda),
            ("folds", self.folds.to_string()),
            ("grid_size", self.grid_size.to_string()),
            ("alpha", self.alpha.to_string()),
            ("sign_convention", self.sign_convention.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", format!("\"{}\"", self.output_dir.display())),
            ("parallelism", parallelism),
            ("standardize", self.standardize.to_string()),
            ("write_distances", self.write_distances.to_string()),
            ("attribute", format!("\"{}\"", self.attribute)),
            ("positive_class", format!("\"{}\"", self.positive_class)),
            ("reference_class", format!("\"{}\"", self.reference_class)),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }
}
