//! Manifests of labeled real images and unlabeled synthetic images, and
//! decoding of the files they reference.
//!
//! Two CSV files make up a manifest: the real list with header `path,label`
//! and the synthetic list with header `path`. Paths are stored as written and
//! resolved against the directory holding their manifest file. Each entry's
//! path string doubles as its id.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Real,
    Synthetic,
}

/// One decoded image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    /// Row-major samples, `channels` bytes per pixel (1 = luminance, 3 = RGB).
    pub pixels: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub role: Role,
    /// Binary attribute for real images; `None` for synthetics.
    pub label: Option<u8>,
}

impl ImageRecord {
    pub fn new(
        id: impl Into<String>,
        pixels: Vec<u8>,
        width: u32,
        height: u32,
        channels: u8,
        role: Role,
        label: Option<u8>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        let expected = width as usize * height as usize * channels as usize;
        if width == 0 || height == 0 {
            return Err(DatasetError::ZeroArea {
                path: PathBuf::from(&id),
            });
        }
        if pixels.len() != expected || !(channels == 1 || channels == 3) {
            return Err(DatasetError::BufferSize {
                id,
                len: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            id,
            pixels,
            width,
            height,
            channels,
            role,
            label,
        })
    }

    /// Grayscale image with no label, mostly for tests and fixtures.
    pub fn gray(id: impl Into<String>, width: u32, height: u32, pixels: Vec<u8>) -> Self {
        Self::new(id, pixels, width, height, 1, Role::Synthetic, None)
            .expect("pixel buffer matches dimensions")
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealEntry {
    pub path: String,
    pub label: u8,
}

/// Names for the binary attribute and its two classes.
///
/// `y = 0` is the reference class and `y = 1` the positive class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCoding {
    pub attribute_name: String,
    pub positive_class_name: String,
    pub reference_class_name: String,
}

impl Default for ClassCoding {
    fn default() -> Self {
        Self {
            attribute_name: "attribute".into(),
            positive_class_name: "positive".into(),
            reference_class_name: "reference".into(),
        }
    }
}

impl ClassCoding {
    pub fn name_of(&self, label: u8) -> &str {
        if label == 0 {
            &self.reference_class_name
        } else {
            &self.positive_class_name
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub real_entries: Vec<RealEntry>,
    pub synthetic_entries: Vec<String>,
    pub coding: ClassCoding,
    /// Directory real paths are resolved against.
    pub real_root: PathBuf,
    /// Directory synthetic paths are resolved against.
    pub synthetic_root: PathBuf,
}

impl Manifest {
    /// Builds a manifest and checks its invariants.
    pub fn new(
        real_entries: Vec<RealEntry>,
        synthetic_entries: Vec<String>,
        coding: ClassCoding,
        real_root: impl Into<PathBuf>,
        synthetic_root: impl Into<PathBuf>,
    ) -> Result<Self, DatasetError> {
        let manifest = Self {
            real_entries,
            synthetic_entries,
            coding,
            real_root: real_root.into(),
            synthetic_root: synthetic_root.into(),
        };
        manifest.validate(Path::new("<real>"), Path::new("<synthetic>"))?;
        Ok(manifest)
    }

    fn validate(&self, real_src: &Path, synth_src: &Path) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for (k, e) in self.real_entries.iter().enumerate() {
            if e.label > 1 {
                return Err(DatasetError::BadLabel {
                    path: real_src.into(),
                    row: k + 1,
                    value: e.label.to_string(),
                });
            }
            if !seen.insert(e.path.as_str()) {
                return Err(DatasetError::DuplicateId {
                    path: real_src.into(),
                    row: k + 1,
                    id: e.path.clone(),
                });
            }
        }
        let real_ids = seen;
        let mut seen = HashSet::new();
        for (k, p) in self.synthetic_entries.iter().enumerate() {
            if real_ids.contains(p.as_str()) {
                return Err(DatasetError::CrossListed {
                    path: synth_src.into(),
                    row: k + 1,
                    id: p.clone(),
                });
            }
            if !seen.insert(p.as_str()) {
                return Err(DatasetError::DuplicateId {
                    path: synth_src.into(),
                    row: k + 1,
                    id: p.clone(),
                });
            }
        }
        for label in [0u8, 1] {
            if !self.real_entries.iter().any(|e| e.label == label) {
                return Err(DatasetError::EmptyClass { label });
            }
        }
        if self.synthetic_entries.is_empty() {
            return Err(DatasetError::NoSynthetics);
        }
        Ok(())
    }

    pub fn n_real(&self) -> usize {
        self.real_entries.len()
    }

    pub fn n_synthetic(&self) -> usize {
        self.synthetic_entries.len()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.real_entries.iter().map(|e| e.label).collect()
    }

    /// Writes the two CSV files. Paths are written verbatim, so re-loading
    /// from files placed in `real_root` and `synthetic_root` reproduces `self`.
    pub fn write_csv(&self, real_csv: &Path, synthetic_csv: &Path) -> Result<(), DatasetError> {
        let mut out = String::from("path,label\n");
        for e in &self.real_entries {
            out.push_str(&csv_field(&e.path));
            out.push(',');
            out.push_str(&e.label.to_string());
            out.push('\n');
        }
        write_file(real_csv, &out)?;
        let mut out = String::from("path\n");
        for p in &self.synthetic_entries {
            out.push_str(&csv_field(p));
            out.push('\n');
        }
        write_file(synthetic_csv, &out)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(|source| DatasetError::Io {
        path: path.into(),
        source,
    })
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, DatasetError> {
    let data = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.into(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(data.as_slice());
    let found = reader
        .headers()
        .map_err(|e| DatasetError::Csv {
            path: path.into(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(DatasetError::Header {
            path: path.into(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Csv {
            path: path.into(),
            row: k + 1,
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.get(0).is_none_or(str::is_empty) {
            return Err(DatasetError::Csv {
                path: path.into(),
                row: k + 1,
                message: "empty path".into(),
            });
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Reads the real (`path,label`) and synthetic (`path`) manifest files.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_manifest(
    real_csv: &Path,
    synthetic_csv: &Path,
    coding: ClassCoding,
) -> Result<Manifest, DatasetError> {
    let mut real_entries = Vec::new();
    for (k, rec) in read_rows(real_csv, &["path", "label"])?.into_iter().enumerate() {
        let raw = rec.get(1).unwrap_or("");
        let label = match raw {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(DatasetError::BadLabel {
                    path: real_csv.into(),
                    row: k + 1,
                    value: raw.to_string(),
                })
            }
        };
        real_entries.push(RealEntry {
            path: rec[0].to_string(),
            label,
        });
    }
    let synthetic_entries = read_rows(synthetic_csv, &["path"])?
        .into_iter()
        .map(|rec| rec[0].to_string())
        .collect();
    let manifest = Manifest {
        real_entries,
        synthetic_entries,
        coding,
        real_root: parent_dir(real_csv),
        synthetic_root: parent_dir(synthetic_csv),
    };
    manifest.validate(real_csv, synthetic_csv)?;
    Ok(manifest)
}

/// Decodes one PNG or JPEG file. Grayscale sources stay single-channel;
/// everything else is converted to 8-bit RGB.
pub fn decode_image(path: &Path, id: &str, role: Role, label: Option<u8>) -> Result<ImageRecord, DatasetError> {
    let decode_err = |message: String| DatasetError::Decode {
        path: path.into(),
        message,
    };
    let img = image::ImageReader::open(path)
        .map_err(|source| DatasetError::Io {
            path: path.into(),
            source,
        })?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    let (width, height) = (img.width(), img.height());
    if width == 0 || height == 0 {
        return Err(DatasetError::ZeroArea { path: path.into() });
    }
    let (pixels, channels) = if img.color().has_color() {
        (img.into_rgb8().into_raw(), 3)
    } else {
        (img.into_luma8().into_raw(), 1)
    };
    ImageRecord::new(id, pixels, width, height, channels, role, label)
}

/// Decodes every manifest entry, reals first, each list in manifest order.
pub fn load_images(manifest: &Manifest) -> Result<Vec<ImageRecord>, DatasetError> {
    let jobs: Vec<(PathBuf, &str, Role, Option<u8>)> = manifest
        .real_entries
        .iter()
        .map(|e| (manifest.real_root.join(&e.path), e.path.as_str(), Role::Real, Some(e.label)))
        .chain(manifest.synthetic_entries.iter().map(|p| {
            (manifest.synthetic_root.join(p), p.as_str(), Role::Synthetic, None)
        }))
        .collect();
    jobs.par_iter()
        .map(|(path, id, role, label)| decode_image(path, id, *role, *label))
        .collect()
}
