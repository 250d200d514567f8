//! Seeded planted-structure datasets with known synthetic classes.
//!
//! Each class has a grayscale prototype (a smooth pattern around a class
//! brightness). Real images are noisy copies of their class prototype; each
//! synthetic image is a noisy copy of a planted class's prototype, so the
//! correct label of every synthetic image is known.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{ClassCoding, ImageRecord, Manifest, RealEntry, Role};
use crate::error::{DatasetError, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_real: usize,
    pub n_synthetic: usize,
    /// Synthetic images planted in the positive class; the rest are reference.
    pub n_synthetic_positive: usize,
    pub width: u32,
    pub height: u32,
    /// Prototype brightness of the reference and positive class.
    pub class_levels: (f64, f64),
    /// Amplitude of the shared spatial pattern.
    pub pattern_amplitude: f64,
    /// Per-image brightness jitter (standard deviation).
    pub image_jitter: f64,
    /// Per-pixel noise (standard deviation).
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_real: 60,
            n_synthetic: 64,
            n_synthetic_positive: 32,
            width: 32,
            height: 32,
            class_levels: (95.0, 155.0),
            pattern_amplitude: 40.0,
            image_jitter: 8.0,
            pixel_noise: 18.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub manifest: Manifest,
    /// Reals then synthetics, in manifest order.
    pub records: Vec<ImageRecord>,
    /// True class (`0` reference, `1` positive) of each synthetic image.
    pub plants: Vec<u8>,
}

fn render(spec: &PlantedSpec, class: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let level = if class == 0 { spec.class_levels.0 } else { spec.class_levels.1 };
    let jitter = Normal::new(0.0, spec.image_jitter.max(1e-12)).expect("finite jitter");
    let noise = Normal::new(0.0, spec.pixel_noise.max(1e-12)).expect("finite noise");
    let shift = jitter.sample(rng);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut px = Vec::with_capacity((spec.width * spec.height) as usize);
    for yy in 0..spec.height {
        for xx in 0..spec.width {
            let u = (xx as f64 + 0.5) / w - 0.5;
            let v = (yy as f64 + 0.5) / h - 0.5;
            // a bright oval on a darker surround
            let pattern = 1.0 - 2.0 * ((u * u + 0.6 * v * v) * 4.0).min(1.0);
            let value = level + shift + spec.pattern_amplitude * pattern + noise.sample(rng);
            px.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

/// Generates the dataset in memory. Real ids are `real/r###.png`, synthetic
/// ids `synthetic/s###.png`.
pub fn generate(spec: &PlantedSpec, coding: ClassCoding) -> Result<PlantedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<u8> = (0..spec.n_real).map(|i| (i >= spec.n_real / 2) as u8).collect();
    labels.shuffle(&mut rng);
    let positive = spec.n_synthetic_positive.min(spec.n_synthetic);
    let mut plants: Vec<u8> = (0..spec.n_synthetic).map(|j| (j < positive) as u8).collect();
    plants.shuffle(&mut rng);

    let mut records = Vec::with_capacity(spec.n_real + spec.n_synthetic);
    let mut real_entries = Vec::with_capacity(spec.n_real);
    for (i, &label) in labels.iter().enumerate() {
        let id = format!("real/r{i:03}.png");
        let px = render(spec, label, &mut rng);
        records.push(ImageRecord::new(&id, px, spec.width, spec.height, 1, Role::Real, Some(label))?);
        real_entries.push(RealEntry { path: id, label });
    }
    let mut synthetic_entries = Vec::with_capacity(spec.n_synthetic);
    for (j, &plant) in plants.iter().enumerate() {
        let id = format!("synthetic/s{j:03}.png");
        let px = render(spec, plant, &mut rng);
        records.push(ImageRecord::new(&id, px, spec.width, spec.height, 1, Role::Synthetic, None)?);
        synthetic_entries.push(id);
    }
    let manifest = Manifest::new(real_entries, synthetic_entries, coding, ".", ".")?;
    Ok(PlantedData {
        manifest,
        records,
        plants,
    })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| {
        Error::Dataset(DatasetError::Io {
            path: path.into(),
            source,
        })
    }
}

/// Generates the dataset and writes it under `dir` as PNG files plus
/// `real.csv` and `synthetic.csv`. The returned manifest points at `dir`.
pub fn write_to_dir(spec: &PlantedSpec, coding: ClassCoding, dir: &Path) -> Result<PlantedData> {
    let mut data = generate(spec, coding)?;
    for sub in ["real", "synthetic"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io(&p))?;
    }
    for r in &data.records {
        let path = dir.join(&r.id);
        image::GrayImage::from_raw(r.width, r.height, r.pixels.clone())
            .expect("buffer matches dimensions")
            .save(&path)
            .map_err(|e| {
                Error::Dataset(DatasetError::Decode {
                    path: path.clone(),
                    message: e.to_string(),
                })
            })?;
    }
    data.manifest.real_root = dir.into();
    data.manifest.synthetic_root = dir.into();
    data.manifest
        .write_csv(&dir.join("real.csv"), &dir.join("synthetic.csv"))?;
    Ok(data)
}

/// Fraction of synthetic images whose assigned class matches its plant.
pub fn recovery_rate(plants: &[u8], assigned: &[Option<u8>]) -> f64 {
    let hits = plants
        .iter()
        .zip(assigned)
        .filter(|(p, a)| a.is_some_and(|a| a == **p))
        .count();
    hits as f64 / plants.len() as f64
}
