//! Luminance histograms and bin ground-distance matrices.

use serde::Serialize;

use crate::dataset::ImageRecord;
use crate::error::HistogramError;

/// Sums within this distance of 1 are rescaled; anything further is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A normalized mass vector over `bins()` bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    mass: Vec<f64>,
}

impl Histogram {
    /// Validates `mass`, rescaling it once if its sum is within
    /// [`RENORMALIZE_TOLERANCE`] of 1.
    pub fn new(mass: Vec<f64>) -> Result<Self, HistogramError> {
        if mass.len() < 2 {
            return Err(HistogramError::TooFewBins(mass.len()));
        }
        if let Some((index, &value)) = mass
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(HistogramError::BadMass { index, value });
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(HistogramError::Unnormalized(total));
        }
        let mut mass = mass;
        if total != 1.0 {
            mass.iter_mut().for_each(|m| *m /= total);
        }
        Ok(Self { mass })
    }

    /// Normalizes raw counts (any nonnegative weights with a positive sum).
    pub fn from_counts(counts: &[f64]) -> Result<Self, HistogramError> {
        let total: f64 = counts.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(HistogramError::Unnormalized(total));
        }
        Self::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }
}

/// Rec. 601 luma, rounded to the nearest integer level.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Buckets each pixel's luminance into `bins` equal-width bins over the 256
/// levels and divides by the pixel count.
pub fn to_histogram(image: &ImageRecord, bins: usize) -> Result<Histogram, HistogramError> {
    if bins < 2 {
        return Err(HistogramError::TooFewBins(bins));
    }
    let n = image.pixel_count();
    if n == 0 || image.pixels.is_empty() {
        return Err(HistogramError::EmptyImage(image.id.clone()));
    }
    let mut counts = vec![0u64; bins];
    let mut bump = |v: u8| counts[v as usize * bins / 256] += 1;
    match image.channels {
        3 => image
            .pixels
            .chunks_exact(3)
            .for_each(|p| bump(luminance(p[0], p[1], p[2]))),
        _ => image.pixels.iter().copied().for_each(&mut bump),
    }
    let mass = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Histogram::new(mass)
}

/// Square matrix of per-bin-pair transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    size: usize,
    costs: Vec<f64>,
    symmetric: bool,
}

impl CostMatrix {
    /// Accepts an arbitrary nonnegative matrix with a zero diagonal given as rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, HistogramError> {
        let size = rows.len();
        if size < 2 || rows.iter().any(|r| r.len() != size) {
            return Err(HistogramError::CostShape);
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(HistogramError::BadCost { row: i, col: j, value });
                }
            }
            if row[i] != 0.0 {
                return Err(HistogramError::CostShape);
            }
        }
        let symmetric = (0..size).all(|i| (0..size).all(|j| rows[i][j] == rows[j][i]));
        Ok(Self {
            size,
            costs: rows.into_iter().flatten().collect(),
            symmetric,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.size + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.costs.chunks(self.size).map(<[f64]>::to_vec).collect()
    }
}

/// `costs[i][j] = |i - j|^exponent` for exponent 1 or 2.
pub fn bin_distance_costs(bins: usize, exponent: f64) -> Result<CostMatrix, HistogramError> {
    if bins < 2 {
        return Err(HistogramError::TooFewBins(bins));
    }
    if exponent != 1.0 && exponent != 2.0 {
        return Err(HistogramError::Exponent(exponent));
    }
    let costs = (0..bins)
        .flat_map(|i| (0..bins).map(move |j| (i.abs_diff(j) as f64).powf(exponent)))
        .collect();
    Ok(CostMatrix {
        size: bins,
        costs,
        symmetric: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn black_image_fills_first_bin() {
        let img = ImageRecord::gray("k", 2, 2, vec![0; 4]);
        assert_eq!(to_histogram(&img, 4).unwrap().mass(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_black_half_white() {
        let img = ImageRecord::gray("bw", 2, 2, vec![0, 255, 0, 255]);
        assert_eq!(to_histogram(&img, 2).unwrap().mass(), &[0.5, 0.5]);
    }

    #[test]
    fn color_uses_rounded_luma() {
        // 0.299*255 = 76.245 -> 76, which lands in bin 1 of 4 (64..127)
        let img = crate::dataset::ImageRecord::new(
            "c",
            vec![255, 0, 0],
            1,
            1,
            3,
            crate::dataset::Role::Real,
            Some(0),
        )
        .unwrap();
        assert_eq!(luminance(255, 0, 0), 76);
        assert_eq!(luminance(255, 255, 255), 255);
        assert_eq!(to_histogram(&img, 4).unwrap().mass(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bins_below_two_rejected() {
        let img = ImageRecord::gray("k", 1, 1, vec![0]);
        assert_eq!(to_histogram(&img, 1), Err(HistogramError::TooFewBins(1)));
        assert!(bin_distance_costs(1, 1.0).is_err());
    }

    #[test]
    fn cost_matrix_definitions() {
        let c = bin_distance_costs(3, 1.0).unwrap();
        assert_eq!(c.rows(), vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]);
        let c = bin_distance_costs(2, 2.0).unwrap();
        assert_eq!(c.rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(bin_distance_costs(4, 3.0), Err(HistogramError::Exponent(3.0)));
        let c = bin_distance_costs(5, 2.0).unwrap();
        assert_eq!(c.get(0, 4), 16.0);
    }

    #[test]
    fn cost_matrix_from_rows_detects_asymmetry() {
        let c = CostMatrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(!c.is_symmetric());
        assert!(CostMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::from_rows(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram::new(vec![0.5, 0.5 + 1e-8]).is_ok());
        let h = Histogram::new(vec![0.5, 0.5 + 1e-8]).unwrap();
        assert!((h.mass().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(Histogram::new(vec![0.5, 0.6]), Err(HistogramError::Unnormalized(_))));
        assert!(matches!(Histogram::new(vec![1.5, -0.5]), Err(HistogramError::BadMass { index: 1, .. })));
    }

    fn arb_image() -> impl Strategy<Value = (u32, Vec<u8>)> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            (Just(w), proptest::collection::vec(any::<u8>(), (w * h) as usize))
        })
    }

    proptest! {
        #[test]
        fn mass_sums_to_one((w, px) in arb_image(), bins in 2usize..80) {
            let h = px.len() as u32 / w;
            let img = ImageRecord::gray("p", w, h, px);
            let hist = to_histogram(&img, bins).unwrap();
            prop_assert!((hist.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(hist.mass().iter().all(|&m| m >= 0.0));
        }

        #[test]
        fn invariant_under_permutation_and_tiling((w, px) in arb_image(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let h = px.len() as u32 / w;
            let base = to_histogram(&ImageRecord::gray("a", w, h, px.clone()), 16).unwrap();

            let mut shuffled = px.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let perm = to_histogram(&ImageRecord::gray("b", w, h, shuffled), 16).unwrap();
            prop_assert_eq!(base.mass(), perm.mass());

            let tiled: Vec<u8> = px.iter().chain(px.iter()).copied().collect();
            let twice = to_histogram(&ImageRecord::gray("c", w, 2 * h, tiled), 16).unwrap();
            for (a, b) in base.mass().iter().zip(twice.mass()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
