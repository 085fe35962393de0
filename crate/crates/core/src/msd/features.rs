use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::GrayImage;
use crate::nss::tile_origins;

/// Singular-value spectra of the non-overlapping patch tiling of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdFeature {
    /// `(rows, cols)` of the tiling.
    pub grid: (usize, usize),
    pub patch: usize,
    /// Per-tile descending spectra concatenated in row-major tile order.
    pub flat: Vec<f64>,
    /// Element-wise mean of the per-tile spectra.
    pub pooled: Vec<f64>,
}

impl MsdFeature {
    pub fn tile_count(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn per_patch(&self) -> impl Iterator<Item = &[f64]> {
        self.flat.chunks_exact(self.patch)
    }

    /// Mean over tiles of the singular values at indices `>= patch / 2`.
    pub fn tail_mass(&self) -> f64 {
        let start = self.patch / 2;
        let total: f64 = self
            .per_patch()
            .map(|s| s[start..].iter().sum::<f64>())
            .sum();
        total / self.tile_count() as f64
    }
}

/// Descending singular values of a square row-major tile.
pub fn tile_spectrum(tile: &[f64], side: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(side, side, tile);
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn msd_features(img: &GrayImage, patch: usize) -> Result<MsdFeature> {
    if patch == 0 || patch > img.width().min(img.height()) {
        return Err(Error::invalid(format!(
            "MSD patch {patch} larger than {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let grid = (img.height() / patch, img.width() / patch);
    let spectra: Vec<Vec<f64>> = tile_origins(img.width(), img.height(), patch)
        .par_iter()
        .map(|&(x0, y0)| {
            let mut tile = Vec::with_capacity(patch * patch);
            for y in y0..y0 + patch {
                tile.extend_from_slice(
                    &img.data()[y * img.width() + x0..y * img.width() + x0 + patch],
                );
            }
            tile_spectrum(&tile, patch)
        })
        .collect();
    let mut pooled = vec![0.0; patch];
    for s in &spectra {
        for (p, v) in pooled.iter_mut().zip(s) {
            *p += v;
        }
    }
    let n = spectra.len() as f64;
    pooled.iter_mut().for_each(|p| *p /= n);
    Ok(MsdFeature {
        grid,
        patch,
        flat: spectra.concat(),
        pooled,
    })
}

/// Sum of squared differences between two same-shape flat feature vectors.
pub fn msd_feature_loss(sr: &MsdFeature, hr: &MsdFeature) -> Result<f64> {
    if sr.grid != hr.grid || sr.patch != hr.patch {
        return Err(Error::FeatureLength {
            expected: hr.flat.len(),
            got: sr.flat.len(),
        });
    }
    Ok(sr
        .flat
        .iter()
        .zip(&hr.flat)
        .map(|(s, h)| (s - h) * (s - h))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_tile() {
        let u = [1.0, 2.0, 3.0, 4.0];
        let v = [0.5, -1.0, 2.0, 1.0];
        let tile: Vec<f64> = u
            .iter()
            .flat_map(|a| v.iter().map(move |b| a * b))
            .collect();
        let sv = tile_spectrum(&tile, 4);
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((sv[0] - norm(&u) * norm(&v)).abs() < 1e-9);
        assert!(sv[1..].iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn identity_tile() {
        let mut tile = vec![0.0; 16];
        (0..4).for_each(|i| tile[i * 5] = 1.0);
        for s in tile_spectrum(&tile, 4) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tiling_and_pooling() {
        let img = GrayImage::from_fn(21, 13, |x, y| ((x * 7 + y * 3) % 11) as f64).unwrap();
        let f = msd_features(&img, 4).unwrap();
        assert_eq!(f.grid, (3, 5));
        assert_eq!(f.flat.len(), 15 * 4);
        for s in f.per_patch() {
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.iter().all(|&v| v >= 0.0));
        }
        for k in 0..4 {
            let mean = f.per_patch().map(|s| s[k]).sum::<f64>() / 15.0;
            assert!((f.pooled[k] - mean).abs() < 1e-12);
        }
        assert!(msd_features(&img, 14).is_err());
    }

    #[test]
    fn feature_loss_examples() {
        let img = GrayImage::from_fn(8, 8, |x, y| (x * y) as f64).unwrap();
        let a = msd_features(&img, 4).unwrap();
        assert_eq!(msd_feature_loss(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for i in [0, 5, 9] {
            b.flat[i] += 1.0;
        }
        assert_eq!(msd_feature_loss(&b, &a).unwrap(), 3.0);
        let c = msd_features(&img, 2).unwrap();
        assert!(msd_feature_loss(&a, &c).is_err());
    }
}
