use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{mirror_index, GrayImage};

/// Weighting of the local-statistics window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowWeighting {
    /// Normalized Gaussian with σ = window / 6.
    #[default]
    Gaussian,
    Box,
}

impl WindowWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowWeighting::Gaussian => "gaussian",
            WindowWeighting::Box => "box",
        }
    }
}

impl std::str::FromStr for WindowWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(WindowWeighting::Gaussian),
            "box" => Ok(WindowWeighting::Box),
            other => Err(Error::invalid(format!(
                "unknown window weighting `{other}` (expected gaussian or box)"
            ))),
        }
    }
}

/// `window`×`window` weights, row-major, summing to one.
pub fn window_weights(window: usize, weighting: WindowWeighting) -> Vec<f64> {
    let half = (window / 2) as isize;
    let mut w: Vec<f64> = match weighting {
        WindowWeighting::Box => vec![1.0; window * window],
        WindowWeighting::Gaussian => {
            let s = window as f64 / 6.0;
            let mut v = Vec::with_capacity(window * window);
            for dy in -half..=half {
                for dx in -half..=half {
                    v.push((-((dx * dx + dy * dy) as f64) / (2.0 * s * s)).exp());
                }
            }
            v
        }
    };
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Mean-subtracted contrast-normalized coefficients with the local statistics
/// they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct MscnField {
    pub width: usize,
    pub height: usize,
    pub coeff: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl MscnField {
    #[inline]
    pub fn coeff_at(&self, x: usize, y: usize) -> f64 {
        self.coeff[y * self.width + x]
    }

    #[inline]
    pub fn sigma_at(&self, x: usize, y: usize) -> f64 {
        self.sigma[y * self.width + x]
    }
}

/// Computes MSCN coefficients `(I − μ) / (σ + 1)` with a Gaussian-weighted
/// local window and mirrored borders.
pub fn compute_mscn(img: &GrayImage, window: usize) -> Result<MscnField> {
    compute_mscn_weighted(img, window, WindowWeighting::Gaussian)
}

pub fn compute_mscn_weighted(
    img: &GrayImage,
    window: usize,
    weighting: WindowWeighting,
) -> Result<MscnField> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if window > w.min(h) {
        return Err(Error::invalid(format!(
            "window {window} larger than {w}x{h} image"
        )));
    }
    let weights = window_weights(window, weighting);
    let half = window / 2;
    let data = img.data();

    // mirror-padded copy so the window loop needs no index arithmetic
    let pw = w + 2 * half;
    let cols: Vec<usize> = (0..pw)
        .map(|i| mirror_index(i as isize - half as isize, w))
        .collect();
    let mut padded: Vec<f64> = Vec::with_capacity(pw * (h + 2 * half));
    for py in 0..h + 2 * half {
        let row = mirror_index(py as isize - half as isize, h) * w;
        padded.extend(cols.iter().map(|&c| data[row + c]));
    }

    let mut mu = vec![0.0; w * h];
    let mut sigma = vec![0.0; w * h];
    let mut coeff = vec![0.0; w * h];

    for y in 0..h {
        for x in 0..w {
            let center = data[y * w + x];
            // Offsets from the center pixel keep flat regions exactly flat.
            let mut shift = 0.0;
            for dy in 0..window {
                let row = &padded[(y + dy) * pw + x..][..window];
                let wrow = &weights[dy * window..][..window];
                shift += wrow
                    .iter()
                    .zip(row)
                    .map(|(wt, v)| wt * (v - center))
                    .sum::<f64>();
            }
            let m = center + shift;
            let mut var = 0.0;
            for dy in 0..window {
                let row = &padded[(y + dy) * pw + x..][..window];
                let wrow = &weights[dy * window..][..window];
                var += wrow
                    .iter()
                    .zip(row)
                    .map(|(wt, v)| wt * (v - m) * (v - m))
                    .sum::<f64>();
            }
            let s = var.max(0.0).sqrt();
            let i = y * w + x;
            mu[i] = m;
            sigma[i] = s;
            coeff[i] = (center - m) / (s + 1.0);
        }
    }

    Ok(MscnField {
        width: w,
        height: h,
        coeff,
        mu,
        sigma,
    })
}

/// Origins `(x, y)` of non-overlapping `patch`×`patch` tiles whose summed σ
/// exceeds `threshold_fraction` × the sharpest tile, in row-major order.
pub fn select_patches(
    field: &MscnField,
    patch: usize,
    threshold_fraction: f64,
) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || patch > field.width.min(field.height) {
        return Err(Error::invalid(format!(
            "patch {patch} does not fit a {}x{} field",
            field.width, field.height
        )));
    }
    if !(0.0..=1.0).contains(&threshold_fraction) {
        return Err(Error::invalid(format!(
            "threshold fraction must be in [0, 1], got {threshold_fraction}"
        )));
    }
    let tiles = tile_origins(field.width, field.height, patch);
    let sharpness: Vec<f64> = tiles
        .iter()
        .map(|&(x0, y0)| {
            (y0..y0 + patch)
                .flat_map(|y| (x0..x0 + patch).map(move |x| (x, y)))
                .map(|(x, y)| field.sigma_at(x, y))
                .sum()
        })
        .collect();
    let max = sharpness.iter().copied().fold(0.0, f64::max);
    let cut = threshold_fraction * max;
    let kept: Vec<_> = tiles
        .into_iter()
        .zip(sharpness)
        .filter(|&(_, s)| s > cut)
        .map(|(o, _)| o)
        .collect();
    if kept.is_empty() {
        return Err(Error::InsufficientTexture);
    }
    Ok(kept)
}

/// Row-major origins of the non-overlapping tiling; trailing remainders are dropped.
pub fn tile_origins(width: usize, height: usize, patch: usize) -> Vec<(usize, usize)> {
    let (cols, rows) = (width / patch, height / patch);
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c * patch, r * patch)))
        .collect()
}
