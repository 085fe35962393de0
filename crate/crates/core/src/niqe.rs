//! Multivariate Gaussian models of patch features and the NIQE distance.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{load_gray, GrayImage};
use crate::nss::{
    compute_mscn_weighted, patch_features, select_patches, PatchFeature18, WindowWeighting,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative ridge added to the pooled covariance: `λ = RIDGE · trace(C) / dim`.
pub const RIDGE: f64 = 1e-6;

/// Feature-extraction settings. Models carry the config they were fitted with,
/// and only models with equal configs may be compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiqeConfig {
    pub patch: usize,
    pub window: usize,
    pub threshold_fraction: f64,
    pub weighting: WindowWeighting,
    /// 1 = the 18-parameter single-scale feature; 2 appends the same
    /// parameters computed on a 2× downsampled image.
    pub scales: usize,
}

impl Default for NiqeConfig {
    fn default() -> Self {
        Self {
            patch: 96,
            window: 7,
            threshold_fraction: 0.75,
            weighting: WindowWeighting::Gaussian,
            scales: 1,
        }
    }
}

impl NiqeConfig {
    pub fn dim(&self) -> usize {
        PatchFeature18::LEN * self.scales
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::invalid(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold_fraction) {
            return Err(Error::invalid(format!(
                "threshold fraction must be in [0, 1], got {}",
                self.threshold_fraction
            )));
        }
        if !(1..=2).contains(&self.scales) {
            return Err(Error::invalid(format!(
                "scales must be 1 or 2, got {}",
                self.scales
            )));
        }
        let min_patch = if self.scales == 2 { 10 } else { 5 };
        if self.patch < min_patch || (self.scales == 2 && self.patch % 2 != 0) {
            return Err(Error::invalid(format!(
                "patch {} too small (min {min_patch}, even when scales = 2)",
                self.patch
            )));
        }
        Ok(())
    }
}

/// Per-patch feature vectors (length `config.dim()`) of the sharp patches of
/// `img`. Patches whose fits are degenerate are dropped.
pub fn extract_features(img: &GrayImage, config: &NiqeConfig) -> Result<Vec<Vec<f64>>> {
    Ok(extract_patch_features(img, config)?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

/// [`extract_features`] with the `(x, y)` origin of each kept patch.
pub fn extract_patch_features(
    img: &GrayImage,
    config: &NiqeConfig,
) -> Result<Vec<((usize, usize), Vec<f64>)>> {
    config.validate()?;
    let field = compute_mscn_weighted(img, config.window, config.weighting)?;
    let origins = select_patches(&field, config.patch, config.threshold_fraction)?;
    let coarse = if config.scales == 2 {
        Some(compute_mscn_weighted(
            &img.downsample2()?,
            config.window,
            config.weighting,
        )?)
    } else {
        None
    };
    let per_patch: Vec<Option<((usize, usize), Vec<f64>)>> = origins
        .par_iter()
        .map(|&origin| {
            let mut v = patch_features(&field, origin, config.patch)?
                .to_array()
                .to_vec();
            if let Some(coarse) = &coarse {
                let half = config.patch / 2;
                let o = (origin.0 / 2, origin.1 / 2);
                v.extend(patch_features(coarse, o, half)?.to_array());
            }
            Ok((origin, v))
        })
        .map(|r| match r {
            Ok(v) => Ok(Some(v)),
            // e.g. a smooth tile whose neighbour products all share one sign
            Err(Error::OneSidedSamples | Error::DegenerateSamples(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let skipped = per_patch.iter().filter(|p| p.is_none()).count();
    if skipped > 0 {
        log::debug!("skipped {skipped} patches with degenerate statistics");
    }
    let feats: Vec<_> = per_patch.into_iter().flatten().collect();
    if feats.is_empty() {
        return Err(Error::InsufficientTexture);
    }
    Ok(feats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: NiqeConfig,
    pub corpus_note: String,
    pub patch_count: usize,
}

/// Mean vector and covariance of a set of patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct MvgModel {
    dim: usize,
    nu: Vec<f64>,
    /// Row-major `dim × dim`.
    sigma: Vec<f64>,
    pub meta: ModelMeta,
}

impl MvgModel {
    pub fn new(nu: Vec<f64>, sigma: Vec<f64>, meta: ModelMeta) -> Result<Self> {
        let dim = nu.len();
        if dim == 0 || sigma.len() != dim * dim {
            return Err(Error::ModelFile(format!(
                "covariance has {} entries, expected {}",
                sigma.len(),
                dim * dim
            )));
        }
        if dim != meta.config.dim() {
            return Err(Error::ModelFile(format!(
                "dimension {dim} does not match config dimension {}",
                meta.config.dim()
            )));
        }
        if nu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::ModelFile("non-finite model entry".into()));
        }
        let m = Self {
            dim,
            nu,
            sigma,
            meta,
        };
        m.check_psd()?;
        Ok(m)
    }

    fn check_psd(&self) -> Result<()> {
        let s = self.sigma_matrix();
        let scale = s.amax().max(1.0);
        for i in 0..self.dim {
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::ModelFile(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eig = s.symmetric_eigenvalues().min();
        if min_eig < -1e-9 * scale {
            return Err(Error::ModelFile(format!(
                "covariance not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// Row-major covariance entries.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_at(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim + j]
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.sigma)
    }

    pub fn config(&self) -> &NiqeConfig {
        &self.meta.config
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dim: self.dim,
            patch: self.meta.config.patch,
            window: self.meta.config.window,
            threshold_fraction: self.meta.config.threshold_fraction,
            weighting: self.meta.config.weighting,
            scales: self.meta.config.scales,
            corpus_note: self.meta.corpus_note.clone(),
            patch_count: self.meta.patch_count,
            nu: self.nu.clone(),
            sigma: self.sigma.chunks(self.dim).map(<[f64]>::to_vec).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if file.nu.len() != file.dim
            || file.sigma.len() != file.dim
            || file.sigma.iter().any(|r| r.len() != file.dim)
        {
            return Err(Error::ModelFile(format!(
                "nu/sigma shapes do not match dim {}",
                file.dim
            )));
        }
        let config = NiqeConfig {
            patch: file.patch,
            window: file.window,
            threshold_fraction: file.threshold_fraction,
            weighting: file.weighting,
            scales: file.scales,
        };
        config.validate()?;
        Self::new(
            file.nu,
            file.sigma.concat(),
            ModelMeta {
                config,
                corpus_note: file.corpus_note,
                patch_count: file.patch_count,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// On-disk layout of a natural-image model.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    dim: usize,
    patch: usize,
    window: usize,
    threshold_fraction: f64,
    #[serde(default)]
    weighting: WindowWeighting,
    #[serde(default = "one")]
    scales: usize,
    corpus_note: String,
    #[serde(default)]
    patch_count: usize,
    nu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

fn one() -> usize {
    1
}

/// Sample mean and (N−1) sample covariance of the feature vectors.
pub fn fit_mvg<V: AsRef<[f64]>>(
    features: &[V],
    config: NiqeConfig,
    corpus_note: &str,
) -> Result<MvgModel> {
    if features.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: features.len(),
        });
    }
    let dim = config.dim();
    if let Some(bad) = features.iter().find(|f| f.as_ref().len() != dim) {
        return Err(Error::FeatureLength {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }
    let n = features.len() as f64;
    let mut nu = vec![0.0; dim];
    for f in features {
        for (m, v) in nu.iter_mut().zip(f.as_ref()) {
            *m += v;
        }
    }
    nu.iter_mut().for_each(|m| *m /= n);

    let mut sigma = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for f in features {
        for ((c, v), m) in centered.iter_mut().zip(f.as_ref()).zip(&nu) {
            *c = v - m;
        }
        for i in 0..dim {
            for j in i..dim {
                sigma[i * dim + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = sigma[i * dim + j] / (n - 1.0);
            sigma[i * dim + j] = v;
            sigma[j * dim + i] = v;
        }
    }
    if nu.iter().chain(&sigma).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vectors".into()));
    }
    // A sample covariance is symmetric PSD by construction; skip the eigen check.
    Ok(MvgModel {
        dim,
        nu,
        sigma,
        meta: ModelMeta {
            config,
            corpus_note: corpus_note.to_string(),
            patch_count: features.len(),
        },
    })
}

/// `sqrt((ν_n − ν_t)ᵀ ((Σ_n + Σ_t)/2 + λI)⁻¹ (ν_n − ν_t))`, with the ridge
/// `λ = RIDGE · trace/dim` keeping the pooled matrix invertible.
pub fn mvg_distance(natural: &MvgModel, test: &MvgModel) -> Result<f64> {
    if natural.dim != test.dim {
        return Err(Error::FeatureLength {
            expected: natural.dim,
            got: test.dim,
        });
    }
    if natural.meta.config != test.meta.config {
        return Err(Error::ConfigMismatch(format!(
            "{:?} vs {:?}",
            natural.meta.config, test.meta.config
        )));
    }
    let dim = natural.dim;
    let mut pooled = DMatrix::from_fn(dim, dim, |i, j| {
        0.5 * (natural.sigma_at(i, j) + test.sigma_at(i, j))
    });
    let trace = pooled.trace();
    let lambda = if trace > 0.0 {
        RIDGE * trace / dim as f64
    } else {
        f64::EPSILON
    };
    for i in 0..dim {
        pooled[(i, i)] += lambda;
    }
    let diff = DVector::from_iterator(dim, natural.nu.iter().zip(&test.nu).map(|(a, b)| a - b));
    let solved = match pooled.clone().cholesky() {
        Some(ch) => ch.solve(&diff),
        None => pooled.lu().solve(&diff).ok_or(Error::SingularCovariance)?,
    };
    let q = diff.dot(&solved);
    if !q.is_finite() {
        return Err(Error::SingularCovariance);
    }
    Ok(q.max(0.0).sqrt())
}

/// Pools sharp-patch features over a corpus and fits one model. Images without
/// any usable patch contribute nothing; features are concatenated in corpus order.
pub fn fit_natural_model_from_images(
    images: &[GrayImage],
    config: &NiqeConfig,
    corpus_note: &str,
) -> Result<MvgModel> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let per_image: Vec<Vec<Vec<f64>>> = images
        .par_iter()
        .map(|img| match extract_features(img, config) {
            Ok(f) => Ok(f),
            Err(Error::InsufficientTexture) => Ok(Vec::new()),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let pooled: Vec<Vec<f64>> = per_image.into_iter().flatten().collect();
    if pooled.len() < 2 {
        return Err(Error::InsufficientTexture);
    }
    fit_mvg(&pooled, *config, corpus_note)
}

pub fn fit_natural_model<P: AsRef<Path>>(
    corpus: &[P],
    config: &NiqeConfig,
    corpus_note: &str,
) -> Result<MvgModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let images: Vec<GrayImage> = corpus.iter().map(load_gray).collect::<Result<_>>()?;
    fit_natural_model_from_images(&images, config, corpus_note)
}

/// Fits a test model with the natural model's config and returns the distance
/// between the two. Larger is worse.
pub fn niqe_score(img: &GrayImage, natural: &MvgModel) -> Result<f64> {
    let feats = extract_features(img, natural.config())?;
    if feats.len() < 2 {
        return Err(Error::InsufficientTexture);
    }
    let test = fit_mvg(&feats, *natural.config(), "")?;
    mvg_distance(natural, &test)
}
