//! Grayscale image container, loading/saving, and pixel-space error metrics.
//!
//! Pixels are stored as `f64` on the 8-bit scale `[0, 255]`; the RMSE region
//! thresholds used by the scoring module only make sense on that scale.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major luminance image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable pixel access. Callers must keep values finite.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_size(&self, other: &GrayImage) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// Sub-image of size `w`×`h` starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Removes `n` pixels from every side.
    pub fn shave(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Ok(self.clone());
        }
        if 2 * n >= self.width || 2 * n >= self.height {
            return Err(Error::invalid(format!(
                "cannot shave {n} px from a {}x{} image",
                self.width, self.height
            )));
        }
        self.crop(n, n, self.width - 2 * n, self.height - 2 * n)
    }

    pub fn mirror_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, self.get(self.width - 1 - x, y));
            }
        }
        out
    }

    pub fn clamp_to_8bit_range(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    /// Separable Gaussian blur with mirrored borders; kernel radius `ceil(3σ)`.
    pub fn gaussian_blur(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "blur sigma must be > 0, got {sigma}"
            )));
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= sum);

        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, d) in kernel.iter().zip(-radius..=radius) {
                    acc += k * self.data[y * w + mirror_index(x as isize + d, w)];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, d) in kernel.iter().zip(-radius..=radius) {
                    acc += k * tmp[mirror_index(y as isize + d, h) * w + x];
                }
                out[y * w + x] = acc;
            }
        }
        Self::new(w, h, out)
    }

    /// 2×2 box downsampling; an odd trailing row/column is dropped.
    pub fn downsample2(&self) -> Result<Self> {
        let (w, h) = (self.width / 2, self.height / 2);
        if w == 0 || h == 0 {
            return Err(Error::EmptyImage);
        }
        Self::from_fn(w, h, |x, y| {
            0.25 * (self.get(2 * x, 2 * y)
                + self.get(2 * x + 1, 2 * y)
                + self.get(2 * x, 2 * y + 1)
                + self.get(2 * x + 1, 2 * y + 1))
        })
    }

    /// Quantizes to 8 bits (clamped, rounded).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.clamp(0.0, 255.0).round() as u8)
            .collect()
    }
}

/// Symmetric (half-sample) reflection of an index into `0..n`.
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Three-plane RGB image on the 8-bit scale, used for RGB-space RMSE.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<f64>,
}

impl ColorImage {
    pub fn luminance(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn shave(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Ok(self.clone());
        }
        if 2 * n >= self.width || 2 * n >= self.height {
            return Err(Error::invalid(format!(
                "cannot shave {n} px from a {}x{} image",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width - 2 * n, self.height - 2 * n);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in n..n + h {
            let start = (y * self.width + n) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .ok()
        .or_else(|| ImageFormat::from_path(path).ok())
        .ok_or_else(|| Error::UnsupportedFormat(path.to_path_buf()))?;
    if !matches!(
        format,
        ImageFormat::Png | ImageFormat::Pnm | ImageFormat::Jpeg
    ) {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    Ok(img)
}

/// Loads PNG, PGM/PPM or JPEG as luminance. Gray inputs pass through;
/// color inputs use BT.601 weights.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                LUMA_WEIGHTS[0] * p.0[0] as f64
                    + LUMA_WEIGHTS[1] * p.0[1] as f64
                    + LUMA_WEIGHTS[2] * p.0[2] as f64
            })
            .collect(),
    };
    GrayImage::new(w, h, data)
}

/// Loads an image as RGB (gray inputs are replicated across channels).
pub fn load_color(path: impl AsRef<Path>) -> Result<ColorImage> {
    let img = decode(path.as_ref())?;
    let rgb = img.to_rgb8();
    Ok(ColorImage {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        data: rgb.as_raw().iter().map(|&v| v as f64).collect(),
    })
}

/// Writes a binary 8-bit PGM (P5); values are clamped and rounded.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit grayscale PNG; values are clamped and rounded.
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Saves as PGM when the extension is `pgm`, PNG otherwise.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => save_pgm(img, path),
        _ => save_png(img, path),
    }
}

/// Root-mean-square pixel difference.
pub fn rmse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(mse_loss(a, b)?.sqrt())
}

/// Mean squared pixel difference over all X×Y pixels.
pub fn mse_loss(sr: &GrayImage, hr: &GrayImage) -> Result<f64> {
    sr.check_same_size(hr)?;
    let sum: f64 = sr
        .data
        .iter()
        .zip(&hr.data)
        .map(|(s, h)| (s - h) * (s - h))
        .sum();
    Ok(sum / sr.data.len() as f64)
}

/// RMSE over all three channels of two RGB images.
pub fn rmse_color(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            left_w: a.width,
            left_h: a.height,
            right_w: b.width,
            right_h: b.height,
        });
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(s, h)| (s - h) * (s - h))
        .sum();
    Ok((sum / a.data.len() as f64).sqrt())
}

/// True for file extensions the loaders accept.
pub fn is_supported_extension(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm" | "jpg" | "jpeg")
    )
}

/// Supported image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && is_supported_extension(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}
