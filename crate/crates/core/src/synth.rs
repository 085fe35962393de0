//! Seeded synthetic imagery for desk experiments.
//!
//! The dead-leaves model (occluding discs with power-law radii) reproduces the
//! scale invariance and edge statistics of natural photographs well enough to
//! fit and exercise natural-image models when no photo corpus is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image_io::GrayImage;

#[derive(Debug, Clone, Copy)]
pub struct DeadLeaves {
    pub min_radius: f64,
    /// Fraction of the shorter image side.
    pub max_radius_fraction: f64,
    /// Discs per pixel of image area.
    pub density: f64,
    pub optical_blur: f64,
    pub sensor_noise: f64,
}

impl Default for DeadLeaves {
    fn default() -> Self {
        Self {
            min_radius: 2.0,
            max_radius_fraction: 0.25,
            density: 0.04,
            optical_blur: 0.8,
            sensor_noise: 1.5,
        }
    }
}

impl DeadLeaves {
    pub fn render(&self, width: usize, height: usize, seed: u64) -> Result<GrayImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = GrayImage::filled(width, height, 128.0)?;
        let r_min = self.min_radius;
        let r_max = (width.min(height) as f64 * self.max_radius_fraction).max(r_min + 1.0);
        let (a, b) = (r_min.powi(-2), r_max.powi(-2));
        let count = ((width * height) as f64 * self.density).ceil() as usize;

        for _ in 0..count {
            // inverse CDF of a density proportional to r^-3
            let u: f64 = rng.random();
            let r = (a - u * (a - b)).powf(-0.5);
            let cx = rng.random_range(-r..width as f64 + r);
            let cy = rng.random_range(-r..height as f64 + r);
            let base = rng.random_range(20.0..235.0);
            let gx = rng.random_range(-1.0..1.0) * 30.0 / r;
            let gy = rng.random_range(-1.0..1.0) * 30.0 / r;

            let x0 = (cx - r).floor().max(0.0) as usize;
            let x1 = ((cx + r).ceil().max(0.0) as usize).min(width);
            let y0 = (cy - r).floor().max(0.0) as usize;
            let y1 = ((cy + r).ceil().max(0.0) as usize).min(height);
            for y in y0..y1 {
                let dy = y as f64 + 0.5 - cy;
                for x in x0..x1 {
                    let dx = x as f64 + 0.5 - cx;
                    if dx * dx + dy * dy <= r * r {
                        img.set(x, y, (base + gx * dx + gy * dy).clamp(0.0, 255.0));
                    }
                }
            }
        }

        let mut img = if self.optical_blur > 0.0 {
            img.gaussian_blur(self.optical_blur)?
        } else {
            img
        };
        if self.sensor_noise > 0.0 {
            let n = Normal::new(0.0, self.sensor_noise).expect("positive sigma");
            for v in img.data_mut() {
                *v += n.sample(&mut rng);
            }
        }
        for v in img.data_mut() {
            *v = v.clamp(0.0, 255.0).round();
        }
        Ok(img)
    }
}

/// Default dead-leaves image.
pub fn dead_leaves(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    DeadLeaves::default().render(width, height, seed)
}

/// Adds seeded Gaussian noise and clamps to `[0, 255]`.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut out = img.clone();
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        for v in out.data_mut() {
            *v = (*v + n.sample(&mut rng)).clamp(0.0, 255.0);
        }
    }
    out
}
