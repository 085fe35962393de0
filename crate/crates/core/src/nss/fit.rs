//! Moment-matching estimators for the generalized Gaussian (GGD) and its
//! asymmetric variant (AGGD).
//!
//! Both estimators reduce to inverting the generalized Gaussian ratio
//!
//! ```text
//! ρ(α) = Γ(1/α) Γ(3/α) / Γ(2/α)²  =  E[x²] / E[|x|]²
//! ```
//!
//! which is strictly decreasing in α. The inversion is a nearest-neighbour
//! lookup on a dense, precomputed α grid.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 0.2;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_STEP: f64 = 0.001;

/// Minimum sample count accepted by both fits.
pub const MIN_SAMPLES: usize = 16;

/// Shape/scale of a zero-mean generalized Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Shape, left/right scales and signed mean parameter of an asymmetric
/// generalized Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggdParams {
    pub gamma: f64,
    pub beta_l: f64,
    pub beta_r: f64,
    pub eta: f64,
}

/// `(β_l − β_r) · Γ(2/γ) / Γ(1/γ)`.
pub fn aggd_eta(gamma: f64, beta_l: f64, beta_r: f64) -> f64 {
    (beta_l - beta_r) * (ln_gamma(2.0 / gamma) - ln_gamma(1.0 / gamma)).exp()
}

/// `Γ(1/α) Γ(3/α) / Γ(2/α)²`.
pub fn ggd_ratio(alpha: f64) -> f64 {
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

/// Result of a grid lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHit {
    pub index: usize,
    pub alpha: f64,
    /// The requested ratio fell outside the grid and was clamped to an end.
    pub clamped: bool,
}

/// Precomputed `ρ(α)` on `[ALPHA_MIN, ALPHA_MAX]`.
#[derive(Debug)]
pub struct AlphaGrid {
    alphas: Vec<f64>,
    /// Strictly decreasing.
    rhos: Vec<f64>,
}

impl AlphaGrid {
    fn build() -> Self {
        let n = ((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP).round() as usize + 1;
        let alphas: Vec<f64> = (0..n).map(|i| ALPHA_MIN + i as f64 * ALPHA_STEP).collect();
        let rhos = alphas.iter().map(|&a| ggd_ratio(a)).collect();
        Self { alphas, rhos }
    }

    /// Process-wide shared grid.
    pub fn shared() -> &'static AlphaGrid {
        static GRID: OnceLock<AlphaGrid> = OnceLock::new();
        GRID.get_or_init(AlphaGrid::build)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn rho_at(&self, i: usize) -> f64 {
        self.rhos[i]
    }

    /// Grid α whose ratio is nearest to `rho`.
    pub fn solve(&self, rho: f64) -> GridHit {
        let last = self.rhos.len() - 1;
        if !(rho < self.rhos[0]) {
            return GridHit {
                index: 0,
                alpha: self.alphas[0],
                clamped: rho > self.rhos[0],
            };
        }
        if !(rho > self.rhos[last]) {
            return GridHit {
                index: last,
                alpha: self.alphas[last],
                clamped: rho < self.rhos[last],
            };
        }
        // first index with rhos[i] <= rho
        let hi = self.rhos.partition_point(|&r| r > rho);
        let lo = hi - 1;
        let index = if (self.rhos[lo] - rho) <= (rho - self.rhos[hi]) {
            lo
        } else {
            hi
        };
        GridHit {
            index,
            alpha: self.alphas[index],
            clamped: false,
        }
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::DegenerateSamples(format!("non-finite sample {v}")));
    }
    Ok(())
}

fn warn_clamped(what: &str, hit: &GridHit) {
    if hit.clamped {
        log::warn!(
            "{what} shape ratio outside grid; clamped to alpha = {}",
            hit.alpha
        );
    }
}

/// GGD fit that also reports whether the shape was clamped to the grid end.
pub fn fit_ggd_detailed(samples: &[f64]) -> Result<(GgdParams, GridHit)> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean_abs = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    let mean_sq = samples.iter().map(|x| x * x).sum::<f64>() / n;
    if mean_sq <= 0.0 {
        return Err(Error::DegenerateSamples("all samples are zero".into()));
    }
    let hit = AlphaGrid::shared().solve(mean_sq / (mean_abs * mean_abs));
    warn_clamped("GGD", &hit);
    let alpha = hit.alpha;
    let beta = mean_abs * (ln_gamma(1.0 / alpha) - ln_gamma(2.0 / alpha)).exp();
    Ok((GgdParams { alpha, beta }, hit))
}

/// Moment-matching GGD fit.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdParams> {
    fit_ggd_detailed(samples).map(|(p, _)| p)
}

/// AGGD fit that also reports whether the shape was clamped to the grid end.
pub fn fit_aggd_detailed(samples: &[f64]) -> Result<(AggdParams, GridHit)> {
    check_samples(samples)?;
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &x in samples {
        let sq = x * x;
        if x < 0.0 {
            left_sq += sq;
            left_n += 1;
        } else if x > 0.0 {
            right_sq += sq;
            right_n += 1;
        }
        abs_sum += x.abs();
        sq_sum += sq;
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::OneSidedSamples);
    }
    let n = samples.len() as f64;
    let sigma_l = (left_sq / left_n as f64).sqrt();
    let sigma_r = (right_sq / right_n as f64).sqrt();
    let g = sigma_l / sigma_r;
    let mean_abs = abs_sum / n;
    let r_hat = mean_abs * mean_abs / (sq_sum / n);
    let r_norm = r_hat * (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));

    let hit = AlphaGrid::shared().solve(1.0 / r_norm);
    warn_clamped("AGGD", &hit);
    let gamma = hit.alpha;
    let scale = (0.5 * (ln_gamma(1.0 / gamma) - ln_gamma(3.0 / gamma))).exp();
    let beta_l = sigma_l * scale;
    let beta_r = sigma_r * scale;
    let eta = aggd_eta(gamma, beta_l, beta_r);
    Ok((
        AggdParams {
            gamma,
            beta_l,
            beta_r,
            eta,
        },
        hit,
    ))
}

/// Moment-matching AGGD fit.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdParams> {
    fit_aggd_detailed(samples).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Normal};

    /// |x| = β·G^{1/α} with G ~ Gamma(1/α, 1) and a random sign.
    fn sample_ggd(alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let m = beta * g.sample(&mut rng).powf(1.0 / alpha);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect()
    }

    fn sample_aggd(gamma: f64, bl: f64, br: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gamma::new(1.0 / gamma, 1.0).unwrap();
        let p_left = bl / (bl + br);
        (0..n)
            .map(|_| {
                let m = g.sample(&mut rng).powf(1.0 / gamma);
                if rng.random_bool(p_left) {
                    -bl * m
                } else {
                    br * m
                }
            })
            .collect()
    }

    #[test]
    fn grid_is_strictly_decreasing_and_self_inverse() {
        let grid = AlphaGrid::shared();
        assert_eq!(grid.len(), 9801);
        assert!((grid.alpha_at(grid.len() - 1) - ALPHA_MAX).abs() < 1e-9);
        for i in 1..grid.len() {
            assert!(grid.rho_at(i) < grid.rho_at(i - 1), "not decreasing at {i}");
        }
        for i in 0..grid.len() {
            let hit = grid.solve(grid.rho_at(i));
            assert_eq!(hit.alpha, grid.alpha_at(i));
            assert!(!hit.clamped);
        }
    }

    #[test]
    fn grid_clamps_out_of_range() {
        let grid = AlphaGrid::shared();
        let hi = grid.solve(1e6);
        assert!(hi.clamped && hi.index == 0);
        let lo = grid.solve(1.0);
        assert!(lo.clamped && lo.index == grid.len() - 1);
    }

    #[test]
    fn ggd_recovers_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
        let p = fit_ggd(&xs).unwrap();
        assert!((1.95..=2.05).contains(&p.alpha), "{p:?}");
        assert!((1.39..=1.44).contains(&p.beta), "{p:?}");
    }

    #[test]
    fn ggd_recovers_laplace() {
        let xs = sample_ggd(1.0, 1.0, 1_000_000, 2);
        let p = fit_ggd(&xs).unwrap();
        assert!((0.95..=1.05).contains(&p.alpha), "{p:?}");
        assert!((0.95..=1.05).contains(&p.beta), "{p:?}");
    }

    #[test]
    fn ggd_scale_equivariance() {
        let xs = sample_ggd(1.3, 0.7, 5000, 3);
        let k = 3.7;
        let ys: Vec<f64> = xs.iter().map(|x| k * x).collect();
        let (a, b) = (fit_ggd(&xs).unwrap(), fit_ggd(&ys).unwrap());
        assert_eq!(a.alpha, b.alpha);
        assert!((b.beta / (k * a.beta) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ggd_errors() {
        assert!(matches!(
            fit_ggd(&[1.0; 10]),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            fit_ggd(&[0.0; 40]),
            Err(Error::DegenerateSamples(_))
        ));
        let (_, hit) = fit_ggd_detailed(&{
            let mut v = vec![0.0; 10_000];
            v[0] = 1.0;
            v
        })
        .unwrap();
        assert!(hit.clamped);
    }

    #[test]
    fn aggd_symmetric_samples() {
        let base = sample_ggd(1.5, 1.0, 2000, 4);
        let xs: Vec<f64> = base.iter().flat_map(|&x| [x, -x]).collect();
        let p = fit_aggd(&xs).unwrap();
        assert!((p.beta_l / p.beta_r - 1.0).abs() < 1e-6);
        assert!(p.eta.abs() < 1e-9);
    }

    #[test]
    fn aggd_recovers_asymmetric() {
        let xs = sample_aggd(2.0, 1.0, 3.0, 1_000_000, 5);
        let p = fit_aggd(&xs).unwrap();
        assert!((p.gamma / 2.0 - 1.0).abs() < 0.05, "{p:?}");
        assert!((p.beta_l / 1.0 - 1.0).abs() < 0.05, "{p:?}");
        assert!((p.beta_r / 3.0 - 1.0).abs() < 0.05, "{p:?}");
        let expected = aggd_eta(p.gamma, p.beta_l, p.beta_r);
        assert_eq!(p.eta, expected);
    }

    #[test]
    fn aggd_scale_equivariance() {
        let xs = sample_aggd(1.2, 0.5, 0.8, 4000, 6);
        let k = 0.25;
        let ys: Vec<f64> = xs.iter().map(|x| k * x).collect();
        let (a, b) = (fit_aggd(&xs).unwrap(), fit_aggd(&ys).unwrap());
        assert_eq!(a.gamma, b.gamma);
        assert!((b.beta_l / (k * a.beta_l) - 1.0).abs() < 1e-9);
        assert!((b.beta_r / (k * a.beta_r) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggd_errors() {
        let positive: Vec<f64> = (1..50).map(|i| i as f64).collect();
        assert!(matches!(fit_aggd(&positive), Err(Error::OneSidedSamples)));
        assert!(matches!(
            fit_aggd(&[1.0, -1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn eta_matches_gamma_function_definition() {
        use statrs::function::gamma::gamma;
        for &(g, bl, br) in &[(0.8, 1.0, 0.4), (2.0, 1.0, 3.0), (5.5, 0.2, 0.25)] {
            let direct = (bl - br) * gamma(2.0 / g) / gamma(1.0 / g);
            assert!((aggd_eta(g, bl, br) - direct).abs() <= 1e-9 * direct.abs());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn fits_are_permutation_invariant(seed in 0u64..10_000) {
            let xs = sample_aggd(1.4, 0.6, 1.1, 500, seed);
            let mut ys = xs.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for i in (1..ys.len()).rev() {
                ys.swap(i, rng.random_range(0..=i));
            }
            let (a, b) = (fit_ggd(&xs).unwrap(), fit_ggd(&ys).unwrap());
            proptest::prop_assert_eq!(a.alpha, b.alpha);
            proptest::prop_assert!((a.beta - b.beta).abs() <= 1e-12 * a.beta);
            let (a, b) = (fit_aggd(&xs).unwrap(), fit_aggd(&ys).unwrap());
            proptest::prop_assert_eq!(a.gamma, b.gamma);
            proptest::prop_assert!((a.beta_l - b.beta_l).abs() <= 1e-12 * a.beta_l);
            proptest::prop_assert!((a.beta_r - b.beta_r).abs() <= 1e-12 * a.beta_r);
        }
    }
}
