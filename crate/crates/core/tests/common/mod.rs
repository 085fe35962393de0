#![allow(dead_code)]

use perceptiq_core::synth::dead_leaves;
use perceptiq_core::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Symmetric generalized Gaussian: |x| = β·G^(1/α) with G ~ Gamma(1/α, 1).
pub fn sample_ggd(alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
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

/// Two-sided AGGD: each side is a half-GGD, chosen with probability
/// proportional to its scale.
pub fn sample_aggd(gamma: f64, bl: f64, br: f64, n: usize, seed: u64) -> Vec<f64> {
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

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let total: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Singular values of a square row-major matrix as sqrt(eig(AᵀA)), descending.
pub fn oracle_singular_values(m: &[f64], n: usize) -> Vec<f64> {
    let mut ata = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            ata[i * n + j] = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
        }
    }
    let mut sv: Vec<f64> = jacobi_eigenvalues(ata, n)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn random_matrix(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
}

/// Seeded dead-leaves images, `count` of them starting at `first_seed`.
pub fn desk_corpus(count: usize, side: usize, first_seed: u64) -> Vec<GrayImage> {
    (0..count as u64)
        .map(|i| dead_leaves(side, side, first_seed + i).unwrap())
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
