use serde::{Deserialize, Serialize};

use super::fit::{fit_aggd, fit_ggd, AggdParams, GgdParams};
use super::mscn::MscnField;
use crate::error::{Error, Result};

/// Neighbour orientation for pairwise MSCN products, in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
    MainDiagonal,
    AntiDiagonal,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Horizontal,
        Orientation::Vertical,
        Orientation::MainDiagonal,
        Orientation::AntiDiagonal,
    ];

    /// Offset `(dx, dy)` of the neighbour.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Orientation::Horizontal => (1, 0),
            Orientation::Vertical => (0, 1),
            Orientation::MainDiagonal => (1, 1),
            Orientation::AntiDiagonal => (-1, 1),
        }
    }
}

/// The 18 per-patch NSS parameters.
///
/// Flattened order: `[α, β, γ_H, βl_H, βr_H, η_H, γ_V, …, η_V, γ_D1, …, η_D1, γ_D2, …, η_D2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchFeature18 {
    pub ggd: GgdParams,
    pub aggd: [AggdParams; 4],
}

impl PatchFeature18 {
    pub const LEN: usize = 18;

    pub const NAMES: [&'static str; 18] = [
        "alpha",
        "beta", //
        "gamma_h",
        "beta_l_h",
        "beta_r_h",
        "eta_h", //
        "gamma_v",
        "beta_l_v",
        "beta_r_v",
        "eta_v", //
        "gamma_d1",
        "beta_l_d1",
        "beta_r_d1",
        "eta_d1", //
        "gamma_d2",
        "beta_l_d2",
        "beta_r_d2",
        "eta_d2",
    ];

    pub fn to_array(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        out[0] = self.ggd.alpha;
        out[1] = self.ggd.beta;
        for (k, a) in self.aggd.iter().enumerate() {
            out[2 + 4 * k..6 + 4 * k].copy_from_slice(&[a.gamma, a.beta_l, a.beta_r, a.eta]);
        }
        out
    }
}

/// Products `c(x, y) · c(x + dx, y + dy)` for every pair inside the patch.
pub fn neighbor_products(
    field: &MscnField,
    origin: (usize, usize),
    patch: usize,
    orientation: Orientation,
) -> Vec<f64> {
    let (x0, y0) = origin;
    let (dx, dy) = orientation.offset();
    let mut out = Vec::with_capacity(patch * patch);
    for y in 0..patch {
        let ny = y as isize + dy;
        if ny < 0 || ny >= patch as isize {
            continue;
        }
        for x in 0..patch {
            let nx = x as isize + dx;
            if nx < 0 || nx >= patch as isize {
                continue;
            }
            out.push(
                field.coeff_at(x0 + x, y0 + y) * field.coeff_at(x0 + nx as usize, y0 + ny as usize),
            );
        }
    }
    out
}

/// GGD fit of the patch's MSCN coefficients plus AGGD fits of the four
/// neighbour-product maps.
pub fn patch_features(
    field: &MscnField,
    origin: (usize, usize),
    patch: usize,
) -> Result<PatchFeature18> {
    let (x0, y0) = origin;
    if patch < 2 || x0 + patch > field.width || y0 + patch > field.height {
        return Err(Error::invalid(format!(
            "patch {patch} at ({x0}, {y0}) does not fit a {}x{} field",
            field.width, field.height
        )));
    }
    let coeffs: Vec<f64> = (y0..y0 + patch)
        .flat_map(|y| (x0..x0 + patch).map(move |x| (x, y)))
        .map(|(x, y)| field.coeff_at(x, y))
        .collect();
    let ggd = fit_ggd(&coeffs)?;
    let mut aggd = [AggdParams {
        gamma: 0.0,
        beta_l: 0.0,
        beta_r: 0.0,
        eta: 0.0,
    }; 4];
    for (slot, o) in aggd.iter_mut().zip(Orientation::ALL) {
        *slot = fit_aggd(&neighbor_products(field, origin, patch, o))?;
    }
    Ok(PatchFeature18 { ggd, aggd })
}
