//! Natural-scene-statistics features: MSCN coefficients, sharpness-gated
//! patch selection, GGD/AGGD moment fitting and the 18-parameter patch vector.

pub mod features;
pub mod fit;
pub mod mscn;

pub use features::{neighbor_products, patch_features, Orientation, PatchFeature18};
pub use fit::{
    aggd_eta, fit_aggd, fit_aggd_detailed, fit_ggd, fit_ggd_detailed, ggd_ratio, AggdParams,
    AlphaGrid, GgdParams, GridHit,
};
pub use mscn::{
    compute_mscn, compute_mscn_weighted, select_patches, tile_origins, window_weights, MscnField,
    WindowWeighting,
};
