//! Loss terms behind a common trait, constructed by name from a registry.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image_io::{mse_loss, GrayImage};
use crate::msd::{ma_score, msd_feature_loss, msd_features, MsdFeature, Regressor};
use crate::niqe::{niqe_score, MvgModel};

/// Which column of the per-term breakdown a term reports into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermSlot {
    Mse,
    Niqe,
    Ma,
}

/// One unweighted loss term evaluated on a candidate image.
pub trait LossTerm: Send + Sync {
    fn name(&self) -> &'static str;
    fn slot(&self) -> TermSlot;
    fn evaluate(&self, img: &GrayImage) -> Result<f64>;
}

/// Everything a term may need at construction time.
#[derive(Clone, Copy)]
pub struct LossResources<'a> {
    pub hr: Option<&'a GrayImage>,
    pub natural: Option<&'a MvgModel>,
    pub regressor: Option<&'a dyn Regressor>,
    /// Patch side for the reference-feature Ma term.
    pub msd_patch: usize,
    /// Square the NIQE distance (the `L_PS` form) or use it as is.
    pub niqe_squared: bool,
}

impl Default for LossResources<'_> {
    fn default() -> Self {
        Self {
            hr: None,
            natural: None,
            regressor: None,
            msd_patch: crate::msd::DEFAULT_MSD_PATCH,
            niqe_squared: true,
        }
    }
}

pub struct MseTerm<'a> {
    hr: &'a GrayImage,
}

impl LossTerm for MseTerm<'_> {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn slot(&self) -> TermSlot {
        TermSlot::Mse
    }

    fn evaluate(&self, img: &GrayImage) -> Result<f64> {
        mse_loss(img, self.hr)
    }
}

pub struct NiqeTerm<'a> {
    natural: &'a MvgModel,
    squared: bool,
}

impl LossTerm for NiqeTerm<'_> {
    fn name(&self) -> &'static str {
        "niqe"
    }

    fn slot(&self) -> TermSlot {
        TermSlot::Niqe
    }

    fn evaluate(&self, img: &GrayImage) -> Result<f64> {
        let d = niqe_score(img, self.natural)?;
        Ok(if self.squared { d * d } else { d })
    }
}

/// Squared distance between the candidate's MSD feature and the reference's,
/// which is computed once up front.
pub struct MaReferenceTerm {
    reference: MsdFeature,
}

impl MaReferenceTerm {
    pub fn new(hr: &GrayImage, patch: usize) -> Result<Self> {
        Ok(Self {
            reference: msd_features(hr, patch)?,
        })
    }
}

impl LossTerm for MaReferenceTerm {
    fn name(&self) -> &'static str {
        "ma-ref"
    }

    fn slot(&self) -> TermSlot {
        TermSlot::Ma
    }

    fn evaluate(&self, img: &GrayImage) -> Result<f64> {
        msd_feature_loss(&msd_features(img, self.reference.patch)?, &self.reference)
    }
}

/// `10 − Ma`: the regressor's quality score turned into a lower-is-better loss.
pub struct MaRegressorTerm<'a> {
    regressor: &'a dyn Regressor,
}

impl LossTerm for MaRegressorTerm<'_> {
    fn name(&self) -> &'static str {
        "ma-forest"
    }

    fn slot(&self) -> TermSlot {
        TermSlot::Ma
    }

    fn evaluate(&self, img: &GrayImage) -> Result<f64> {
        Ok(10.0 - ma_score(img, self.regressor, self.regressor.n_features())?)
    }
}

pub type TermFactory = for<'a> fn(&LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>>;

fn build_mse<'a>(res: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    let hr = res.hr.ok_or(Error::MissingInput {
        term: "mse".into(),
        what: "a reference image",
    })?;
    Ok(Box::new(MseTerm { hr }))
}

fn build_niqe<'a>(res: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    let natural = res.natural.ok_or(Error::MissingInput {
        term: "niqe".into(),
        what: "a natural-image model",
    })?;
    Ok(Box::new(NiqeTerm {
        natural,
        squared: res.niqe_squared,
    }))
}

fn build_ma_ref<'a>(res: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    let hr = res.hr.ok_or(Error::MissingInput {
        term: "ma-ref".into(),
        what: "a reference image",
    })?;
    Ok(Box::new(MaReferenceTerm::new(hr, res.msd_patch)?))
}

fn build_ma_forest<'a>(res: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    let regressor = res.regressor.ok_or(Error::MissingInput {
        term: "ma-forest".into(),
        what: "a trained regressor",
    })?;
    Ok(Box::new(MaRegressorTerm { regressor }))
}

fn not_implemented(name: &'static str) -> Error {
    Error::TermNotImplemented(name.to_string())
}

fn build_vgg<'a>(_: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    Err(not_implemented("vgg"))
}

fn build_adv<'a>(_: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    Err(not_implemented("adv"))
}

fn build_style<'a>(_: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
    Err(not_implemented("style"))
}

/// Name → constructor map for loss terms.
#[derive(Clone)]
pub struct TermRegistry {
    factories: BTreeMap<&'static str, TermFactory>,
}

impl TermRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `mse`, `niqe`, `ma-ref`, `ma-forest`, plus `vgg`, `adv` and `style`,
    /// which fail with "not implemented" instead of being dropped.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("mse", build_mse);
        r.register("niqe", build_niqe);
        r.register("ma-ref", build_ma_ref);
        r.register("ma-forest", build_ma_forest);
        r.register("vgg", build_vgg);
        r.register("adv", build_adv);
        r.register("style", build_style);
        r
    }

    pub fn register(&mut self, name: &'static str, factory: TermFactory) {
        self.factories.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build<'a>(&self, name: &str, res: &LossResources<'a>) -> Result<Box<dyn LossTerm + 'a>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownTerm(name.to_string()))?;
        factory(res)
    }
}

impl Default for TermRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
