//! Composite explicit losses and the pixel-space descent probe.

pub mod probe;
mod spec;
pub mod terms;

pub use probe::{
    finite_difference_gradient, probe_descent, ProbeError, ProbeOptions, ProbeStep, ProbeTrace,
    MAX_PROBE_SIDE,
};
pub use spec::{parse_preset, table1_preset, LossSpec, MaVariant, TABLE1_WEIGHTS};
pub use terms::{LossResources, LossTerm, TermRegistry, TermSlot};

use crate::error::{Error, Result};
use crate::image_io::GrayImage;

/// Weighted contributions of each term and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub niqe: f64,
    pub ma: f64,
}

impl LossBreakdown {
    fn add(&mut self, slot: TermSlot, weighted: f64) {
        match slot {
            TermSlot::Mse => self.mse += weighted,
            TermSlot::Niqe => self.niqe += weighted,
            TermSlot::Ma => self.ma += weighted,
        }
        self.total += weighted;
    }
}

/// A set of weighted terms built from a [`LossSpec`] via a [`TermRegistry`].
pub struct CompositeLoss<'a> {
    terms: Vec<(f64, Box<dyn LossTerm + 'a>)>,
}

impl<'a> CompositeLoss<'a> {
    pub fn new(spec: &LossSpec, res: &LossResources<'a>) -> Result<Self> {
        Self::with_registry(spec, res, &TermRegistry::builtin())
    }

    pub fn with_registry(
        spec: &LossSpec,
        res: &LossResources<'a>,
        registry: &TermRegistry,
    ) -> Result<Self> {
        spec.validate()?;
        let res = LossResources {
            niqe_squared: spec.niqe_squared,
            ..*res
        };
        let terms = spec
            .active_terms()
            .into_iter()
            .map(|(name, w)| Ok((w, registry.build(name, &res)?)))
            .collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    pub fn term_names(&self) -> Vec<&'static str> {
        self.terms.iter().map(|(_, t)| t.name()).collect()
    }

    pub fn evaluate(&self, img: &GrayImage) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        for (w, term) in &self.terms {
            let v = term.evaluate(img)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{} term evaluated to {v}",
                    term.name()
                )));
            }
            out.add(term.slot(), w * v);
        }
        Ok(out)
    }

    pub fn total(&self, img: &GrayImage) -> Result<f64> {
        self.evaluate(img).map(|b| b.total)
    }
}

/// One-shot evaluation of `spec` on `img`.
pub fn composite_loss(
    img: &GrayImage,
    spec: &LossSpec,
    res: &LossResources<'_>,
) -> Result<LossBreakdown> {
    CompositeLoss::new(spec, res)?.evaluate(img)
}
