use std::fmt;

use crate::error::{Error, Result};

/// Which Ma loss path a spec uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaVariant {
    /// Squared distance to the reference image's MSD feature vector.
    #[default]
    Reference,
    /// Trained regressor score on the pooled MSD feature.
    Regressor,
}

impl MaVariant {
    pub fn term_name(self) -> &'static str {
        match self {
            MaVariant::Reference => "ma-ref",
            MaVariant::Regressor => "ma-forest",
        }
    }
}

/// Weights of the implemented loss terms:
/// `total = w_mse·L_mse + epsilon·L_niqe + zeta·L_ma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub w_mse: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub ma_variant: MaVariant,
    /// `true` uses D², `false` uses D for the NIQE term.
    pub niqe_squared: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            w_mse: 10.0,
            epsilon: 0.0,
            zeta: 0.0,
            ma_variant: MaVariant::Reference,
            niqe_squared: true,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("mse", self.w_mse),
            ("niqe", self.epsilon),
            ("ma", self.zeta),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "weight of `{name}` must be finite and >= 0, got {w}"
                )));
            }
        }
        if self.w_mse == 0.0 && self.epsilon == 0.0 && self.zeta == 0.0 {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }

    /// `(registry name, weight)` for every term with a positive weight.
    pub fn active_terms(&self) -> Vec<(&'static str, f64)> {
        [
            ("mse", self.w_mse),
            ("niqe", self.epsilon),
            (self.ma_variant.term_name(), self.zeta),
        ]
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .collect()
    }

    /// Same spec with every weight multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_mse: self.w_mse * k,
            epsilon: self.epsilon * k,
            zeta: self.zeta * k,
            ..*self
        }
    }

    /// Parses `term:weight[,term:weight…]` with terms `mse`, `niqe`, `ma-ref`
    /// and `ma-forest`. Unlisted terms get weight zero. `vgg`, `adv` and
    /// `style` are recognized but rejected as not implemented.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = LossSpec {
            w_mse: 0.0,
            epsilon: 0.0,
            zeta: 0.0,
            ma_variant: MaVariant::Reference,
            niqe_squared: true,
        };
        let mut seen: Vec<&str> = Vec::new();
        let mut ma_seen: Option<&str> = None;
        let mut position = 0;
        for token in text.split(',') {
            let err = |offset: usize, message: String| Error::SpecParse {
                position: position + offset,
                token: token.to_string(),
                message,
            };
            let trimmed = token.trim();
            let lead = token.len() - token.trim_start().len();
            if trimmed.is_empty() {
                return Err(err(0, "empty term".into()));
            }
            let Some((name, weight)) = trimmed.split_once(':') else {
                return Err(err(lead, "expected `term:weight`".into()));
            };
            let name = name.trim();
            let weight_text = weight.trim();
            let weight_pos = lead + trimmed.find(':').unwrap_or(0) + 1;
            if weight_text.is_empty() {
                return Err(err(weight_pos, format!("missing weight after `{name}:`")));
            }
            let w: f64 = weight_text
                .parse()
                .map_err(|_| err(weight_pos, format!("invalid weight `{weight_text}`")))?;
            if !w.is_finite() || w < 0.0 {
                return Err(err(
                    weight_pos,
                    format!("weight must be finite and >= 0, got {w}"),
                ));
            }
            if seen.contains(&name) {
                return Err(err(lead, format!("term `{name}` given twice")));
            }
            match name {
                "mse" => spec.w_mse = w,
                "niqe" => spec.epsilon = w,
                "ma-ref" | "ma-forest" => {
                    if let Some(other) = ma_seen {
                        return Err(err(
                            lead,
                            format!("`{name}` conflicts with `{other}`; choose one Ma variant"),
                        ));
                    }
                    ma_seen = Some(if name == "ma-ref" {
                        "ma-ref"
                    } else {
                        "ma-forest"
                    });
                    spec.zeta = w;
                    spec.ma_variant = if name == "ma-ref" {
                        MaVariant::Reference
                    } else {
                        MaVariant::Regressor
                    };
                }
                "vgg" | "adv" | "style" => return Err(Error::TermNotImplemented(name.into())),
                other => return Err(err(lead, format!("unknown term `{other}`"))),
            }
            seen.push(name);
            position += token.len() + 1;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .active_terms()
            .into_iter()
            .map(|(n, w)| format!("{n}:{w}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// `(w1, w2, w3, w4, w5)` = (vgg, adv, style, niqe, ma) weights of the 32
/// loss combinations; the pixel loss always carries weight 10.
pub const TABLE1_WEIGHTS: [[f64; 5]; 32] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.1, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.1, 0.0, 0.0, 0.0],
    [0.0, 0.0, 10.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.01, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.001],
    [0.1, 0.1, 0.0, 0.0, 0.0],
    [0.1, 0.0, 10.0, 0.0, 0.0],
    [0.1, 0.0, 0.0, 0.01, 0.0],
    [0.1, 0.0, 0.0, 0.0, 0.001],
    [0.0, 0.1, 10.0, 0.0, 0.0],
    [0.0, 0.1, 0.0, 0.01, 0.0],
    [0.0, 0.1, 0.0, 0.0, 0.001],
    [0.0, 0.0, 10.0, 0.01, 0.0],
    [0.0, 0.0, 10.0, 0.0, 0.001],
    [0.0, 0.0, 0.0, 0.01, 0.001],
    [0.1, 0.1, 10.0, 0.0, 0.0],
    [0.1, 0.1, 0.0, 0.01, 0.0],
    [0.1, 0.1, 0.0, 0.0, 0.001],
    [0.1, 0.0, 10.0, 0.01, 0.0],
    [0.1, 0.0, 10.0, 0.0, 0.001],
    [0.1, 0.0, 0.0, 0.01, 0.001],
    [0.0, 0.1, 10.0, 0.01, 0.0],
    [0.0, 0.0, 10.0, 0.01, 0.001],
    [0.0, 0.1, 0.0, 0.01, 0.001],
    [0.0, 0.1, 10.0, 0.0, 0.001],
    [0.1, 0.1, 10.0, 0.01, 0.0],
    [0.1, 0.1, 10.0, 0.0, 0.001],
    [0.1, 0.1, 0.0, 0.01, 0.001],
    [0.1, 0.0, 10.0, 0.01, 0.001],
    [0.0, 0.1, 10.0, 0.01, 0.001],
    [0.1, 0.1, 10.0, 0.01, 0.001],
];

/// Loss spec for a 1-based row of the weight table. Rows that need the VGG,
/// adversarial or style terms fail with [`Error::TermNotImplemented`]. The
/// NIQE term is the plain distance (not squared) and Ma uses `ma_variant`.
pub fn table1_preset(row: usize, ma_variant: MaVariant) -> Result<LossSpec> {
    let w = TABLE1_WEIGHTS
        .get(row.wrapping_sub(1))
        .ok_or_else(|| Error::invalid(format!("preset row must be 1..=32, got {row}")))?;
    for (name, weight) in ["vgg", "adv", "style"].iter().zip(&w[..3]) {
        if *weight != 0.0 {
            return Err(Error::TermNotImplemented((*name).to_string()));
        }
    }
    Ok(LossSpec {
        w_mse: 10.0,
        epsilon: w[3],
        zeta: w[4],
        ma_variant,
        niqe_squared: false,
    })
}

/// Accepts `table1-<row>` or `row<row>`.
pub fn parse_preset(name: &str, ma_variant: MaVariant) -> Result<LossSpec> {
    let digits = name
        .strip_prefix("table1-")
        .or_else(|| name.strip_prefix("row"))
        .ok_or_else(|| Error::invalid(format!("unknown preset `{name}` (use table1-<1..32>)")))?;
    let row: usize = digits
        .parse()
        .map_err(|_| Error::invalid(format!("unknown preset `{name}` (use table1-<1..32>)")))?;
    table1_preset(row, ma_variant)
}
