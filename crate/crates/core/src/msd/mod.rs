//! Spatial-discontinuity feature (singular values of non-overlapping patches),
//! the reference-feature loss, and the regressor path that maps the pooled
//! spectrum to a 0–10 quality score.

mod features;
pub mod forest;

use std::path::Path;

pub use features::{msd_feature_loss, msd_features, tile_spectrum, MsdFeature};
pub use forest::{forest_predict, forest_train, ForestModel, ForestParams, Node, Tree};

use crate::error::{Error, Result};
use crate::image_io::GrayImage;

pub const DEFAULT_MSD_PATCH: usize = 32;

/// A trained model mapping an MSD feature vector to a quality score.
pub trait Regressor: Send + Sync {
    fn name(&self) -> &'static str;
    fn n_features(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<f64>;
}

/// Regressor prediction on the pooled spectrum, clamped to `[0, 10]`.
/// Higher means better quality.
pub fn ma_score(img: &GrayImage, model: &dyn Regressor, patch: usize) -> Result<f64> {
    if model.n_features() != patch {
        return Err(Error::FeatureLength {
            expected: model.n_features(),
            got: patch,
        });
    }
    let feat = msd_features(img, patch)?;
    Ok(model.predict(&feat.pooled)?.clamp(0.0, 10.0))
}

/// Reads a training table: each row is the feature values followed by the
/// score. A first row that does not parse as numbers is treated as a header.
pub fn read_training_csv(path: impl AsRef<Path>) -> Result<Vec<(Vec<f64>, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_training_csv(&text)
}

pub fn parse_training_csv(text: &str) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Csv(format!("line {}: {e}", line + 1))),
        };
        if values.len() < 2 {
            return Err(Error::Csv(format!(
                "line {}: need at least one feature and a score",
                line + 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Csv(format!("line {}: non-finite value", line + 1)));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Csv(format!(
                    "line {}: {} columns, expected {w}",
                    line + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        let (score, feats) = values.split_last().expect("at least two values");
        rows.push((feats.to_vec(), *score));
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msd::forest::Tree;

    fn constant_forest(n_features: usize, value: f64) -> ForestModel {
        ForestModel {
            n_features,
            params: ForestParams::default(),
            trees: vec![Tree {
                nodes: vec![Node::Leaf { value }],
            }],
        }
    }

    #[test]
    fn ma_score_clamps() {
        let img = crate::synth::dead_leaves(64, 64, 1).unwrap();
        assert_eq!(
            ma_score(&img, &constant_forest(32, 10.0), 32).unwrap(),
            10.0
        );
        assert_eq!(
            ma_score(&img, &constant_forest(32, 12.0), 32).unwrap(),
            10.0
        );
        assert_eq!(ma_score(&img, &constant_forest(32, -3.0), 32).unwrap(), 0.0);
        assert!(matches!(
            ma_score(&img, &constant_forest(16, 1.0), 32),
            Err(Error::FeatureLength { .. })
        ));
    }

    #[test]
    fn csv_parsing() {
        let rows = parse_training_csv("f1,f2,score\n1,2,3\n4, 5 ,6\n").unwrap();
        assert_eq!(rows, vec![(vec![1.0, 2.0], 3.0), (vec![4.0, 5.0], 6.0)]);
        assert_eq!(parse_training_csv("1,2\n3,4\n").unwrap().len(), 2);
        assert!(parse_training_csv("1,2,3\n4,5\n").is_err());
        assert!(parse_training_csv("1,2\nx,4\n").is_err());
        assert!(parse_training_csv("a,b\n").is_err());
        assert!(parse_training_csv("1\n").is_err());
    }
}
