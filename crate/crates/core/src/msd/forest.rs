//! CART regression trees and a bootstrap random forest.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or `min_leaf` stops splitting.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
    /// Candidate features per node; `None` means `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 5,
            seed: 0,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat node array; node 0 is the root. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format_version: u32,
    n_features: usize,
    params: ForestParams,
    trees: Vec<Tree>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    max_features: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, samples, 0usize)];
        let n_features = self.x[0].len();
        let mut order: Vec<usize> = (0..n_features).collect();

        while let Some((slot, idx, depth)) = stack.pop() {
            let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
            let first = self.y[idx[0]];
            let pure = idx.iter().all(|&i| self.y[i] == first);
            let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
            if pure || !depth_ok || idx.len() < 2 * self.params.min_leaf {
                nodes[slot] = Node::Leaf { value: mean };
                continue;
            }
            order.shuffle(rng);
            let mut best: Option<Split> = None;
            for (tried, &f) in order.iter().enumerate() {
                if tried >= self.max_features && best.is_some() {
                    break;
                }
                if let Some(s) = self.best_split(&idx, f) {
                    if best.as_ref().is_none_or(|b| s.score > b.score) {
                        best = Some(s);
                    }
                }
            }
            let Some(split) = best else {
                nodes[slot] = Node::Leaf { value: mean };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = idx
                .iter()
                .partition(|&&i| self.x[i][split.feature] <= split.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            let right = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        Tree { nodes }
    }

    /// Variance-reduction split on one feature; maximizes `S_l²/n_l + S_r²/n_r`.
    fn best_split(&self, idx: &[usize], feature: usize) -> Option<Split> {
        let mut pairs: Vec<(f64, f64)> = idx
            .iter()
            .map(|&i| (self.x[i][feature], self.y[i]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let min_leaf = self.params.min_leaf.max(1);
        let mut left_sum = 0.0;
        let mut best: Option<Split> = None;
        for k in 0..n - 1 {
            left_sum += pairs[k].1;
            let nl = k + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let (a, b) = (pairs[k].0, pairs[k + 1].0);
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(Split {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }
}

/// Trains a seeded forest. Each tree draws from its own ChaCha stream, so the
/// result does not depend on thread scheduling.
pub fn forest_train(rows: &[(Vec<f64>, f64)], params: &ForestParams) -> Result<ForestModel> {
    if rows.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: rows.len(),
        });
    }
    let n_features = rows[0].0.len();
    if n_features == 0 {
        return Err(Error::invalid("training rows have no features"));
    }
    if let Some((f, _)) = rows.iter().find(|(f, _)| f.len() != n_features) {
        return Err(Error::FeatureLength {
            expected: n_features,
            got: f.len(),
        });
    }
    if rows
        .iter()
        .any(|(f, y)| !y.is_finite() || f.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("training table".into()));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::invalid("n_trees and min_leaf must be at least 1"));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);
    let builder = TreeBuilder {
        x: &x,
        y: &y,
        params,
        max_features,
    };
    let n = rows.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(samples, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        n_features,
        params: *params,
        trees,
    })
}

/// Mean of the per-tree predictions.
pub fn forest_predict(model: &ForestModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.n_features {
        return Err(Error::FeatureLength {
            expected: model.n_features,
            got: features.len(),
        });
    }
    let sum: f64 = model.trees.iter().map(|t| t.predict(features)).sum();
    Ok(sum / model.trees.len() as f64)
}

impl ForestModel {
    pub fn to_json(&self) -> String {
        let file = ForestFile {
            format_version: FOREST_FORMAT_VERSION,
            n_features: self.n_features,
            params: self.params,
            trees: self.trees.clone(),
        };
        let mut s = serde_json::to_string(&file).expect("forest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ForestFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: FOREST_FORMAT_VERSION,
            });
        }
        if file.trees.is_empty() {
            return Err(Error::ModelFile("forest has no trees".into()));
        }
        for tree in &file.trees {
            if tree.nodes.is_empty() {
                return Err(Error::ModelFile("empty tree".into()));
            }
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        if feature >= file.n_features
                            || !threshold.is_finite()
                            || left >= tree.nodes.len()
                            || right >= tree.nodes.len()
                        {
                            return Err(Error::ModelFile("invalid split node".into()));
                        }
                    }
                    Node::Leaf { value } if !value.is_finite() => {
                        return Err(Error::ModelFile("non-finite leaf".into()));
                    }
                    Node::Leaf { .. } => {}
                }
            }
        }
        Ok(Self {
            n_features: file.n_features,
            params: file.params,
            trees: file.trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

impl Regressor for ForestModel {
    fn name(&self) -> &'static str {
        "random-forest"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        forest_predict(self, features)
    }
}
