//! Bootstrap ensembles of CART classification trees.
//!
//! Besides predictions, a [`Forest`] exposes what proximity computations
//! need: the leaf each record reaches in each tree ([`apply`]) and the
//! per-tree bootstrap multiplicities ([`Forest::inbag_counts`],
//! [`oob_indicator`]).

mod tree;

pub use tree::{DecisionTree, Node};

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{balanced_class_weights, Dataset, FeatureSchema};
use crate::rng::{stream, tags};
use tree::{GrowSettings, TreeBuilder};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data holds a single class")]
    SingleClassInput,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("dataset schema does not match the schema the forest was trained on")]
    SchemaMismatch,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
    /// Shannon entropy in nats; selects the same splits as `Entropy`.
    LogLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    /// Number of features tried per split, at least one.
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (p as f64).log2().ceil() as usize,
            MaxFeatures::All => p,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    Uniform,
    /// `n / (K * n_J)` from the training labels.
    Balanced,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub min_samples_leaf: usize,
    pub class_weight: ClassWeight,
    /// When false every tree sees each training record exactly once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            criterion: Criterion::Gini,
            min_samples_leaf: 1,
            class_weight: ClassWeight::Balanced,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self, n_classes: usize) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidParams(m));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be at least 1 when bounded".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if let ClassWeight::Custom(w) = &self.class_weight {
            if w.len() != n_classes || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return bad(format!("custom class weights need {n_classes} positive finite values"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub params: ForestParams,
    pub schema: FeatureSchema,
    pub classes: Vec<String>,
    pub class_weights: Vec<f64>,
    pub trees: Vec<DecisionTree>,
    /// Per tree, in-bag multiplicity of each training record.
    pub bootstrap: Vec<Vec<u32>>,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_train(&self) -> usize {
        self.bootstrap.first().map_or(0, Vec::len)
    }

    pub fn inbag_counts(&self, tree: usize) -> &[u32] {
        &self.bootstrap[tree]
    }

    /// Record ids sampled for `tree`, with repetition, ascending.
    pub fn bootstrap_multiset(&self, tree: usize) -> Vec<usize> {
        self.bootstrap[tree].iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect()
    }

    pub fn check_schema(&self, d: &Dataset) -> Result<(), ForestError> {
        if d.schema().is_compatible_with(&self.schema) {
            Ok(())
        } else {
            Err(ForestError::SchemaMismatch)
        }
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), ForestError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Forest, ForestError> {
        let f: Forest = serde_json::from_reader(r)?;
        if f.format_version != FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(f.format_version));
        }
        Ok(f)
    }
}

/// Grows `params.n_trees` trees, each on its own bootstrap sample, in
/// parallel. Tree `t` draws all its randomness from a stream keyed by
/// `(seed, t)`, so the forest is identical for any thread count.
pub fn fit_forest(train: &Dataset, params: &ForestParams) -> Result<Forest, ForestError> {
    let k = train.n_classes();
    params.validate(k)?;
    let present = train.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(ForestError::SingleClassInput);
    }
    let class_weights = match &params.class_weight {
        ClassWeight::Uniform => vec![1.0; k],
        ClassWeight::Custom(w) => w.clone(),
        ClassWeight::Balanced => {
            // classes declared but absent from this subset get weight 0
            let counts = train.class_counts();
            let present_ids: Vec<usize> = (0..k).filter(|&j| counts[j] > 0).collect();
            let remapped: Vec<usize> =
                train.labels().iter().map(|l| present_ids.iter().position(|j| j == l).unwrap()).collect();
            let w = balanced_class_weights(&remapped, present_ids.len())?;
            let mut full = vec![0.0; k];
            for (pos, &j) in present_ids.iter().enumerate() {
                full[j] = w[pos];
            }
            full
        }
    };
    let n = train.n_records();
    let max_features = params.max_features.resolve(train.n_features());

    let grown: Vec<(DecisionTree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(params.seed, tags::TREE, t as u64);
            let mut counts = vec![0u32; n];
            let samples: Vec<usize> = if params.bootstrap {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect()
            } else {
                counts.iter_mut().for_each(|c| *c = 1);
                (0..n).collect()
            };
            let settings = GrowSettings {
                criterion: params.criterion,
                max_depth: params.max_depth,
                min_samples_leaf: params.min_samples_leaf,
                max_features,
                class_weights: &class_weights,
            };
            let tree = TreeBuilder::new(train, settings, &mut rng).grow(samples);
            (tree, counts)
        })
        .collect();
    let (trees, bootstrap) = grown.into_iter().unzip();

    Ok(Forest {
        format_version: FORMAT_VERSION,
        params: params.clone(),
        schema: train.schema().clone(),
        classes: train.classes().to_vec(),
        class_weights,
        trees,
        bootstrap,
    })
}

/// Leaf reached by every record in every tree, row-major `n x T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafMatrix {
    pub n: usize,
    pub n_trees: usize,
    pub leaves: Vec<u32>,
}

impl LeafMatrix {
    pub fn leaf(&self, record: usize, tree: usize) -> u32 {
        self.leaves[record * self.n_trees + tree]
    }

    pub fn row(&self, record: usize) -> &[u32] {
        &self.leaves[record * self.n_trees..(record + 1) * self.n_trees]
    }
}

pub fn apply(f: &Forest, d: &Dataset) -> Result<LeafMatrix, ForestError> {
    f.check_schema(d)?;
    let t = f.n_trees();
    let leaves: Vec<u32> = (0..d.n_records())
        .into_par_iter()
        .flat_map_iter(|i| {
            let row = d.row(i);
            f.trees.iter().map(move |tree| tree.leaf_of(row) as u32)
        })
        .collect();
    Ok(LeafMatrix { n: d.n_records(), n_trees: t, leaves })
}

/// Mean of the reached leaves' class distributions; one row per record.
pub fn predict_proba(f: &Forest, d: &Dataset) -> Result<Vec<Vec<f64>>, ForestError> {
    f.check_schema(d)?;
    let k = f.n_classes();
    let t = f.n_trees() as f64;
    Ok((0..d.n_records())
        .into_par_iter()
        .map(|i| {
            let row = d.row(i);
            let mut acc = vec![0.0; k];
            for tree in &f.trees {
                for (a, p) in acc.iter_mut().zip(tree.distribution_of(row)) {
                    *a += p;
                }
            }
            acc.iter_mut().for_each(|a| *a /= t);
            acc
        })
        .collect())
}

/// Index of the largest probability; ties go to the smaller class id.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = j;
        }
    }
    best
}

pub fn predict(f: &Forest, d: &Dataset) -> Result<Vec<usize>, ForestError> {
    Ok(predict_proba(f, d)?.iter().map(|r| argmax(r)).collect())
}

/// `oob[i][t]` is true when training record `i` was not drawn for tree `t`.
pub fn oob_indicator(f: &Forest) -> Vec<Vec<bool>> {
    (0..f.n_train()).map(|i| f.bootstrap.iter().map(|b| b[i] == 0).collect()).collect()
}
