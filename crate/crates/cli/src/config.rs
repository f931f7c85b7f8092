//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use proxforest::data::SyntheticSpec;
use proxforest::forest::{ClassWeight, Criterion, ForestParams, MaxFeatures};
use proxforest::mds::{MdsMethod, MdsOptions};
use proxforest::modelsel::{Grid, Scoring};
use proxforest::outlier::{Deviation, OutlierConfig, ThresholdAnchor};
use proxforest::ProximityKind;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

pub const OUT_ROOT_ENV: &str = "PROXFOREST_OUT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; relative paths sit under `$PROXFOREST_OUT` when set.
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<DatasetConfig>,
    pub synthetic: Option<SyntheticSpec>,
    pub forest: ForestConfig,
    pub grid: Option<GridConfig>,
    pub split: SplitConfig,
    pub proximity: ProximityConfig,
    pub outliers: OutliersConfig,
    pub mds: MdsConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_label")]
    pub label: String,
    /// Columns forced to categorical even when every cell parses as a number.
    #[serde(default)]
    pub categorical: Vec<String>,
}

fn default_label() -> String {
    "class".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    #[serde(deserialize_with = "de_depth")]
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub min_samples_leaf: usize,
    pub class_weight: ClassWeight,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestConfig {
            n_trees: p.n_trees,
            max_depth: p.max_depth,
            max_features: p.max_features,
            criterion: p.criterion,
            min_samples_leaf: p.min_samples_leaf,
            class_weight: p.class_weight,
            bootstrap: p.bootstrap,
        }
    }
}

/// Omitted lists fall back to the full default grid for that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_trees: Vec<usize>,
    #[serde(deserialize_with = "de_depth_list")]
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
    pub criterion: Vec<Criterion>,
    pub folds: usize,
    pub scoring: Scoring,
    /// Evaluate an evenly strided subset of at most this many points.
    pub budget: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = Grid::default();
        GridConfig {
            n_trees: g.n_trees,
            max_depth: g.max_depth,
            max_features: g.max_features,
            criterion: g.criterion,
            folds: 5,
            scoring: Scoring::Accuracy,
            budget: None,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            n_trees: self.n_trees.clone(),
            max_depth: self.max_depth.clone(),
            max_features: self.max_features.clone(),
            criterion: self.criterion.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProximityScope {
    /// Every record, training and test, routed through the forest.
    Full,
    /// Training records only.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProximityConfig {
    pub kind: ProximityKind,
    pub scope: ProximityScope,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        ProximityConfig { kind: ProximityKind::Original, scope: ProximityScope::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutliersConfig {
    #[serde(serialize_with = "ser_unbounded")]
    pub k_sigma: f64,
    pub anchor: ThresholdAnchor,
    pub deviation: Deviation,
}

impl Default for OutliersConfig {
    fn default() -> Self {
        let c = OutlierConfig::default();
        OutliersConfig { k_sigma: c.k_sigma, anchor: c.anchor, deviation: c.deviation }
    }
}

impl OutliersConfig {
    pub fn to_core(&self) -> OutlierConfig {
        OutlierConfig { k_sigma: self.k_sigma, anchor: self.anchor, deviation: self.deviation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdsConfig {
    pub method: MdsMethod,
    pub max_iter: usize,
    pub tol: f64,
    /// Class names to embed; empty means every class.
    pub classes: Vec<String>,
}

impl Default for MdsConfig {
    fn default() -> Self {
        let o = MdsOptions::default();
        MdsConfig { method: o.method, max_iter: o.max_iter, tol: o.tol, classes: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// `record_id,period,return`; synthetic runs regenerate it when absent.
    pub returns: Option<PathBuf>,
    /// `class,period,return`
    pub benchmarks: Option<PathBuf>,
}

/// JSON has no infinity; write it as the string `inf`.
fn ser_unbounded<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DepthValue {
    Bounded(usize),
    Named(String),
}

fn depth_value(v: DepthValue) -> std::result::Result<Option<usize>, String> {
    match v {
        DepthValue::Bounded(0) => Err("max_depth must be at least 1; use \"none\" for unbounded".into()),
        DepthValue::Bounded(d) => Ok(Some(d)),
        DepthValue::Named(s) if s.eq_ignore_ascii_case("none") => Ok(None),
        DepthValue::Named(s) => Err(format!("max_depth `{s}` is neither an integer nor \"none\"")),
    }
}

fn de_depth<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<usize>, D::Error> {
    depth_value(DepthValue::deserialize(d)?).map_err(serde::de::Error::custom)
}

fn de_depth_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Option<usize>>, D::Error> {
    Vec::<DepthValue>::deserialize(d)?.into_iter().map(depth_value).collect::<std::result::Result<_, _>>().map_err(serde::de::Error::custom)
}

pub fn parse_depth(s: &str) -> std::result::Result<Option<usize>, String> {
    match s.parse::<usize>() {
        Ok(d) => depth_value(DepthValue::Bounded(d)),
        Err(_) => depth_value(DepthValue::Named(s.to_string())),
    }
}

impl RunConfig {
    /// Reads a config file. Relative dataset and panel paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::MissingInput { path: path.to_path_buf(), source })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.dataset.as_mut() {
            rebase(&mut d.path);
        }
        if let Some(p) = cfg.analysis.returns.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.analysis.benchmarks.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (None, None) => return Err(CliError::Config("either [dataset] or [synthetic] is required".into())),
            (Some(_), Some(_)) => return Err(CliError::Config("[dataset] and [synthetic] are mutually exclusive".into())),
            _ => {}
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::Config("split.test_fraction must lie strictly between 0 and 1".into()));
        }
        if self.proximity.kind != ProximityKind::Original && self.proximity.scope != ProximityScope::Train {
            return Err(CliError::Config(
                "oob and gap proximities need the training bootstrap; set proximity.scope = \"train\"".into(),
            ));
        }
        if self.outliers.k_sigma.is_nan() || self.outliers.k_sigma < 0.0 {
            return Err(CliError::Config("outliers.k_sigma must be a nonnegative number or inf".into()));
        }
        if let Some(g) = &self.grid {
            if g.folds < 2 {
                return Err(CliError::Config("grid.folds must be at least 2".into()));
            }
            if g.budget == Some(0) {
                return Err(CliError::Config("grid.budget must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn forest_params(&self) -> ForestParams {
        let f = &self.forest;
        ForestParams {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            max_features: f.max_features,
            criterion: f.criterion,
            min_samples_leaf: f.min_samples_leaf,
            class_weight: f.class_weight.clone(),
            bootstrap: f.bootstrap,
            seed: self.seed,
        }
    }

    pub fn mds_options(&self) -> MdsOptions {
        MdsOptions { method: self.mds.method, seed: self.seed, max_iter: self.mds.max_iter, tol: self.mds.tol }
    }

    /// `out_dir`, placed under `$PROXFOREST_OUT` when relative and the
    /// variable is set. Defaults to `run`.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self.out_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}
