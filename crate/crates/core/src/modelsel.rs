//! Exhaustive grid search with stratified k-fold cross-validation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{stratified_kfold, DataError, Dataset};
use crate::forest::{fit_forest, predict_proba, argmax, Criterion, ForestError, ForestParams, MaxFeatures};
use crate::metrics::{classification_report, MetricsError};

#[derive(Debug, Error)]
pub enum ModelSelError {
    #[error("grid has an empty value list: {0}")]
    EmptyGrid(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelSelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    Accuracy,
    F1Macro,
}

impl Scoring {
    pub fn name(self) -> &'static str {
        match self {
            Scoring::Accuracy => "accuracy",
            Scoring::F1Macro => "f1_macro",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_trees: Vec<usize>,
    /// `None` is unbounded depth.
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
    pub criterion: Vec<Criterion>,
}

impl Default for Grid {
    fn default() -> Self {
        let mut max_depth: Vec<Option<usize>> = (1..=10).map(|d| Some(5 * d)).collect();
        max_depth.push(None);
        Grid {
            n_trees: (1..=10).map(|t| 100 * t).collect(),
            max_depth,
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2],
            criterion: vec![Criterion::Gini, Criterion::Entropy, Criterion::LogLoss],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
}

impl GridPoint {
    pub fn apply_to(&self, base: &ForestParams) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            max_features: self.max_features,
            criterion: self.criterion,
            ..base.clone()
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees.is_empty() {
            return Err(ModelSelError::EmptyGrid("n_trees"));
        }
        if self.max_depth.is_empty() {
            return Err(ModelSelError::EmptyGrid("max_depth"));
        }
        if self.max_features.is_empty() {
            return Err(ModelSelError::EmptyGrid("max_features"));
        }
        if self.criterion.is_empty() {
            return Err(ModelSelError::EmptyGrid("criterion"));
        }
        Ok(())
    }

    /// All combinations, `n_trees` varying slowest and `criterion` fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &max_features in &self.max_features {
                    for &criterion in &self.criterion {
                        out.push(GridPoint { n_trees, max_depth, max_features, criterion });
                    }
                }
            }
        }
        out
    }

    /// At most `budget` points, taken at a fixed stride from [`Grid::points`].
    pub fn strided_points(&self, budget: usize) -> Vec<GridPoint> {
        let all = self.points();
        if budget == 0 || budget >= all.len() {
            return all;
        }
        let stride = all.len().div_ceil(budget);
        all.into_iter().step_by(stride).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: GridPoint,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub scoring: Scoring,
    pub k: usize,
    pub seed: u64,
    pub rows: Vec<CvRow>,
    pub best: usize,
}

impl CvResult {
    pub fn best_point(&self) -> GridPoint {
        self.rows[self.best].point
    }

    /// `n_trees,max_depth,max_features,criterion,mean,std,fold_0,...`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> =
            ["n_trees", "max_depth", "max_features", "criterion", "mean", "std"].iter().map(|s| s.to_string()).collect();
        header.extend((0..self.k).map(|f| format!("fold_{f}")));
        wtr.write_record(&header)?;
        for row in &self.rows {
            let p = &row.point;
            let mut rec = vec![
                p.n_trees.to_string(),
                p.max_depth.map_or("none".to_string(), |d| d.to_string()),
                enum_name(&p.max_features),
                enum_name(&p.criterion),
                format!("{}", row.mean),
                format!("{}", row.std),
            ];
            rec.extend(row.fold_scores.iter().map(|s| format!("{s}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Ordering used to pick the best row: higher mean, then fewer trees, then
/// shallower depth, then earlier grid position.
fn better(a: &CvRow, b: &CvRow) -> bool {
    let depth = |d: Option<usize>| d.unwrap_or(usize::MAX);
    if a.mean != b.mean {
        return a.mean > b.mean;
    }
    if a.point.n_trees != b.point.n_trees {
        return a.point.n_trees < b.point.n_trees;
    }
    depth(a.point.max_depth) < depth(b.point.max_depth)
}

pub fn select_best(rows: &[CvRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        if better(r, &rows[best]) {
            best = i;
        }
    }
    best
}

fn score(scoring: Scoring, train: &Dataset, val: &Dataset, params: &ForestParams) -> Result<f64> {
    let forest = fit_forest(train, params)?;
    let proba = predict_proba(&forest, val)?;
    let pred: Vec<usize> = proba.iter().map(|r| argmax(r)).collect();
    let report = classification_report(val.labels(), &pred, &proba, val.n_classes())?;
    Ok(match scoring {
        Scoring::Accuracy => report.accuracy,
        Scoring::F1Macro => report.f1_macro,
    })
}

/// Scores every point on the same `k` stratified folds. Fixed parameters
/// (class weights, leaf size, seed) come from `base`.
pub fn grid_search_points(
    train: &Dataset,
    points: &[GridPoint],
    k: usize,
    seed: u64,
    scoring: Scoring,
    base: &ForestParams,
) -> Result<CvResult> {
    if points.is_empty() {
        return Err(ModelSelError::EmptyGrid("points"));
    }
    let plan = stratified_kfold(train, k, seed)?;
    let folds: Vec<(Dataset, Dataset)> = (0..k)
        .map(|f| {
            let (tr, va) = plan.split(f);
            (train.subset(&tr), train.subset(&va))
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..k).map(move |f| (p, f))).collect();
    let scores: Vec<f64> = tasks
        .par_iter()
        .map(|&(p, f)| score(scoring, &folds[f].0, &folds[f].1, &points[p].apply_to(base)))
        .collect::<Result<_>>()?;
    let rows: Vec<CvRow> = points
        .iter()
        .enumerate()
        .map(|(p, &point)| {
            let fold_scores = scores[p * k..(p + 1) * k].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / k as f64;
            let std = (fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
            CvRow { point, fold_scores, mean, std }
        })
        .collect();
    let best = select_best(&rows);
    Ok(CvResult { scoring, k, seed, rows, best })
}

pub fn grid_search(
    train: &Dataset,
    grid: &Grid,
    k: usize,
    seed: u64,
    scoring: Scoring,
    base: &ForestParams,
) -> Result<CvResult> {
    grid.validate()?;
    grid_search_points(train, &grid.points(), k, seed, scoring, base)
}
