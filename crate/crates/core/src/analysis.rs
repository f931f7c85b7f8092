//! Relating outlier-score quartiles to how well a record's returns track its
//! class benchmark, plus embedding diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{box_stats, linear_regression_r2, BoxStats, MetricsError};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no return series for record {0}")]
    MissingReturns(usize),
    #[error("no benchmark series for class {0}")]
    MissingBenchmark(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub quartile: u8,
    pub count: usize,
    /// `None` when the quartile is empty.
    pub r_squared: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAnalysis {
    pub class: usize,
    pub name: String,
    /// Fewer than 4 members; no quartile breakdown.
    pub skipped: bool,
    pub quartiles: Vec<QuartileSummary>,
    /// Median R-squared falls at every step from quartile 1 to 4.
    pub strictly_decreasing: bool,
}

impl ClassAnalysis {
    pub fn medians(&self) -> Vec<Option<f64>> {
        self.quartiles.iter().map(|q| q.r_squared.as_ref().map(|b| b.median)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileR2Report {
    pub classes: Vec<ClassAnalysis>,
    pub decreasing_classes: usize,
    pub analysed_classes: usize,
}

/// For every class, regresses each member's returns on the class benchmark
/// and summarizes the R-squared values per outlier-score quartile.
/// `returns[i]` is `None` when record `i` has no series.
pub fn quartile_r2(
    labels: &[usize],
    quartiles: &[u8],
    small_class: &[bool],
    classes: &[String],
    returns: &[Option<&[f64]>],
    benchmarks: &[Option<&[f64]>],
) -> Result<QuartileR2Report> {
    let mut out = Vec::with_capacity(classes.len());
    for (j, name) in classes.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == j).collect();
        if small_class.get(j).copied().unwrap_or(false) || members.len() < 4 {
            out.push(ClassAnalysis { class: j, name: name.clone(), skipped: true, quartiles: Vec::new(), strictly_decreasing: false });
            continue;
        }
        let bench = benchmarks.get(j).copied().flatten().ok_or(AnalysisError::MissingBenchmark(j))?;
        let mut by_q: [Vec<f64>; 4] = Default::default();
        for &i in &members {
            let series = returns.get(i).copied().flatten().ok_or(AnalysisError::MissingReturns(i))?;
            let r2 = linear_regression_r2(bench, series)?.r_squared;
            by_q[(quartiles[i] - 1) as usize].push(r2);
        }
        let summaries: Vec<QuartileSummary> = by_q
            .iter()
            .enumerate()
            .map(|(q, vals)| QuartileSummary {
                quartile: q as u8 + 1,
                count: vals.len(),
                r_squared: box_stats(vals).ok(),
            })
            .collect();
        let medians: Vec<Option<f64>> = summaries.iter().map(|s| s.r_squared.as_ref().map(|b| b.median)).collect();
        let strictly_decreasing = medians.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a > b));
        out.push(ClassAnalysis { class: j, name: name.clone(), skipped: false, quartiles: summaries, strictly_decreasing });
    }
    let analysed_classes = out.iter().filter(|c| !c.skipped).count();
    let decreasing_classes = out.iter().filter(|c| c.strictly_decreasing).count();
    Ok(QuartileR2Report { classes: out, decreasing_classes, analysed_classes })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean silhouette of 2-D points under `labels`. Points alone in their
/// cluster contribute 0; with a single cluster the result is 0.
pub fn silhouette(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = coords.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sum[labels[j]] += dist(coords[i], coords[j]);
                cnt[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if cnt[own] == 0 {
            continue;
        }
        let a = sum[own] / cnt[own] as f64;
        let b = (0..k).filter(|&c| c != own && cnt[c] > 0).map(|c| sum[c] / cnt[c] as f64).fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / n as f64
}

/// Distance of each point to the centroid of its class.
pub fn centroid_distances(coords: &[[f64; 2]], labels: &[usize]) -> Vec<f64> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![[0.0; 2]; k];
    let mut cnt = vec![0.0; k];
    for (p, &l) in coords.iter().zip(labels) {
        c[l][0] += p[0];
        c[l][1] += p[1];
        cnt[l] += 1.0;
    }
    for (ci, n) in c.iter_mut().zip(&cnt) {
        if *n > 0.0 {
            ci[0] /= n;
            ci[1] /= n;
        }
    }
    coords.iter().zip(labels).map(|(p, &l)| dist(*p, c[l])).collect()
}
