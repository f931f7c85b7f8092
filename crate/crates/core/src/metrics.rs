//! Classification scores, simple linear regression and box-plot summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("probability row {0} is not a distribution over the classes")]
    InvalidProbabilities(usize),
    #[error("class id {0} out of range")]
    UnknownClass(usize),
    #[error("regression needs at least 3 points")]
    TooShort,
    #[error("independent variable is constant")]
    ConstantX,
    #[error("no values")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub f1_micro: f64,
    /// Unweighted mean over classes present in the true or predicted labels.
    pub f1_macro: f64,
    /// Support-weighted mean of per-class F1.
    pub f1_weighted: f64,
    pub auc_micro: f64,
    /// Unweighted mean over classes with both positive and negative records.
    pub auc_macro: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<PerClass>,
}

impl ClassificationReport {
    pub fn misclassified(&self) -> usize {
        let total: usize = self.confusion.iter().flatten().sum();
        total - (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum::<usize>()
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Area under the ROC curve, integrating the trapezoid through each group of
/// tied scores. `None` if either class is absent.
pub fn roc_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        area += (fp - fp0) * (tp + tp0) / 2.0;
    }
    Some(area / (p * n))
}

pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    proba: &[Vec<f64>],
    n_classes: usize,
) -> Result<ClassificationReport> {
    let n = y_true.len();
    if y_pred.len() != n {
        return Err(MetricsError::LengthMismatch(n, y_pred.len()));
    }
    if proba.len() != n {
        return Err(MetricsError::LengthMismatch(n, proba.len()));
    }
    for (r, row) in proba.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != n_classes || row.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) || (sum - 1.0).abs() > 1e-6 {
            return Err(MetricsError::InvalidProbabilities(r));
        }
    }
    if let Some(&c) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(MetricsError::UnknownClass(c));
    }

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = ratio(correct as f64, n as f64);

    let mut per_class = Vec::with_capacity(n_classes);
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
        let fp = predicted as f64 - tp;
        let fn_ = support as f64 - tp;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn_);
        per_class.push(PerClass { precision, recall, f1, support });
    }
    let f1_micro = ratio(2.0 * tp_all, 2.0 * tp_all + fp_all + fn_all);
    let seen: Vec<usize> = (0..n_classes)
        .filter(|&c| per_class[c].support > 0 || (0..n_classes).any(|r| confusion[r][c] > 0))
        .collect();
    let f1_macro = ratio(seen.iter().map(|&c| per_class[c].f1).sum(), seen.len() as f64);
    let f1_weighted = ratio(per_class.iter().map(|pc| pc.f1 * pc.support as f64).sum(), n as f64);

    let mut aucs = Vec::new();
    let mut pooled_pos = Vec::with_capacity(n * n_classes);
    let mut pooled_scores = Vec::with_capacity(n * n_classes);
    for c in 0..n_classes {
        let pos: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        let sc: Vec<f64> = proba.iter().map(|r| r[c]).collect();
        if let Some(a) = roc_auc(&pos, &sc) {
            aucs.push(a);
        }
        pooled_pos.extend(pos);
        pooled_scores.extend(sc);
    }
    let auc_macro = if aucs.is_empty() { f64::NAN } else { aucs.iter().sum::<f64>() / aucs.len() as f64 };
    let auc_micro = roc_auc(&pooled_pos, &pooled_scores).unwrap_or(f64::NAN);

    Ok(ClassificationReport { accuracy, f1_micro, f1_macro, f1_weighted, auc_micro, auc_macro, confusion, per_class })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x` with intercept. A constant `y` gives
/// `r_squared = 0`.
pub fn linear_regression_r2(x: &[f64], y: &[f64]) -> Result<RegressionResult> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    let m = x.len();
    if m < 3 {
        return Err(MetricsError::TooShort);
    }
    let mx = x.iter().sum::<f64>() / m as f64;
    let my = y.iter().sum::<f64>() / m as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::ConstantX);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (intercept + slope * a)).powi(2)).sum();
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RegressionResult { slope, intercept, r_squared })
}

/// Quantile by linear interpolation between order statistics: position
/// `(m - 1) * q` in the sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme values within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values beyond those fences, ascending.
    pub outliers: Vec<f64>,
    pub count: usize,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || v.iter().copied().filter(|&x| x >= fence_lo && x <= fence_hi);
    let whisker_low = inside().fold(q1, f64::min);
    let whisker_high = inside().fold(q3, f64::max);
    let outliers = v.iter().copied().filter(|&x| x < fence_lo || x > fence_hi).collect();
    Ok(BoxStats { q1, median, q3, whisker_low, whisker_high, outliers, count: v.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        labels.iter().map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let r = classification_report(&y, &y, &onehot(&y, 3), 3).unwrap();
        assert_eq!((r.accuracy, r.f1_micro, r.f1_macro, r.auc_micro, r.auc_macro), (1.0, 1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.misclassified(), 0);
    }

    #[test]
    fn chance_level_binary() {
        let r = classification_report(&[0, 0, 1, 1], &[0, 1, 0, 1], &vec![vec![0.5, 0.5]; 4], 2).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.auc_macro, 0.5);
        assert_eq!(r.auc_micro, 0.5);
    }

    #[test]
    fn input_validation() {
        assert_eq!(classification_report(&[0], &[0, 1], &[], 2), Err(MetricsError::LengthMismatch(1, 2)));
        assert_eq!(
            classification_report(&[0], &[0], &[vec![0.7, 0.7]], 2),
            Err(MetricsError::InvalidProbabilities(0))
        );
    }

    #[test]
    fn auc_with_ties_is_midrank() {
        let pos = [true, false, true, false];
        let s = [0.8, 0.8, 0.3, 0.1];
        // pairs (pos, neg): (0.8,0.8) half, (0.8,0.1) win, (0.3,0.8) loss, (0.3,0.1) win
        assert_eq!(roc_auc(&pos, &s), Some(2.5 / 4.0));
        assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn regression_examples() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = linear_regression_r2(&x, &y).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12 && (r.intercept - 1.0).abs() < 1e-12);
        assert_eq!(r.r_squared, 1.0);
        assert_eq!(linear_regression_r2(&x, &[5.0; 4]).unwrap().r_squared, 0.0);
        assert_eq!(linear_regression_r2(&[1.0; 4], &x), Err(MetricsError::ConstantX));
        assert_eq!(linear_regression_r2(&[1.0, 2.0], &[1.0, 2.0]), Err(MetricsError::TooShort));
    }

    #[test]
    fn box_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let b = box_stats(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.75, 4.5, 6.25));
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 8.0));
        let b = box_stats(&[3.0; 5]).unwrap();
        assert!(b.outliers.is_empty());
        let b = box_stats(&[0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 0.0);
        assert_eq!(box_stats(&[]), Err(MetricsError::Empty));
    }
}
