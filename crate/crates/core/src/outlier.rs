//! Class-wise outlier measures built on a proximity matrix.
//!
//! For record `i` and class `J` with members `cl(J)`:
//!
//! ```text
//! P^J(i)     = sum over j in cl(J), j != i, of prox(i, j)^2
//! raw^J(i)   = n_J / P^J(i)                 (+inf when P^J(i) = 0)
//! O^J(i)     = (raw^J(i) - med_J) / dev_J
//! ```
//!
//! `med_J` and `dev_J` are taken over the raw measures of the members of `J`,
//! plus `raw^J(i)` itself when `i` is not a member. Infinite raw measures are
//! left out of both statistics and map to `O = +inf`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proximity::ProximityMatrix;

/// Below this `dev_J` is treated as zero.
pub const DEV_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OutlierError {
    #[error("class {0} has no records")]
    EmptyClass(usize),
    #[error("record is the only member of its own class {0}")]
    SingletonOwnClass(usize),
    #[error("{labels} labels for a {n}-record proximity matrix")]
    LengthMismatch { labels: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, OutlierError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deviation {
    /// Median of `|raw - med|`.
    Median,
    /// Mean of `|raw - med|`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdAnchor {
    /// `mean + k * std` of the in-class measures.
    Mean,
    /// `k * std`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    pub k_sigma: f64,
    pub anchor: ThresholdAnchor,
    pub deviation: Deviation,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig { k_sigma: 2.0, anchor: ThresholdAnchor::Mean, deviation: Deviation::Median }
    }
}

fn check_labels(p: &ProximityMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != p.n() {
        return Err(OutlierError::LengthMismatch { labels: labels.len(), n: p.n() });
    }
    Ok(())
}

fn class_size(labels: &[usize], class: usize) -> usize {
    labels.iter().filter(|&&l| l == class).count()
}

/// Median with the two middle values averaged for even counts. `xs` must be
/// nonempty.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// `(med, dev)` over the finite entries of `xs`; `(NaN, NaN)` if none.
pub fn location_scale(xs: &[f64], deviation: Deviation) -> (f64, f64) {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let med = median(&finite);
    let abs: Vec<f64> = finite.iter().map(|x| (x - med).abs()).collect();
    let dev = match deviation {
        Deviation::Median => median(&abs),
        Deviation::Mean => abs.iter().sum::<f64>() / abs.len() as f64,
    };
    (med, dev)
}

/// Standardizes `value` against a reference sample. In-class values with a
/// degenerate scale map to 0; a foreign value with a degenerate scale maps to
/// 0 when it does not exceed the median and to `+inf` otherwise.
fn standardize(value: f64, med: f64, dev: f64, in_class: bool) -> f64 {
    if value.is_infinite() {
        return f64::INFINITY;
    }
    if !(dev >= DEV_EPSILON) {
        return if in_class || value <= med + DEV_EPSILON { 0.0 } else { f64::INFINITY };
    }
    (value - med) / dev
}

/// Standardized measures for the members of a class given their raw
/// measures.
pub fn standardize_members(raw: &[f64], deviation: Deviation) -> Vec<f64> {
    let (med, dev) = location_scale(raw, deviation);
    raw.iter().map(|&r| standardize(r, med, dev, true)).collect()
}

/// Standardized measure of a non-member with raw measure `raw_i` against the
/// members' raw measures, the reference sample including `raw_i`.
pub fn standardize_foreign(members: &[f64], raw_i: f64, deviation: Deviation) -> f64 {
    let mut reference = members.to_vec();
    reference.push(raw_i);
    let (med, dev) = location_scale(&reference, deviation);
    standardize(raw_i, med, dev, false)
}

/// Sum of squared proximities from `i` to the members of `class`, excluding
/// `i` itself.
pub fn class_average_proximity(p: &ProximityMatrix, labels: &[usize], i: usize, class: usize) -> Result<f64> {
    check_labels(p, labels)?;
    let n_j = class_size(labels, class);
    if n_j == 0 {
        return Err(OutlierError::EmptyClass(class));
    }
    if labels[i] == class && n_j == 1 {
        return Err(OutlierError::SingletonOwnClass(class));
    }
    Ok(squared_mass(p, labels, i, class))
}

fn squared_mass(p: &ProximityMatrix, labels: &[usize], i: usize, class: usize) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter(|&(j, &l)| l == class && j != i)
        .map(|(j, _)| p.get(i, j).powi(2))
        .sum()
}

fn raw_from_mass(n_j: usize, mass: f64) -> f64 {
    if mass > 0.0 {
        n_j as f64 / mass
    } else {
        f64::INFINITY
    }
}

/// `n_J / P^J(i)` for every record; `+inf` where the mass is zero.
pub fn raw_outlier(p: &ProximityMatrix, labels: &[usize], class: usize) -> Result<Vec<f64>> {
    check_labels(p, labels)?;
    let n_j = class_size(labels, class);
    if n_j == 0 {
        return Err(OutlierError::EmptyClass(class));
    }
    Ok((0..p.n()).map(|i| raw_from_mass(n_j, squared_mass(p, labels, i, class))).collect())
}

/// `O^J(i)` for every record.
pub fn outlier_measure(p: &ProximityMatrix, labels: &[usize], class: usize, deviation: Deviation) -> Result<Vec<f64>> {
    let raw = raw_outlier(p, labels, class)?;
    Ok(standardize_column(&raw, labels, class, deviation).0)
}

/// Returns the column of standardized measures plus the in-class `(med, dev)`.
fn standardize_column(raw: &[f64], labels: &[usize], class: usize, deviation: Deviation) -> (Vec<f64>, f64, f64) {
    let members: Vec<f64> = raw.iter().zip(labels).filter(|&(_, &l)| l == class).map(|(&r, _)| r).collect();
    let (med, dev) = location_scale(&members, deviation);
    let out = raw
        .iter()
        .zip(labels)
        .map(|(&r, &l)| if l == class { standardize(r, med, dev, true) } else { standardize_foreign(&members, r, deviation) })
        .collect();
    (out, med, dev)
}

/// `mean + k * std` (or `k * std`) of the finite entries; population std.
pub fn flag_threshold(values: &[f64], k_sigma: f64, anchor: ThresholdAnchor) -> f64 {
    if k_sigma == f64::INFINITY {
        return f64::INFINITY;
    }
    let finite: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    let m = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / m;
    let std = (finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
    match anchor {
        ThresholdAnchor::Mean => mean + k_sigma * std,
        ThresholdAnchor::Zero => k_sigma * std,
    }
}

/// Within-class flags for a vector of own-class measures: strictly above the
/// class threshold. Infinite measures exceed every finite threshold.
pub fn flag_values(values: &[f64], k_sigma: f64, anchor: ThresholdAnchor) -> Vec<bool> {
    let thr = flag_threshold(values, k_sigma, anchor);
    values.iter().map(|&v| v > thr).collect()
}

/// Quartiles 1..=4 by ascending score within each class, ties broken by
/// position. Classes with fewer than 4 members are put entirely in quartile
/// 1; the second vector marks those classes.
pub fn quartile_assignment(scores: &[f64], labels: &[usize], n_classes: usize) -> (Vec<u8>, Vec<bool>) {
    let mut quartiles = vec![1u8; scores.len()];
    let mut too_small = vec![false; n_classes];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == class).collect();
        let m = members.len();
        if m < 4 {
            too_small[class] = m > 0;
            continue;
        }
        members.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        for (r, &i) in members.iter().enumerate() {
            quartiles[i] = (4 * r / m + 1) as u8;
        }
    }
    (quartiles, too_small)
}

/// Signed `ln(1 + |x|)`, for plotting measures that span orders of magnitude.
pub fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoveltyProfile {
    pub record: usize,
    /// `O^J(record)` for every class `J`.
    pub measures: Vec<f64>,
    pub log_view: Vec<f64>,
    /// Whether each measure exceeds that class's threshold.
    pub above: Vec<bool>,
    pub is_novelty: bool,
}

/// Every record scored against every class.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierScores {
    pub n: usize,
    pub n_classes: usize,
    pub labels: Vec<usize>,
    pub config: OutlierConfig,
    /// Row-major `n x K`.
    pub avg_prox: Vec<f64>,
    pub raw: Vec<f64>,
    pub measure: Vec<f64>,
    /// Per class, over its members.
    pub med: Vec<f64>,
    pub dev: Vec<f64>,
    pub threshold: Vec<f64>,
    pub flags: Vec<bool>,
    pub quartiles: Vec<u8>,
    pub small_class: Vec<bool>,
}

impl OutlierScores {
    pub fn compute(p: &ProximityMatrix, labels: &[usize], n_classes: usize, config: OutlierConfig) -> Result<Self> {
        check_labels(p, labels)?;
        let n = p.n();
        let mut sizes = vec![0usize; n_classes];
        for &l in labels {
            sizes[l] += 1;
        }
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(OutlierError::EmptyClass(j));
        }
        let k = n_classes;
        let avg_prox: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut acc = vec![0.0; k];
                for j in 0..n {
                    if j != i {
                        acc[labels[j]] += p.get(i, j).powi(2);
                    }
                }
                acc
            })
            .collect();
        let raw: Vec<f64> = avg_prox.iter().enumerate().map(|(idx, &mass)| raw_from_mass(sizes[idx % k], mass)).collect();

        let columns: Vec<(Vec<f64>, f64, f64)> = (0..k)
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = (0..n).map(|i| raw[i * k + j]).collect();
                standardize_column(&col, labels, j, config.deviation)
            })
            .collect();
        let mut measure = vec![0.0; n * k];
        let mut med = Vec::with_capacity(k);
        let mut dev = Vec::with_capacity(k);
        for (j, (col, m, d)) in columns.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                measure[i * k + j] = v;
            }
            med.push(m);
            dev.push(d);
        }

        let own: Vec<f64> = (0..n).map(|i| measure[i * k + labels[i]]).collect();
        let threshold: Vec<f64> = (0..k)
            .map(|j| {
                let members: Vec<f64> = (0..n).filter(|&i| labels[i] == j).map(|i| own[i]).collect();
                flag_threshold(&members, config.k_sigma, config.anchor)
            })
            .collect();
        let flags = (0..n).map(|i| own[i] > threshold[labels[i]]).collect();
        let (quartiles, small_class) = quartile_assignment(&own, labels, k);

        Ok(OutlierScores {
            n,
            n_classes: k,
            labels: labels.to_vec(),
            config,
            avg_prox,
            raw,
            measure,
            med,
            dev,
            threshold,
            flags,
            quartiles,
            small_class,
        })
    }

    pub fn measure(&self, i: usize, class: usize) -> f64 {
        self.measure[i * self.n_classes + class]
    }

    pub fn own(&self, i: usize) -> f64 {
        self.measure(i, self.labels[i])
    }

    pub fn own_measures(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.own(i)).collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn profile(&self, i: usize) -> NoveltyProfile {
        let measures: Vec<f64> = (0..self.n_classes).map(|j| self.measure(i, j)).collect();
        let above: Vec<bool> = measures.iter().zip(&self.threshold).map(|(m, t)| m > t).collect();
        NoveltyProfile {
            record: i,
            log_view: measures.iter().map(|&m| signed_log(m)).collect(),
            is_novelty: above.iter().all(|&a| a),
            above,
            measures,
        }
    }

    pub fn novelties(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.profile(i).is_novelty).collect()
    }

    /// `record_id,label,O_own,flag,quartile,O_<class>...` with one `O_` column
    /// per class in class-id order. Infinite measures are written as `inf`.
    pub fn write_csv<W: Write>(&self, w: W, ids: &[usize], classes: &[String]) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["record_id".to_string(), "label".into(), "O_own".into(), "flag".into(), "quartile".into()];
        header.extend(classes.iter().map(|c| format!("O_{c}")));
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![
                ids[i].to_string(),
                classes[self.labels[i]].clone(),
                fmt_measure(self.own(i)),
                self.flags[i].to_string(),
                self.quartiles[i].to_string(),
            ];
            rec.extend((0..self.n_classes).map(|j| fmt_measure(self.measure(i, j))));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn fmt_measure(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x}")
    }
}

/// Own-class flags of precomputed scores with a different `k_sigma`.
pub fn within_class_outliers(scores: &OutlierScores, k_sigma: f64) -> Vec<bool> {
    let own = scores.own_measures();
    let mut flags = vec![false; scores.n];
    for j in 0..scores.n_classes {
        let members: Vec<usize> = (0..scores.n).filter(|&i| scores.labels[i] == j).collect();
        let vals: Vec<f64> = members.iter().map(|&i| own[i]).collect();
        for (&i, f) in members.iter().zip(flag_values(&vals, k_sigma, scores.config.anchor)) {
            flags[i] = f;
        }
    }
    flags
}

pub fn cross_class_profile(
    p: &ProximityMatrix,
    labels: &[usize],
    n_classes: usize,
    i: usize,
    config: OutlierConfig,
) -> Result<NoveltyProfile> {
    Ok(OutlierScores::compute(p, labels, n_classes, config)?.profile(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: usize, f: impl Fn(usize, usize) -> f64) -> ProximityMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = if i == j { 1.0 } else { f(i.min(j), i.max(j)) };
            }
        }
        ProximityMatrix::from_dense(n, &d)
    }

    #[test]
    fn squared_mass_examples() {
        let p = dense(3, |_, _| 1.0);
        assert_eq!(class_average_proximity(&p, &[0, 0, 0], 0, 0).unwrap(), 2.0);
        let p = dense(3, |_, _| 0.0);
        assert_eq!(class_average_proximity(&p, &[0, 1, 1], 0, 1).unwrap(), 0.0);
        let vals = [0.5, 0.25, 1.0];
        let p = dense(4, |i, j| if i == 0 { vals[j - 1] } else { 0.0 });
        assert_eq!(class_average_proximity(&p, &[0, 0, 0, 0], 0, 0).unwrap(), 1.3125);
    }

    #[test]
    fn empty_and_singleton_classes() {
        let p = dense(2, |_, _| 0.5);
        assert_eq!(class_average_proximity(&p, &[0, 0], 0, 1), Err(OutlierError::EmptyClass(1)));
        assert_eq!(class_average_proximity(&p, &[0, 1], 0, 0), Err(OutlierError::SingletonOwnClass(0)));
        assert_eq!(raw_outlier(&p, &[0, 0], 2), Err(OutlierError::EmptyClass(2)));
    }

    #[test]
    fn raw_examples() {
        let p = dense(3, |_, _| 1.0);
        // n_J = 3, P = 2
        assert_eq!(raw_outlier(&p, &[0, 0, 0], 0).unwrap(), vec![1.5; 3]);
        let p = dense(3, |i, _| if i == 0 { 0.0 } else { 1.0 });
        let raw = raw_outlier(&p, &[0, 0, 0], 0).unwrap();
        assert_eq!(raw[0], f64::INFINITY);
        // identical records: m / (m - 1)
        let p = dense(5, |_, _| 1.0);
        assert_eq!(raw_outlier(&p, &[0; 5], 0).unwrap(), vec![1.25; 5]);
    }

    #[test]
    fn identical_class_scores_zero() {
        let p = dense(4, |_, _| 1.0);
        let o = outlier_measure(&p, &[0; 4], 0, Deviation::Median).unwrap();
        assert_eq!(o, vec![0.0; 4]);
    }

    #[test]
    fn median_record_scores_zero() {
        let o = standardize_members(&[1.0, 2.0, 5.0], Deviation::Median);
        assert_eq!(o[1], 0.0);
        // med 2, MAD median{1, 0, 3} = 1
        assert_eq!(o, vec![-1.0, 0.0, 3.0]);
        let o = standardize_members(&[1.0, 2.0, 5.0], Deviation::Mean);
        assert_eq!(o[2], 3.0 / (4.0 / 3.0));
    }

    #[test]
    fn infinite_raw_excluded_from_statistics() {
        let o = standardize_members(&[1.0, 2.0, 3.0, f64::INFINITY], Deviation::Median);
        assert_eq!(o, vec![-1.0, 0.0, 1.0, f64::INFINITY]);
    }

    #[test]
    fn foreign_path_matches_member_path() {
        let members = [1.0, 4.0, 2.5, 7.0];
        let raw_i = 3.0;
        let mut all = members.to_vec();
        all.push(raw_i);
        for dev in [Deviation::Median, Deviation::Mean] {
            assert_eq!(standardize_foreign(&members, raw_i, dev), standardize_members(&all, dev)[4]);
        }
    }

    #[test]
    fn threshold_flags() {
        assert!(flag_values(&[0.3; 10], 2.0, ThresholdAnchor::Mean).iter().all(|&f| !f));
        let mut v = vec![0.0; 49];
        v.push(10.0);
        let flags = flag_values(&v, 2.0, ThresholdAnchor::Mean);
        // mean 0.2, std sqrt(100/50 - 0.04) = 1.4, threshold 3.0
        assert!((flag_threshold(&v, 2.0, ThresholdAnchor::Mean) - 3.0).abs() < 1e-12);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[49]);
        assert!(flag_values(&v, f64::INFINITY, ThresholdAnchor::Mean).iter().all(|&f| !f));
        let with_inf = [0.0, 0.1, f64::INFINITY];
        assert_eq!(flag_values(&with_inf, 2.0, ThresholdAnchor::Zero), vec![false, false, true]);
    }

    #[test]
    fn quartile_rules() {
        let s: Vec<f64> = (0..8).map(|x| x as f64).rev().collect();
        let (q, small) = quartile_assignment(&s, &[0; 8], 1);
        assert_eq!(q, vec![4, 4, 3, 3, 2, 2, 1, 1]);
        assert_eq!(small, vec![false]);
        let (q, _) = quartile_assignment(&[1.0; 4], &[0; 4], 1);
        assert_eq!(q, vec![1, 2, 3, 4]);
        let (q, small) = quartile_assignment(&[3.0, 1.0, 2.0, 0.0], &[0, 0, 0, 1], 2);
        assert_eq!(q, vec![1, 1, 1, 1]);
        assert_eq!(small, vec![true, true]);
        let (q, _) = quartile_assignment(&[f64::INFINITY, 1.0, 2.0, 3.0], &[0; 4], 1);
        assert_eq!(q[0], 4);
    }

    #[test]
    fn isolated_record_is_a_novelty() {
        // records 0..3 class 0, 3..6 class 1, record 6 (class 1) unrelated to all
        let p = dense(7, |i, j| if j == 6 { 0.0 } else if (i < 3) == (j < 3) { 0.9 } else { 0.05 });
        let labels = [0, 0, 0, 1, 1, 1, 1];
        let scores = OutlierScores::compute(&p, &labels, 2, OutlierConfig::default()).unwrap();
        let prof = scores.profile(6);
        assert_eq!(prof.measures, vec![f64::INFINITY; 2]);
        assert!(prof.is_novelty);
        assert!(scores.flags[6]);
        assert!(!scores.profile(0).is_novelty);
        assert_eq!(scores.novelties(), vec![6]);
    }

    #[test]
    fn scores_csv_layout() {
        let p = dense(4, |i, j| if (i < 2) == (j < 2) { 0.8 } else { 0.1 });
        let scores = OutlierScores::compute(&p, &[0, 0, 1, 1], 2, OutlierConfig::default()).unwrap();
        let mut out = Vec::new();
        scores.write_csv(&mut out, &[0, 1, 2, 3], &["a".into(), "b".into()]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("record_id,label,O_own,flag,quartile,O_a,O_b\n0,a,0,false,1,0,"));
    }

    #[test]
    fn signed_log_view() {
        assert_eq!(signed_log(0.0), 0.0);
        assert!((signed_log(-(std::f64::consts::E - 1.0)) + 1.0).abs() < 1e-12);
        assert_eq!(signed_log(f64::INFINITY), f64::INFINITY);
    }
}
