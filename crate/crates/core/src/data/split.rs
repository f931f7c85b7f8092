use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result};
use crate::rng::{stream, tags};

/// Members of each class, sorted by record identity and then shuffled with a
/// stream keyed by `(seed, tag, class)`. Keying on identity rather than row
/// position makes the partition invariant to row order.
fn shuffled_class_members(d: &Dataset, seed: u64, tag: u64) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); d.n_classes()];
    for (pos, &l) in d.labels().iter().enumerate() {
        members[l].push(pos);
    }
    for (class, m) in members.iter_mut().enumerate() {
        m.sort_by_key(|&pos| d.ids()[pos]);
        m.shuffle(&mut stream(seed, tag, class as u64));
    }
    members
}

/// Per-class test counts by largest-remainder apportionment of
/// `round(n * fraction)`, clamped so both sides keep at least one record.
fn apportion(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let total = (n as f64 * fraction).round() as usize;
    let quotas: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        alloc[j] += 1;
    }
    for (j, a) in alloc.iter_mut().enumerate() {
        if counts[j] >= 2 {
            *a = (*a).clamp(1, counts[j] - 1);
        }
    }
    alloc
}

/// Positions of the train and test records (each sorted ascending).
pub fn stratified_split_indices(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let counts = d.class_counts();
    if let Some(j) = (0..counts.len()).find(|&j| counts[j] == 1) {
        return Err(DataError::ClassTooSmall(d.classes()[j].clone()));
    }
    let alloc = apportion(&counts, test_fraction);
    let members = shuffled_class_members(d, seed, tags::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (m, &n_test) in members.iter().zip(&alloc) {
        test.extend_from_slice(&m[..n_test]);
        train.extend_from_slice(&m[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified train/test split; deterministic for a fixed seed.
pub fn stratified_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(d, test_fraction, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id per record position.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train, validation)` positions for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments.len()).partition(|&i| self.assignments[i] == fold);
        (train, val)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignments {
            s[f] += 1;
        }
        s
    }
}

/// Stratified k-fold assignment. Each class's shuffled members are dealt
/// round-robin, starting where the previous class stopped, so per-class fold
/// counts differ by at most one and fold totals stay balanced.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(DataError::InvalidArgument(format!("k = {k} must be at least 2")));
    }
    let counts = d.class_counts();
    if let Some(j) = (0..counts.len()).find(|&j| counts[j] > 0 && counts[j] < k) {
        return Err(DataError::ClassSmallerThanK { class: d.classes()[j].clone(), count: counts[j], k });
    }
    let members = shuffled_class_members(d, seed, tags::KFOLD);
    let mut assignments = vec![0; d.n_records()];
    let mut offset = 0;
    for m in &members {
        for (r, &pos) in m.iter().enumerate() {
            assignments[pos] = (offset + r) % k;
        }
        offset = (offset + m.len()) % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// `weight(J) = n / (K * n_J)`.
pub fn balanced_class_weights(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(DataError::InvalidArgument(format!("label {l} outside {n_classes} classes")));
        }
        counts[l] += 1;
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::AbsentClass(j));
    }
    let n = labels.len() as f64;
    Ok(counts.iter().map(|&c| n / (n_classes as f64 * c as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labelled(counts: &[usize]) -> Dataset {
        let names: Vec<String> = (0..counts.len()).map(|j| format!("c{j}")).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (j, &c) in counts.iter().enumerate() {
            for r in 0..c {
                rows.push(vec![r as f64]);
                labels.push(names[j].as_str());
            }
        }
        Dataset::from_numeric_rows(&["x"], &rows, &labels).unwrap()
    }

    fn per_class(d: &Dataset, positions: &[usize]) -> Vec<usize> {
        let mut c = vec![0; d.n_classes()];
        for &p in positions {
            c[d.labels()[p]] += 1;
        }
        c
    }

    #[test]
    fn iris_shaped_split() {
        let d = labelled(&[50, 50, 50]);
        let (train, test) = stratified_split(&d, 0.2, 1).unwrap();
        assert_eq!(train.n_records(), 120);
        assert_eq!(test.n_records(), 30);
        assert_eq!(test.class_counts(), vec![10, 10, 10]);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = labelled(&[31, 17, 9]);
        let a = stratified_split_indices(&d, 0.2, 9).unwrap();
        let b = stratified_split_indices(&d, 0.2, 9).unwrap();
        assert_eq!(a, b);
        let (train, test) = a;
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.n_records()).collect::<Vec<_>>());
        let c = stratified_split_indices(&d, 0.2, 10).unwrap();
        assert_ne!(c.1, test);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let d = labelled(&[1, 1]);
        assert!(matches!(stratified_split(&d, 0.2, 0), Err(DataError::ClassTooSmall(_))));
    }

    #[test]
    fn kfold_counts() {
        let d = labelled(&[60, 40]);
        let plan = stratified_kfold(&d, 5, 3).unwrap();
        for f in 0..5 {
            let (_, val) = plan.split(f);
            assert_eq!(per_class(&d, &val), vec![12, 8]);
        }
        let iris = labelled(&[50, 50, 50]);
        let plan = stratified_kfold(&iris, 2, 3).unwrap();
        for f in 0..2 {
            let (_, val) = plan.split(f);
            assert_eq!(val.len(), 75);
            assert_eq!(per_class(&iris, &val), vec![25, 25, 25]);
        }
    }

    #[test]
    fn kfold_rejects_small_class() {
        let d = labelled(&[20, 3]);
        assert!(matches!(stratified_kfold(&d, 5, 0), Err(DataError::ClassSmallerThanK { count: 3, k: 5, .. })));
    }

    #[test]
    fn class_weight_examples() {
        let labels = |counts: &[usize]| -> Vec<usize> {
            counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat(j).take(c)).collect()
        };
        let w = balanced_class_weights(&labels(&[100, 50, 50]), 3).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 4.0 / 3.0).abs() < 1e-12 && w[1] == w[2]);
        assert_eq!(balanced_class_weights(&labels(&[10, 10]), 2).unwrap(), vec![1.0, 1.0]);
        // 510 / (2 * 500) and 510 / (2 * 10)
        let w = balanced_class_weights(&labels(&[500, 10]), 2).unwrap();
        assert!((w[0] - 0.51).abs() < 1e-12 && (w[1] - 25.5).abs() < 1e-12);
        assert!(matches!(balanced_class_weights(&[0, 0, 2], 3), Err(DataError::AbsentClass(1))));
    }

    fn shuffled_copy(d: &Dataset, perm: &[usize]) -> Dataset {
        d.subset(perm)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn weighted_mass_sums_to_n(counts in proptest::collection::vec(1usize..60, 2..6)) {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat(j).take(c)).collect();
            let w = balanced_class_weights(&labels, counts.len()).unwrap();
            let mass: f64 = w.iter().zip(&counts).map(|(w, &c)| w * c as f64).sum();
            let n = labels.len() as f64;
            prop_assert!(((mass - n) / n).abs() < 1e-9);
        }

        #[test]
        fn kfold_balanced_and_complete(counts in proptest::collection::vec(5usize..40, 2..5), k in 2usize..6, seed in any::<u64>()) {
            let d = labelled(&counts);
            let plan = stratified_kfold(&d, k, seed).unwrap();
            for (j, &c) in counts.iter().enumerate() {
                for f in 0..k {
                    let in_fold = (0..d.n_records()).filter(|&i| d.labels()[i] == j && plan.assignments[i] == f).count();
                    let ideal = c as f64 / k as f64;
                    prop_assert!((in_fold as f64 - ideal).abs() < 1.0 + 1e-9);
                }
            }
            prop_assert_eq!(plan.fold_sizes().iter().sum::<usize>(), d.n_records());
        }

        #[test]
        fn split_counts_within_one(counts in proptest::collection::vec(2usize..80, 2..6), frac in 0.05f64..0.6, seed in any::<u64>()) {
            let d = labelled(&counts);
            let (_, test) = stratified_split_indices(&d, frac, seed).unwrap();
            let got = per_class(&d, &test);
            for (j, &c) in counts.iter().enumerate() {
                prop_assert!((got[j] as f64 - (c as f64 * frac).round()).abs() <= 1.0);
            }
        }

        #[test]
        fn partitions_follow_identities_not_positions(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
            let d = labelled(&[13, 21, 8]);
            let mut perm: Vec<usize> = (0..d.n_records()).collect();
            perm.shuffle(&mut crate::rng::stream(shuffle_seed, 99, 0));
            let p = shuffled_copy(&d, &perm);

            let ids_of = |ds: &Dataset, pos: &[usize]| { let mut v: Vec<usize> = pos.iter().map(|&i| ds.ids()[i]).collect(); v.sort_unstable(); v };
            let (_, t1) = stratified_split_indices(&d, 0.25, seed).unwrap();
            let (_, t2) = stratified_split_indices(&p, 0.25, seed).unwrap();
            prop_assert_eq!(ids_of(&d, &t1), ids_of(&p, &t2));

            let f1 = stratified_kfold(&d, 4, seed).unwrap();
            let f2 = stratified_kfold(&p, 4, seed).unwrap();
            for f in 0..4 {
                prop_assert_eq!(ids_of(&d, &f1.split(f).1), ids_of(&p, &f2.split(f).1));
            }
        }
    }
}
