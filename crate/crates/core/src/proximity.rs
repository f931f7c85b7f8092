//! Leaf co-occurrence proximities between records.
//!
//! Three kinds are supported:
//!
//! * `Original`: the fraction of trees in which `i` and `j` reach the same
//!   leaf.
//! * `Oob`: the same fraction restricted to trees where both records are
//!   out-of-bag. Pairs that never share an OOB tree get 0 and a flag.
//! * `Gap`: for record `i`, average over its OOB trees of the share of the
//!   in-bag multiset in `i`'s leaf that is made up of copies of `j`. The
//!   matrix is symmetrized as `(P + P^T) / 2`; the one-sided form is kept in
//!   [`ProximityMatrix::asymmetric`].
//!
//! The fast paths accumulate integer co-occurrence counts per row (or, for
//! GAP, floating-point terms in tree order) so they agree bit for bit with
//! [`proximity_oracle`].

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::forest::{apply, Forest, ForestError, LeafMatrix};

/// Largest `n` accepted by [`proximity_oracle`].
pub const ORACLE_MAX_N: usize = 2000;

const MAGIC: &[u8; 4] = b"RFPX";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProximityError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("oracle limited to n <= {ORACLE_MAX_N}, got {0}")]
    TooLarge(usize),
    #[error("out-of-bag proximities need the training data: forest saw {n_train} records, got {n}")]
    BootstrapMismatch { n: usize, n_train: usize },
    #[error("proximity needs at least 2 records")]
    TooFewRecords,
    #[error("malformed proximity file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProximityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProximityKind {
    Original,
    Oob,
    Gap,
}

impl ProximityKind {
    fn code(self) -> u8 {
        match self {
            ProximityKind::Original => 0,
            ProximityKind::Oob => 1,
            ProximityKind::Gap => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ProximityKind::Original),
            1 => Some(ProximityKind::Oob),
            2 => Some(ProximityKind::Gap),
            _ => None,
        }
    }
}

/// Index of `(i, j)`, `i <= j`, in a row-major packed upper triangle.
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Symmetric `n x n` proximity matrix stored as a packed upper triangle
/// (diagonal included).
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    n: usize,
    kind: ProximityKind,
    packed: Vec<f64>,
    /// Packed like `packed`; set where a value is undefined (OOB pairs with
    /// no shared OOB tree). Empty when nothing is flagged.
    pair_flags: Vec<bool>,
    /// GAP rows whose record is in-bag in every tree.
    undefined_rows: Vec<bool>,
    asymmetric: Option<Vec<f64>>,
}

impl ProximityMatrix {
    /// Builds an original-kind matrix from a dense symmetric array.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut packed = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            packed.extend_from_slice(&dense[i * n + i..(i + 1) * n]);
        }
        ProximityMatrix {
            n,
            kind: ProximityKind::Original,
            packed,
            pair_flags: Vec::new(),
            undefined_rows: vec![false; n],
            asymmetric: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ProximityKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.packed[packed_index(self.n, a, b)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.packed[packed_index(n, i, j)];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn is_flagged(&self, i: usize, j: usize) -> bool {
        if self.pair_flags.is_empty() {
            return false;
        }
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.pair_flags[packed_index(self.n, a, b)]
    }

    pub fn flagged_pairs(&self) -> usize {
        self.pair_flags.iter().filter(|&&f| f).count()
    }

    pub fn undefined_rows(&self) -> &[bool] {
        &self.undefined_rows
    }

    /// Dense row-major one-sided GAP matrix, if this is a GAP matrix.
    pub fn asymmetric(&self) -> Option<&[f64]> {
        self.asymmetric.as_deref()
    }

    /// Principal submatrix on `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> ProximityMatrix {
        let m = positions.len();
        let mut packed = Vec::with_capacity(packed_len(m));
        let mut flags = Vec::new();
        for a in 0..m {
            for b in a..m {
                packed.push(self.get(positions[a], positions[b]));
                if !self.pair_flags.is_empty() {
                    flags.push(self.is_flagged(positions[a], positions[b]));
                }
            }
        }
        let asymmetric = self.asymmetric.as_ref().map(|full| {
            let mut out = Vec::with_capacity(m * m);
            for &pa in positions {
                for &pb in positions {
                    out.push(full[pa * self.n + pb]);
                }
            }
            out
        });
        ProximityMatrix {
            n: m,
            kind: self.kind,
            packed,
            pair_flags: flags,
            undefined_rows: positions.iter().map(|&p| self.undefined_rows[p]).collect(),
            asymmetric,
        }
    }

    /// Binary layout, little endian: `b"RFPX"`, `u32` version, `u64` n,
    /// `u8` kind (0 original, 1 oob, 2 gap), then the `n(n+1)/2` packed
    /// upper-triangle values as `f64`, row by row.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&[self.kind.code()])?;
        let mut buf = Vec::with_capacity(self.packed.len() * 8);
        for v in &self.packed {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<ProximityMatrix> {
        let mut head = [0u8; 17];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(ProximityError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != BINARY_VERSION {
            return Err(ProximityError::Format(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
        let kind = ProximityKind::from_code(head[16]).ok_or_else(|| ProximityError::Format("bad kind".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != packed_len(n) * 8 {
            return Err(ProximityError::Format(format!("expected {} values", packed_len(n))));
        }
        let packed = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(ProximityMatrix { n, kind, packed, pair_flags: Vec::new(), undefined_rows: vec![false; n], asymmetric: None })
    }

    /// `i,j,value` rows for `j > i` with `value >= cutoff`. `ids` maps
    /// positions to record ids.
    pub fn write_csv<W: Write>(&self, w: W, ids: &[usize], cutoff: f64) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["i", "j", "value"])?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = self.get(i, j);
                if v >= cutoff {
                    wtr.write_record([ids[i].to_string(), ids[j].to_string(), format!("{v}")])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `1 - proximity`, same packing.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_proximity(p: &ProximityMatrix) -> Self {
        DistanceMatrix { n: p.n, packed: p.packed.iter().map(|v| 1.0 - v).collect() }
    }

    /// Upper triangle of a dense array; symmetry is not checked here.
    pub fn from_dense_upper(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut packed = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            packed.extend_from_slice(&dense[i * n + i..(i + 1) * n]);
        }
        DistanceMatrix { n, packed }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.packed[packed_index(self.n, a, b)]
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

pub fn distance_matrix(p: &ProximityMatrix) -> DistanceMatrix {
    DistanceMatrix::from_proximity(p)
}

/// Records grouped by leaf, per tree: `groups[t][leaf]` lists positions in
/// ascending order.
fn leaf_groups(f: &Forest, leaves: &LeafMatrix) -> Vec<Vec<Vec<usize>>> {
    (0..leaves.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut groups = vec![Vec::new(); f.trees[t].n_leaves];
            for i in 0..leaves.n {
                groups[leaves.leaf(i, t) as usize].push(i);
            }
            groups
        })
        .collect()
}

fn check_training(f: &Forest, d: &Dataset) -> Result<()> {
    if d.n_records() != f.n_train() {
        return Err(ProximityError::BootstrapMismatch { n: d.n_records(), n_train: f.n_train() });
    }
    Ok(())
}

/// Fraction of trees in which each pair shares a leaf.
pub fn proximity_matrix(f: &Forest, d: &Dataset) -> Result<ProximityMatrix> {
    let n = d.n_records();
    if n < 2 {
        return Err(ProximityError::TooFewRecords);
    }
    let leaves = apply(f, d)?;
    let groups = leaf_groups(f, &leaves);
    let t_count = f.n_trees() as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u32; n - i];
            for (t, g) in groups.iter().enumerate() {
                for &j in &g[leaves.leaf(i, t) as usize] {
                    if j >= i {
                        counts[j - i] += 1;
                    }
                }
            }
            counts.into_iter().map(|c| c as f64 / t_count).collect()
        })
        .collect();
    Ok(ProximityMatrix {
        n,
        kind: ProximityKind::Original,
        packed: rows.concat(),
        pair_flags: Vec::new(),
        undefined_rows: vec![false; n],
        asymmetric: None,
    })
}

/// Co-leaf fraction over trees where both records are out-of-bag. `d` must
/// be the training data.
pub fn oob_proximity_matrix(f: &Forest, d: &Dataset) -> Result<ProximityMatrix> {
    check_training(f, d)?;
    let n = d.n_records();
    if n < 2 {
        return Err(ProximityError::TooFewRecords);
    }
    let leaves = apply(f, d)?;
    let t_count = f.n_trees();
    let words = t_count.div_ceil(64);
    let mut oob_bits = vec![0u64; n * words];
    for (t, b) in f.bootstrap.iter().enumerate() {
        for i in 0..n {
            if b[i] == 0 {
                oob_bits[i * words + t / 64] |= 1 << (t % 64);
            }
        }
    }
    let groups = leaf_groups(f, &leaves);
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut num = vec![0u32; n - i];
            for (t, g) in groups.iter().enumerate() {
                if f.bootstrap[t][i] != 0 {
                    continue;
                }
                for &j in &g[leaves.leaf(i, t) as usize] {
                    if j >= i && f.bootstrap[t][j] == 0 {
                        num[j - i] += 1;
                    }
                }
            }
            let bi = &oob_bits[i * words..(i + 1) * words];
            let mut vals = Vec::with_capacity(n - i);
            let mut flags = Vec::with_capacity(n - i);
            for j in i..n {
                let bj = &oob_bits[j * words..(j + 1) * words];
                let den: u32 = bi.iter().zip(bj).map(|(a, b)| (a & b).count_ones()).sum();
                if den == 0 {
                    vals.push(0.0);
                    flags.push(true);
                } else {
                    vals.push(num[j - i] as f64 / den as f64);
                    flags.push(false);
                }
            }
            (vals, flags)
        })
        .collect();
    let (vals, flags): (Vec<Vec<f64>>, Vec<Vec<bool>>) = rows.into_iter().unzip();
    let pair_flags = flags.concat();
    let any = pair_flags.iter().any(|&f| f);
    Ok(ProximityMatrix {
        n,
        kind: ProximityKind::Oob,
        packed: vals.concat(),
        pair_flags: if any { pair_flags } else { Vec::new() },
        undefined_rows: vec![false; n],
        asymmetric: None,
    })
}

fn symmetrize_gap(n: usize, asym: Vec<f64>, undefined_rows: Vec<bool>) -> ProximityMatrix {
    let mut packed = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        packed.push(0.0);
        for j in (i + 1)..n {
            packed.push((asym[i * n + j] + asym[j * n + i]) / 2.0);
        }
    }
    ProximityMatrix { n, kind: ProximityKind::Gap, packed, pair_flags: Vec::new(), undefined_rows, asymmetric: Some(asym) }
}

/// GAP proximities; `d` must be the training data.
pub fn gap_proximity_matrix(f: &Forest, d: &Dataset) -> Result<ProximityMatrix> {
    check_training(f, d)?;
    let n = d.n_records();
    if n < 2 {
        return Err(ProximityError::TooFewRecords);
    }
    let leaves = apply(f, d)?;
    let groups = leaf_groups(f, &leaves);
    // in-bag multiset size per (tree, leaf)
    let inbag_size: Vec<Vec<u64>> = groups
        .iter()
        .enumerate()
        .map(|(t, g)| g.iter().map(|members| members.iter().map(|&j| f.bootstrap[t][j] as u64).sum()).collect())
        .collect();
    let rows: Vec<(Vec<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0f64; n];
            let mut s = 0usize;
            for (t, g) in groups.iter().enumerate() {
                if f.bootstrap[t][i] != 0 {
                    continue;
                }
                s += 1;
                let leaf = leaves.leaf(i, t) as usize;
                let m = inbag_size[t][leaf];
                if m == 0 {
                    continue;
                }
                for &j in &g[leaf] {
                    let c = f.bootstrap[t][j];
                    if c != 0 && j != i {
                        acc[j] += c as f64 / m as f64;
                    }
                }
            }
            if s == 0 {
                return (vec![0.0; n], true);
            }
            acc.iter_mut().for_each(|a| *a /= s as f64);
            (acc, false)
        })
        .collect();
    let (asym_rows, undefined): (Vec<Vec<f64>>, Vec<bool>) = rows.into_iter().unzip();
    Ok(symmetrize_gap(n, asym_rows.concat(), undefined))
}

pub fn compute(f: &Forest, d: &Dataset, kind: ProximityKind) -> Result<ProximityMatrix> {
    match kind {
        ProximityKind::Original => proximity_matrix(f, d),
        ProximityKind::Oob => oob_proximity_matrix(f, d),
        ProximityKind::Gap => gap_proximity_matrix(f, d),
    }
}

/// Naive per-pair, per-tree evaluation of the same definitions, routing each
/// record through each tree independently. Quadratic; meant for testing.
pub fn proximity_oracle(f: &Forest, d: &Dataset, kind: ProximityKind) -> Result<ProximityMatrix> {
    let n = d.n_records();
    if n > ORACLE_MAX_N {
        return Err(ProximityError::TooLarge(n));
    }
    if n < 2 {
        return Err(ProximityError::TooFewRecords);
    }
    f.check_schema(d)?;
    if kind != ProximityKind::Original {
        check_training(f, d)?;
    }
    let t_count = f.n_trees();
    // route every record through every tree on its own
    let mut table = vec![0usize; n * t_count];
    for i in 0..n {
        for t in 0..t_count {
            table[i * t_count + t] = f.trees[t].leaf_of(d.row(i));
        }
    }
    let leaf = |i: usize, t: usize| table[i * t_count + t];
    let oob = |i: usize, t: usize| f.bootstrap[t][i] == 0;
    match kind {
        ProximityKind::Original => {
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut c = 0u32;
                    for t in 0..t_count {
                        if leaf(i, t) == leaf(j, t) {
                            c += 1;
                        }
                    }
                    dense[i * n + j] = c as f64 / t_count as f64;
                }
            }
            Ok(ProximityMatrix::from_dense(n, &dense))
        }
        ProximityKind::Oob => {
            let mut packed = Vec::new();
            let mut flags = Vec::new();
            for i in 0..n {
                for j in i..n {
                    let (mut num, mut den) = (0u32, 0u32);
                    for t in 0..t_count {
                        if oob(i, t) && oob(j, t) {
                            den += 1;
                            if leaf(i, t) == leaf(j, t) {
                                num += 1;
                            }
                        }
                    }
                    packed.push(if den == 0 { 0.0 } else { num as f64 / den as f64 });
                    flags.push(den == 0);
                }
            }
            let any = flags.iter().any(|&f| f);
            Ok(ProximityMatrix {
                n,
                kind,
                packed,
                pair_flags: if any { flags } else { Vec::new() },
                undefined_rows: vec![false; n],
                asymmetric: None,
            })
        }
        ProximityKind::Gap => {
            let mut asym = vec![0.0; n * n];
            let mut undefined = vec![false; n];
            for i in 0..n {
                let s_i: Vec<usize> = (0..t_count).filter(|&t| oob(i, t)).collect();
                if s_i.is_empty() {
                    undefined[i] = true;
                    continue;
                }
                let row = &mut asym[i * n..(i + 1) * n];
                for &t in &s_i {
                    let li = leaf(i, t);
                    let m: u64 = (0..n).filter(|&k| leaf(k, t) == li).map(|k| f.bootstrap[t][k] as u64).sum();
                    for (j, cell) in row.iter_mut().enumerate() {
                        let c = f.bootstrap[t][j];
                        if j != i && m > 0 && c > 0 && leaf(j, t) == li {
                            *cell += c as f64 / m as f64;
                        }
                    }
                }
                row.iter_mut().for_each(|v| *v /= s_i.len() as f64);
            }
            Ok(symmetrize_gap(n, asym, undefined))
        }
    }
}
