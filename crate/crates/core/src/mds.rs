//! Two-dimensional metric multidimensional scaling of a distance matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proximity::DistanceMatrix;
use crate::rng::{stream, tags};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MdsError {
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("distance matrix has nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("distance ({0}, {1}) is negative or not finite")]
    InvalidDistance(usize, usize),
}

pub type Result<T> = std::result::Result<T, MdsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MdsMethod {
    Classical,
    Smacof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdsOptions {
    pub method: MdsMethod,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MdsOptions {
    fn default() -> Self {
        MdsOptions { method: MdsMethod::Smacof, seed: 0, max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// Normalized stress-1 of the final coordinates.
    pub stress: f64,
    pub method: MdsMethod,
    pub seed: u64,
    /// Stress-1 after each iteration, starting with the initial layout.
    /// Empty for the classical method.
    pub stress_trace: Vec<f64>,
}

impl Embedding {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Whether the stress trace never rises, allowing rounding noise.
    pub fn stress_is_monotone(&self) -> bool {
        self.stress_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15)
    }
}

fn validate(dm: &DistanceMatrix) -> Result<()> {
    let n = dm.n();
    for i in 0..n {
        if dm.get(i, i).abs() > SYMMETRY_TOL {
            return Err(MdsError::NonzeroDiagonal(i));
        }
        for j in (i + 1)..n {
            let v = dm.get(i, j);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MdsError::InvalidDistance(i, j));
            }
        }
    }
    Ok(())
}

/// Normalized stress `sqrt(sum (d - delta)^2 / sum delta^2)` over pairs;
/// 0 when every `delta` is 0 and the layout is degenerate.
pub fn stress(coords: &[[f64; 2]], dm: &DistanceMatrix) -> f64 {
    let n = coords.len();
    let (num, den) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in (i + 1)..n {
                let d = ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt();
                let delta = dm.get(i, j);
                num += (d - delta).powi(2);
                den += delta * delta;
            }
            (num, den)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

fn center(coords: &mut [[f64; 2]]) {
    let n = coords.len() as f64;
    if n == 0.0 {
        return;
    }
    for c in 0..2 {
        let mean = coords.iter().map(|p| p[c]).sum::<f64>() / n;
        coords.iter_mut().for_each(|p| p[c] -= mean);
    }
}

fn classical(dm: &DistanceMatrix) -> Vec<[f64; 2]> {
    let n = dm.n();
    let sq = DMatrix::from_fn(n, n, |i, j| dm.get(i, j).powi(2));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        // fix the sign so the largest-magnitude component is positive
        let pivot = (0..n).max_by(|&a, &c| v[a].abs().total_cmp(&v[c].abs()).then(c.cmp(&a))).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][axis] = sign * v[i] * lambda.sqrt();
        }
    }
    center(&mut coords);
    coords
}

/// One Guttman transform `X <- B(X) X / n`.
fn guttman(x: &[[f64; 2]], dm: &DistanceMatrix) -> Vec<[f64; 2]> {
    let n = x.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 2];
            let mut diag = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = ((x[i][0] - x[j][0]).powi(2) + (x[i][1] - x[j][1]).powi(2)).sqrt();
                let b = if d > 0.0 { -dm.get(i, j) / d } else { 0.0 };
                diag -= b;
                acc[0] += b * x[j][0];
                acc[1] += b * x[j][1];
            }
            [(acc[0] + diag * x[i][0]) / n as f64, (acc[1] + diag * x[i][1]) / n as f64]
        })
        .collect()
}

fn smacof(dm: &DistanceMatrix, opts: &MdsOptions) -> (Vec<[f64; 2]>, Vec<f64>) {
    let n = dm.n();
    let mut rng = stream(opts.seed, tags::MDS, 0);
    let mut x: Vec<[f64; 2]> = (0..n).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
    center(&mut x);
    let mut trace = vec![stress(&x, dm)];
    for _ in 0..opts.max_iter {
        x = guttman(&x, dm);
        let s = stress(&x, dm);
        let prev = *trace.last().unwrap();
        trace.push(s);
        if (prev - s).abs() < opts.tol {
            break;
        }
    }
    center(&mut x);
    (x, trace)
}

pub fn mds_embed(dm: &DistanceMatrix, opts: &MdsOptions) -> Result<Embedding> {
    validate(dm)?;
    let n = dm.n();
    let all_zero = (0..n).all(|i| ((i + 1)..n).all(|j| dm.get(i, j) == 0.0));
    let (coords, trace) = if n <= 1 || all_zero {
        (vec![[0.0; 2]; n], Vec::new())
    } else {
        match opts.method {
            MdsMethod::Classical => (classical(dm), Vec::new()),
            MdsMethod::Smacof => smacof(dm, opts),
        }
    };
    let s = stress(&coords, dm);
    Ok(Embedding { coords, stress: s, method: opts.method, seed: opts.seed, stress_trace: trace })
}

/// Validates symmetry of a dense row-major matrix, then embeds it.
pub fn mds_embed_dense(n: usize, dense: &[f64], opts: &MdsOptions) -> Result<Embedding> {
    assert_eq!(dense.len(), n * n);
    for i in 0..n {
        if dense[i * n + i].abs() > SYMMETRY_TOL {
            return Err(MdsError::NonzeroDiagonal(i));
        }
        for j in (i + 1)..n {
            if (dense[i * n + j] - dense[j * n + i]).abs() > SYMMETRY_TOL {
                return Err(MdsError::NotSymmetric(i, j));
            }
        }
    }
    mds_embed(&DistanceMatrix::from_dense_upper(n, dense), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(method: MdsMethod) -> MdsOptions {
        MdsOptions { method, seed: 1, max_iter: 3000, tol: 1e-12 }
    }

    #[test]
    fn two_points() {
        for m in [MdsMethod::Classical, MdsMethod::Smacof] {
            let e = mds_embed_dense(2, &[0.0, 0.7, 0.7, 0.0], &opts(m)).unwrap();
            assert!((e.distance(0, 1) - 0.7).abs() < 1e-6, "{m:?}");
            assert!(e.stress < 1e-6);
        }
    }

    #[test]
    fn equilateral_triangle() {
        let d = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        for m in [MdsMethod::Classical, MdsMethod::Smacof] {
            let e = mds_embed_dense(3, &d, &opts(m)).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                assert!((e.distance(i, j) - 1.0).abs() < 1e-6, "{m:?} {}", e.distance(i, j));
            }
        }
    }

    #[test]
    fn tetrahedron_has_positive_stress() {
        let mut d = vec![1.0; 16];
        (0..4).for_each(|i| d[i * 4 + i] = 0.0);
        let e = mds_embed_dense(4, &d, &MdsOptions { seed: 3, ..Default::default() }).unwrap();
        assert!(e.stress > 0.01);
        assert!(e.stress_is_monotone(), "{:?}", e.stress_trace);
    }

    #[test]
    fn validation_errors() {
        let o = MdsOptions::default();
        assert_eq!(mds_embed_dense(2, &[0.0, 1.0, 0.5, 0.0], &o), Err(MdsError::NotSymmetric(0, 1)));
        assert_eq!(mds_embed_dense(2, &[0.1, 1.0, 1.0, 0.0], &o), Err(MdsError::NonzeroDiagonal(0)));
    }

    #[test]
    fn all_zero_distances() {
        let e = mds_embed_dense(3, &[0.0; 9], &MdsOptions::default()).unwrap();
        assert_eq!(e.coords, vec![[0.0; 2]; 3]);
        assert_eq!(e.stress, 0.0);
    }

    #[test]
    fn coordinates_are_centered() {
        let pts: [[f64; 2]; 5] = [[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [1.0, 1.0], [5.0, 2.0]];
        let n = pts.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            }
        }
        for m in [MdsMethod::Classical, MdsMethod::Smacof] {
            let e = mds_embed_dense(n, &d, &opts(m)).unwrap();
            for c in 0..2 {
                assert!(e.coords.iter().map(|p| p[c]).sum::<f64>().abs() < 1e-9);
            }
        }
    }
}
