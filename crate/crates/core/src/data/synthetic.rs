//! Category-structured synthetic data with injected mislabelled records and a
//! linear-factor returns panel.
//!
//! Class `J` has its center at `(s / sqrt 2) * e_J` in the numeric feature
//! space, so every pair of centers is exactly `s = class_separation` apart.
//! Native records scatter around their own center with unit variance.
//! Injected records are drawn around another class's center (their source)
//! but carry the host class label.
//!
//! Returns follow one factor per class. Record `i` with label `J`, source `S`
//! and normalized center distance `z = |x - c_J| / sqrt(numeric_dims)`
//! earns
//!
//! ```text
//! fidelity = exp(-max(z - 1, 0))
//! beta     = beta_lo + (beta_hi - beta_lo) * fidelity
//! r(t)     = beta * (fidelity * b_J(t) + (1 - fidelity) * b_S(t)) + noise_scale * z^2 * eps(t)
//! ```
//!
//! so the further a record sits from its class center the less of its
//! return is explained by its label's benchmark.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Column, DataError, Dataset, FeatureSchema, Result};
use crate::rng::{stream, tags};

const MARKET_VOL: f64 = 0.04;
const STYLE_VOL: f64 = 0.02;
const PREFERRED_CATEGORY_PROB: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub records_per_class: usize,
    pub numeric_dims: usize,
    /// One entry per categorical feature: its vocabulary size.
    pub categorical_vocab_sizes: Vec<usize>,
    pub class_separation: f64,
    pub contamination_fraction: f64,
    /// `[lo, hi]` range of benchmark betas; typical records get `hi`.
    pub beta_range: [f64; 2],
    pub noise_scale: f64,
    /// Number of return periods.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 3,
            records_per_class: 200,
            numeric_dims: 6,
            categorical_vocab_sizes: vec![4, 3],
            class_separation: 5.0,
            contamination_fraction: 0.1,
            beta_range: [0.6, 1.0],
            noise_scale: 0.004,
            horizon: 36,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.n_classes < 2 {
            return bad(format!("n_classes = {} must be at least 2", self.n_classes));
        }
        if self.records_per_class < 2 {
            return bad("records_per_class must be at least 2".into());
        }
        if self.numeric_dims < self.n_classes {
            return bad(format!(
                "numeric_dims = {} must be at least n_classes = {} to place equidistant centers",
                self.numeric_dims, self.n_classes
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation must be a nonnegative real".into());
        }
        if !(0.0..1.0).contains(&self.contamination_fraction) {
            return bad("contamination_fraction must lie in [0, 1)".into());
        }
        if self.categorical_vocab_sizes.iter().any(|&v| v < 2) {
            return bad("categorical vocabularies need at least two values".into());
        }
        let [lo, hi] = self.beta_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("beta_range must be [lo, hi] with lo <= hi".into());
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be nonnegative".into());
        }
        if self.horizon < 3 {
            return bad("horizon must be at least 3 periods".into());
        }
        Ok(())
    }

    pub fn injected_per_class(&self) -> usize {
        (self.records_per_class as f64 * self.contamination_fraction).round() as usize
    }

    pub fn center(&self, class: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.numeric_dims];
        c[class] = self.class_separation / std::f64::consts::SQRT_2;
        c
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Per record, `horizon` periodic returns.
    pub returns: Vec<Vec<f64>>,
    /// Per class, `horizon` benchmark returns.
    pub benchmarks: Vec<Vec<f64>>,
    pub is_injected: Vec<bool>,
    /// Class whose center each record was drawn around.
    pub source_class: Vec<usize>,
}

impl SyntheticData {
    /// Euclidean distance of record `i`'s numeric features to the center of
    /// `class`.
    pub fn distance_to_center(&self, spec: &SyntheticSpec, i: usize, class: usize) -> f64 {
        let c = spec.center(class);
        self.dataset.row(i)[..spec.numeric_dims].iter().zip(&c).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt()
    }

    /// `record_id,period,return`
    pub fn write_returns_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["record_id", "period", "return"])?;
        for (i, series) in self.returns.iter().enumerate() {
            let id = self.dataset.ids()[i].to_string();
            for (t, r) in series.iter().enumerate() {
                wtr.write_record([id.as_str(), &t.to_string(), &format!("{r}")])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// `class,period,return`
    pub fn write_benchmarks_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["class", "period", "return"])?;
        for (j, series) in self.benchmarks.iter().enumerate() {
            for (t, r) in series.iter().enumerate() {
                wtr.write_record([self.dataset.classes()[j].as_str(), &t.to_string(), &format!("{r}")])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// `record_id,is_injected`
    pub fn write_truth_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["record_id", "is_injected"])?;
        for (i, &inj) in self.is_injected.iter().enumerate() {
            wtr.write_record([self.dataset.ids()[i].to_string(), inj.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws the dataset, returns panel, benchmarks and ground truth. A single
/// seeded stream is consumed sequentially, so output is bit-reproducible.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = stream(spec.seed, tags::SYNTHETIC, 0);
    let k = spec.n_classes;
    let m_inj = spec.injected_per_class();
    let p_num = spec.numeric_dims;
    let n_cat = spec.categorical_vocab_sizes.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut is_injected = Vec::new();
    let mut source_class = Vec::new();
    for host in 0..k {
        for r in 0..spec.records_per_class {
            let injected = r >= spec.records_per_class - m_inj;
            let source = if injected {
                let other = rng.random_range(0..k - 1);
                if other >= host {
                    other + 1
                } else {
                    other
                }
            } else {
                host
            };
            let center = spec.center(source);
            for c in &center {
                values.push(c + normal(&mut rng));
            }
            for (c, &vocab) in spec.categorical_vocab_sizes.iter().enumerate() {
                let preferred = (source + c) % vocab;
                let code = if rng.random::<f64>() < PREFERRED_CATEGORY_PROB {
                    preferred
                } else {
                    rng.random_range(0..vocab)
                };
                values.push(code as f64);
            }
            labels.push(host);
            is_injected.push(injected);
            source_class.push(source);
        }
    }

    let market: Vec<f64> = (0..spec.horizon).map(|_| MARKET_VOL * normal(&mut rng)).collect();
    let benchmarks: Vec<Vec<f64>> = (0..k)
        .map(|_| market.iter().map(|m| m + STYLE_VOL * normal(&mut rng)).collect())
        .collect();

    let n = labels.len();
    let p = p_num + n_cat;
    let [beta_lo, beta_hi] = spec.beta_range;
    let scale = (p_num as f64).sqrt();
    let mut returns = Vec::with_capacity(n);
    for i in 0..n {
        let center = spec.center(labels[i]);
        let dist = values[i * p..i * p + p_num].iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
        let z = dist / scale;
        let fidelity = (-(z - 1.0).max(0.0)).exp();
        let beta = beta_lo + (beta_hi - beta_lo) * fidelity;
        let sigma = spec.noise_scale * z * z;
        let own = &benchmarks[labels[i]];
        let src = &benchmarks[source_class[i]];
        let series = (0..spec.horizon)
            .map(|t| beta * (fidelity * own[t] + (1.0 - fidelity) * src[t]) + sigma * normal(&mut rng))
            .collect();
        returns.push(series);
    }

    let mut columns: Vec<Column> = (0..p_num).map(|d| Column::numeric(format!("x{d}"))).collect();
    for (c, &vocab) in spec.categorical_vocab_sizes.iter().enumerate() {
        let mut col = Column::categorical(format!("cat{c}"));
        col.vocabulary = (0..vocab).map(|v| format!("v{v}")).collect();
        columns.push(col);
    }
    let schema = FeatureSchema::new(columns, "category")?;
    let classes = (0..k).map(|j| format!("cat_{j}")).collect();
    let dataset = Dataset::from_parts(schema, values, labels, classes, None)?;
    Ok(SyntheticData { dataset, returns, benchmarks, is_injected, source_class })
}
