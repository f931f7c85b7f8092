//! End-to-end acceptance checks.
//!
//! Built without the libtest harness so every check prints its PASS/FAIL line
//! whether or not the suite succeeds. Exits non-zero when any check fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use proxforest::data::{impute_zero, load_csv, Dataset, FeatureSchema};
use proxforest::forest::{fit_forest, ForestParams, MaxFeatures};
use proxforest::mds::{mds_embed_dense, MdsMethod, MdsOptions};
use proxforest::metrics::{classification_report, linear_regression_r2};
use proxforest::outlier::{median, standardize_foreign, standardize_members, Deviation, OutlierConfig, OutlierScores};
use proxforest::proximity::{compute, proximity_oracle, ProximityKind, ProximityMatrix};

const MACRO_F1_GAP: f64 = 0.05;
const ORACLE_INSTANCES: usize = 20;
const ORACLE_MAX_N: usize = 200;
const ORACLE_MAX_T: usize = 50;
const CHAIN_RTOL: f64 = 1e-12;
const K_SIGMA: f64 = 2.0;
const OUTLIER_SEEDS: u64 = 10;
/// Flag counts are sensitive to proximity smoothness; see README.
const OUTLIER_TREES: usize = 500;
const RECALL_MIN: f64 = 0.70;
const PROP_CASES: u32 = 100;
const MEDIAN_ZERO_TOL: f64 = 1e-9;
const INVARIANCE_RTOL: f64 = 1e-9;
const CLASSICAL_TOL: f64 = 1e-6;
const MICRO_F1_TOL: f64 = 1e-12;
const RUNTIME_LIMIT: Duration = Duration::from_secs(600);
const CAR_ENV: &str = "PROXFOREST_CAR_CSV";

struct Uci {
    name: &'static str,
    min_accuracy: f64,
    flag_range: (u64, u64),
}

const UCI: [Uci; 5] = [
    Uci { name: "iris", min_accuracy: 0.93, flag_range: (3, 18) },
    Uci { name: "wine", min_accuracy: 0.97, flag_range: (3, 18) },
    Uci { name: "breast_cancer", min_accuracy: 0.91, flag_range: (4, 25) },
    Uci { name: "digits", min_accuracy: 0.95, flag_range: (20, 90) },
    Uci { name: "car", min_accuracy: 0.93, flag_range: (30, 110) },
];

type Outcome = Result<(bool, String), String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config_path(name: &str) -> String {
    root().join("configs").join(format!("{name}.toml")).display().to_string()
}

fn cli(out_root: &Path, args: &[String], threads: Option<usize>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_proxforest"));
    cmd.args(args).env("PROXFOREST_OUT", out_root).env_remove("RAYON_NUM_THREADS");
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`proxforest {}` failed ({}): {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_table(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            Ok(header.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn tempdir() -> Result<TempDir, String> {
    TempDir::new().map_err(|e| e.to_string())
}

/// Extra arguments selecting the dataset; the car table is not shipped and
/// may come from `$PROXFOREST_CAR_CSV`.
fn dataset_args(name: &str) -> Result<Vec<String>, String> {
    if name == "car" {
        if let Ok(path) = std::env::var(CAR_ENV) {
            return Ok(vec!["--data".into(), path]);
        }
    }
    let path = root().join("data").join(format!("{name}.csv"));
    if path.is_file() {
        Ok(Vec::new())
    } else {
        let hint = if name == "car" { format!("; run scripts/fetch_car.sh or set {CAR_ENV}") } else { String::new() };
        Err(format!("{} not found{hint}", path.display()))
    }
}

fn load_fixture(name: &str) -> Dataset {
    let path = root().join("data").join(format!("{name}.csv"));
    let schema = FeatureSchema::infer_from_csv(&path, "class", &[]).unwrap();
    impute_zero(&load_csv(&path, &schema).unwrap())
}

// ---------------------------------------------------------------------------

fn classification(uci: &Uci) -> Outcome {
    let extra = dataset_args(uci.name)?;
    let tmp = tempdir()?;
    let mut a = args(&["train", "-c", &config_path(uci.name), "--seed", "0"]);
    a.extend(extra);
    cli(tmp.path(), &a, None)?;
    let m = read_json(&tmp.path().join(uci.name).join("metrics.json"))?;
    let acc = m["report"]["accuracy"].as_f64().ok_or("metrics.json lacks accuracy")?;
    let f1 = m["report"]["f1_macro"].as_f64().ok_or("metrics.json lacks f1_macro")?;
    let gap = (acc - f1).abs();
    let p = &m["params"];
    Ok((
        acc >= uci.min_accuracy && gap <= MACRO_F1_GAP,
        format!(
            "n_test {}, accuracy {acc:.4} (>= {}), macro-F1 {f1:.4}, gap {gap:.4} (<= {MACRO_F1_GAP}); n_trees {} max_depth {} {} {}",
            m["n_test"], uci.min_accuracy, p["n_trees"], p["max_depth"], p["max_features"], p["criterion"]
        ),
    ))
}

fn gaussian_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let p = rng.random_range(1..=8);
    let k = rng.random_range(2..=4);
    let coarse = rng.random_bool(0.5);
    let names: Vec<String> = (0..p).map(|f| format!("f{f}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let classes = ["a", "b", "c", "d"];
    let mut labels = Vec::with_capacity(n);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = i % k;
            labels.push(classes[c]);
            (0..p)
                .map(|_| {
                    let v = c as f64 + rng.random::<f64>() * 2.0;
                    if coarse {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Dataset::from_numeric_rows(&refs, &rows, &labels).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let fixtures: Vec<Dataset> = ["iris", "wine", "breast_cancer", "digits"].iter().map(|n| load_fixture(n)).collect();
    let mut mismatches = Vec::new();
    let (mut n_range, mut t_range) = ((usize::MAX, 0), (usize::MAX, 0));
    for inst in 0..ORACLE_INSTANCES {
        let t = rng.random_range(1..=ORACLE_MAX_T);
        let d = if inst % 2 == 0 {
            let full = &fixtures[(inst / 2) % fixtures.len()];
            let mut positions: Vec<usize> = (0..full.n_records()).collect();
            positions.shuffle(&mut rng);
            positions.truncate(rng.random_range(20..=ORACLE_MAX_N.min(full.n_records())));
            full.subset(&positions)
        } else {
            let n = rng.random_range(20..=ORACLE_MAX_N);
            gaussian_dataset(&mut rng, n)
        };
        let n = d.n_records();
        n_range = (n_range.0.min(n), n_range.1.max(n));
        t_range = (t_range.0.min(t), t_range.1.max(t));
        let params = ForestParams {
            n_trees: t,
            max_depth: [None, Some(2), Some(5)][rng.random_range(0..3)],
            max_features: [MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::All][rng.random_range(0..3)],
            seed: rng.random(),
            ..Default::default()
        };
        let f = fit_forest(&d, &params).map_err(|e| format!("instance {inst}: {e}"))?;
        for kind in [ProximityKind::Original, ProximityKind::Oob, ProximityKind::Gap] {
            let fast = compute(&f, &d, kind).map_err(|e| e.to_string())?;
            let slow = proximity_oracle(&f, &d, kind).map_err(|e| e.to_string())?;
            let bits = |m: &ProximityMatrix| m.packed().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            let same = bits(&fast) == bits(&slow)
                && fast.undefined_rows() == slow.undefined_rows()
                && fast.asymmetric().map(|a| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                    == slow.asymmetric().map(|a| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            if !same {
                mismatches.push(format!("#{inst} {kind:?}"));
            }
        }
    }
    let total = ORACLE_INSTANCES * 3;
    Ok((
        mismatches.is_empty(),
        format!(
            "{}/{total} (instance, kind) pairs bitwise equal; n {}..{}, T {}..{}{}",
            total - mismatches.len(),
            n_range.0,
            n_range.1,
            t_range.0,
            t_range.1,
            if mismatches.is_empty() { String::new() } else { format!("; mismatches: {}", mismatches.join(", ")) }
        ),
    ))
}

/// Five records, classes {0, 1, 2} and {3, 4}.
const CHAIN_PROXIMITY: [[f64; 5]; 5] = [
    [1.0, 0.8, 0.6, 0.1, 0.05],
    [0.8, 1.0, 0.7, 0.2, 0.1],
    [0.6, 0.7, 1.0, 0.3, 0.15],
    [0.1, 0.2, 0.3, 1.0, 0.9],
    [0.05, 0.1, 0.15, 0.9, 1.0],
];
const CHAIN_LABELS: [usize; 5] = [0, 0, 0, 1, 1];

fn scalar_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Straight-line evaluation of the measure for one (record, class) pair.
fn scalar_measure(i: usize, class: usize, mean_deviation: bool) -> f64 {
    let members: Vec<usize> = (0..5).filter(|&m| CHAIN_LABELS[m] == class).collect();
    let raw = |r: usize| {
        let mut mass = 0.0;
        for &m in &members {
            if m != r {
                mass += CHAIN_PROXIMITY[r][m] * CHAIN_PROXIMITY[r][m];
            }
        }
        members.len() as f64 / mass
    };
    let own = CHAIN_LABELS[i] == class;
    let mut reference: Vec<f64> = members.iter().map(|&m| raw(m)).collect();
    if !own {
        reference.push(raw(i));
    }
    let med = scalar_median(reference.clone());
    let abs: Vec<f64> = reference.iter().map(|r| (r - med).abs()).collect();
    let dev = if mean_deviation { abs.iter().sum::<f64>() / abs.len() as f64 } else { scalar_median(abs) };
    let x = raw(i);
    if dev < 1e-12 {
        return if own || x <= med + 1e-12 { 0.0 } else { f64::INFINITY };
    }
    (x - med) / dev
}

fn eq_chain() -> Outcome {
    let dense: Vec<f64> = CHAIN_PROXIMITY.iter().flatten().copied().collect();
    let p = ProximityMatrix::from_dense(5, &dense);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut regular = 0;
    for (deviation, mean) in [(Deviation::Median, false), (Deviation::Mean, true)] {
        let scores = OutlierScores::compute(&p, &CHAIN_LABELS, 2, OutlierConfig { deviation, ..Default::default() })
            .map_err(|e| e.to_string())?;
        for i in 0..5 {
            for class in 0..2 {
                let got = scores.measure(i, class);
                let want = scalar_measure(i, class, mean);
                let ok = if want.is_finite() && want != 0.0 {
                    regular += 1;
                    let rel = (got - want).abs() / want.abs();
                    worst = worst.max(rel);
                    rel <= CHAIN_RTOL
                } else {
                    got == want
                };
                if !ok {
                    failures.push(format!("{deviation:?} O^{class}({i}) = {got} vs {want}"));
                }
            }
        }
    }
    Ok((
        failures.is_empty(),
        format!(
            "20 values ({regular} non-degenerate), max relative error {worst:.2e} (<= {CHAIN_RTOL:e}){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    ))
}

fn outlier_counts(uci: &Uci) -> Outcome {
    let extra = dataset_args(uci.name)?;
    let tmp = tempdir()?;
    let cfg = config_path(uci.name);
    let dir = tmp.path().join(uci.name);
    let (lo, hi) = uci.flag_range;
    let (mut counts, mut overlaps) = (Vec::new(), Vec::new());
    let mut overlap_reported = true;
    for seed in 0..OUTLIER_SEEDS {
        let s = seed.to_string();
        let k = K_SIGMA.to_string();
        let t = OUTLIER_TREES.to_string();
        for mut a in [
            args(&["train", "-c", &cfg, "--seed", &s, "--no-grid", "--trees", &t]),
            args(&["outliers", "-c", &cfg, "--seed", &s, "--k-sigma", &k]),
            args(&["report", "-c", &cfg, "--seed", &s]),
        ] {
            a.extend(extra.iter().cloned());
            cli(tmp.path(), &a, None)?;
        }
        let m = read_json(&dir.join("manifest.json"))?;
        counts.push(m["outlier_count"].as_u64().ok_or("manifest lacks outlier_count")?);
        match m["overlap"].as_u64() {
            Some(o) => overlaps.push(o),
            None => overlap_reported = false,
        }
    }
    let in_range = counts.iter().all(|c| (lo..=hi).contains(c));
    Ok((
        in_range && overlap_reported,
        format!("T={OUTLIER_TREES}, k={K_SIGMA}: flagged {counts:?} in [{lo}, {hi}]; overlap {overlaps:?}"),
    ))
}

/// One synthetic `run`, shared by the recall and quartile checks.
fn synthetic_run() -> Result<PathBuf, String> {
    static RUN: OnceLock<Result<TempDir, String>> = OnceLock::new();
    let run = RUN.get_or_init(|| {
        let tmp = tempdir()?;
        cli(tmp.path(), &args(&["run", "-c", &config_path("synthetic")]), None)?;
        Ok(tmp)
    });
    match run {
        Ok(tmp) => Ok(tmp.path().join("synthetic")),
        Err(e) => Err(e.clone()),
    }
}

fn injected_recall() -> Outcome {
    let dir = synthetic_run()?;
    let scores = read_table(&dir.join("scores.csv"))?;
    let truth = read_table(&dir.join("truth.csv"))?;
    let injected: BTreeMap<&str, bool> = truth.iter().map(|r| (r["record_id"].as_str(), r["is_injected"] == "true")).collect();
    let (mut caught, mut total) = (0, 0);
    let mut by_class: BTreeMap<&str, [(f64, usize); 2]> = BTreeMap::new();
    for r in &scores {
        let inj = *injected.get(r["record_id"].as_str()).ok_or("record missing from truth.csv")?;
        let o: f64 = r["O_own"].parse().map_err(|_| "unparseable O_own")?;
        let entry = by_class.entry(r["label"].as_str()).or_default();
        entry[inj as usize].0 += o;
        entry[inj as usize].1 += 1;
        if inj {
            total += 1;
            if r["flag"] == "true" || r["quartile"] == "4" {
                caught += 1;
            }
        }
    }
    let recall = caught as f64 / total.max(1) as f64;
    let mut separated = true;
    let means: Vec<String> = by_class
        .iter()
        .map(|(class, [native, inj])| {
            let (mn, mi) = (native.0 / native.1 as f64, inj.0 / inj.1 as f64);
            separated &= mi > mn;
            format!("{class} {mi:.3} > {mn:.3}")
        })
        .collect();
    Ok((
        total > 0 && recall >= RECALL_MIN && separated,
        format!("recall {caught}/{total} = {recall:.3} (>= {RECALL_MIN}); mean O injected vs native: {}", means.join(", ")),
    ))
}

fn quartile_monotonicity() -> Outcome {
    let dir = synthetic_run()?;
    let a = read_json(&dir.join("analysis.json"))?;
    let classes = a["report"]["classes"].as_array().ok_or("analysis.json lacks classes")?;
    let mut all = !classes.is_empty();
    let lines: Vec<String> = classes
        .iter()
        .map(|c| {
            let medians: Vec<f64> = c["quartiles"]
                .as_array()
                .map(|qs| qs.iter().map(|q| q["r_squared"]["median"].as_f64().unwrap_or(f64::NAN)).collect())
                .unwrap_or_default();
            let strict = medians.len() == 4 && medians.windows(2).all(|w| w[0] > w[1]);
            all &= strict;
            let m: Vec<String> = medians.iter().map(|v| format!("{v:.3}")).collect();
            format!("{} [{}]", c["name"].as_str().unwrap_or("?"), m.join(" > "))
        })
        .collect();
    Ok((all, format!("median R^2 Q1..Q4: {}", lines.join("; "))))
}

// ---------------------------------------------------------------------------

fn prop<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<String, String> {
    let config = PropConfig { cases: PROP_CASES, failure_persistence: None, ..PropConfig::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map(|()| name.to_string()).map_err(|e| format!("{name}: {e}"))
}

fn random_proximity(n: usize, values: &[f64]) -> ProximityMatrix {
    let mut dense = vec![1.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            dense[i * n + j] = values[k % values.len()];
            dense[j * n + i] = values[k % values.len()];
            k += 1;
        }
    }
    ProximityMatrix::from_dense(n, &dense)
}

fn close(a: f64, b: f64, rtol: f64) -> bool {
    a == b || (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1.0)
}

fn invariants() -> Outcome {
    let results = [
        prop("proximity symmetric, in [0,1], unit diagonal", (3usize..40, 0u64..u64::MAX, 1usize..15), |(n, seed, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = gaussian_dataset(&mut rng, n.max(4));
            let f = fit_forest(&d, &ForestParams { n_trees: t, seed, ..Default::default() }).unwrap();
            let n = d.n_records();
            for kind in [ProximityKind::Original, ProximityKind::Oob, ProximityKind::Gap] {
                let m = compute(&f, &d, kind).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((0.0..=1.0).contains(&m.get(i, j)));
                        prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
                    }
                    if kind == ProximityKind::Original {
                        prop_assert_eq!(m.get(i, i), 1.0);
                    }
                }
            }
            Ok(())
        }),
        prop(
            "in-class median of O is zero",
            (6usize..30, prop::collection::vec(0.01f64..1.0, 20..60), prop_oneof![Just(Deviation::Median), Just(Deviation::Mean)]),
            |(n, values, deviation)| {
                let p = random_proximity(n, &values);
                let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
                let s = OutlierScores::compute(&p, &labels, 3, OutlierConfig { deviation, ..Default::default() }).unwrap();
                for j in 0..3 {
                    let own: Vec<f64> = (0..n).filter(|&i| labels[i] == j).map(|i| s.measure(i, j)).collect();
                    prop_assert!(median(&own).abs() <= MEDIAN_ZERO_TOL);
                }
                Ok(())
            },
        ),
        prop(
            "standardization invariant to scale and translation",
            (prop::collection::vec(0.1f64..100.0, 3..40), 0.01f64..100.0, -50.0f64..50.0, 0.1f64..100.0),
            |(raw, a, b, foreign)| {
                let moved: Vec<f64> = raw.iter().map(|r| a * r + b).collect();
                for deviation in [Deviation::Median, Deviation::Mean] {
                    let base = standardize_members(&raw, deviation);
                    let after = standardize_members(&moved, deviation);
                    for (x, y) in base.iter().zip(&after) {
                        prop_assert!(close(*x, *y, INVARIANCE_RTOL), "{} vs {}", x, y);
                    }
                    let fx = standardize_foreign(&raw, foreign, deviation);
                    let fy = standardize_foreign(&moved, a * foreign + b, deviation);
                    prop_assert!(close(fx, fy, INVARIANCE_RTOL), "{} vs {}", fx, fy);
                }
                Ok(())
            },
        ),
        prop(
            "smacof stress non-increasing",
            (3usize..16, prop::collection::vec(0.05f64..1.0, 120), 0u64..u64::MAX),
            |(n, values, seed)| {
                let mut d = vec![0.0; n * n];
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        d[i * n + j] = values[k];
                        d[j * n + i] = values[k];
                        k += 1;
                    }
                }
                let e = mds_embed_dense(n, &d, &MdsOptions { method: MdsMethod::Smacof, seed, ..Default::default() }).unwrap();
                prop_assert!(e.stress_is_monotone(), "{:?}", e.stress_trace);
                Ok(())
            },
        ),
        prop(
            "classical MDS reproduces planar distances",
            prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..25),
            |pts| {
                let n = pts.len();
                let dist = |i: usize, j: usize| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                let d: Vec<f64> = (0..n * n).map(|k| dist(k / n, k % n)).collect();
                let e = mds_embed_dense(n, &d, &MdsOptions { method: MdsMethod::Classical, ..Default::default() }).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((e.distance(i, j) - dist(i, j)).abs() <= CLASSICAL_TOL);
                    }
                }
                Ok(())
            },
        ),
        prop(
            "micro-F1 equals accuracy",
            (2usize..6, prop::collection::vec((0usize..64, 0usize..64), 2..120)),
            |(k, pairs)| {
                let y_true: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
                let y_pred: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
                let proba: Vec<Vec<f64>> = y_pred.iter().map(|&c| (0..k).map(|j| if j == c { 1.0 } else { 0.0 }).collect()).collect();
                let r = classification_report(&y_true, &y_pred, &proba, k).unwrap();
                prop_assert!((r.f1_micro - r.accuracy).abs() <= MICRO_F1_TOL);
                Ok(())
            },
        ),
        prop(
            "R^2 invariant to affine maps of x",
            (
                prop::collection::vec((-1.0f64..1.0, -0.5f64..0.5), 5..40),
                prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
                -5.0f64..5.0,
            ),
            |(xy, scale, shift)| {
                let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
                let y: Vec<f64> = xy.iter().map(|p| 0.7 * p.0 + p.1).collect();
                prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
                let moved: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
                let a = linear_regression_r2(&x, &y).unwrap().r_squared;
                let b = linear_regression_r2(&moved, &y).unwrap().r_squared;
                prop_assert!((a - b).abs() <= INVARIANCE_RTOL);
                Ok(())
            },
        ),
    ];
    let failed: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} properties x {PROP_CASES} cases", results.len())
        } else {
            failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; ")
        },
    ))
}

// ---------------------------------------------------------------------------

fn files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["iris", "synthetic"] {
        let (one, four) = (tempdir()?, tempdir()?);
        let a = args(&["run", "-c", &config_path(name)]);
        cli(one.path(), &a, Some(1))?;
        cli(four.path(), &a, Some(4))?;
        let (x, y) = (files(&one.path().join(name))?, files(&four.path().join(name))?);
        let differing: Vec<&String> = x.keys().filter(|k| y.get(*k) != x.get(*k)).collect();
        let data_files = x.keys().filter(|k| k.ends_with(".csv") || k.ends_with(".json")).count();
        let same = x.keys().eq(y.keys()) && differing.is_empty();
        pass &= same && data_files > 0;
        notes.push(if same {
            format!("{name}: {} files identical ({data_files} CSV/JSON)", x.len())
        } else {
            format!("{name}: differing {differing:?}")
        });
    }
    Ok((pass, format!("RAYON_NUM_THREADS 1 vs 4; {}", notes.join("; "))))
}

// ---------------------------------------------------------------------------

fn report(id: &str, outcome: Outcome) -> bool {
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, e));
    println!("[{}] {id:<18} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut checks: Vec<(String, Box<dyn Fn() -> Outcome>)> = Vec::new();
    for uci in &UCI {
        checks.push((format!("1 accuracy {}", uci.name), Box::new(move || classification(uci))));
    }
    checks.push(("2 oracle".into(), Box::new(oracle_equivalence)));
    checks.push(("3 measure chain".into(), Box::new(eq_chain)));
    for uci in &UCI {
        checks.push((format!("4 flags {}", uci.name), Box::new(move || outlier_counts(uci))));
    }
    checks.push(("5 injected recall".into(), Box::new(injected_recall)));
    checks.push(("6 quartile R^2".into(), Box::new(quartile_monotonicity)));
    checks.push(("7 invariants".into(), Box::new(invariants)));
    checks.push(("8 determinism".into(), Box::new(determinism)));

    let mut failed = 0;
    for (id, check) in &checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !report(id, outcome) {
            failed += 1;
        }
    }
    let elapsed = start.elapsed();
    if !report("runtime", Ok((elapsed < RUNTIME_LIMIT, format!("{:.1} s (< {} s)", elapsed.as_secs_f64(), RUNTIME_LIMIT.as_secs())))) {
        failed += 1;
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() + 1 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
