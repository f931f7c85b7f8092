//! The subcommands. Each reads its inputs from the config and the run
//! directory, writes its artifacts there, and records a manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use proxforest::analysis::{centroid_distances, quartile_r2, silhouette, QuartileR2Report};
use proxforest::data::{
    generate_synthetic, impute_zero, load_csv, stratified_split_indices, Dataset, FeatureSchema,
};
use proxforest::forest::{argmax, fit_forest, predict_proba, Forest};
use proxforest::mds::mds_embed;
use proxforest::metrics::classification_report;
use proxforest::modelsel::{grid_search, grid_search_points};
use proxforest::outlier::{fmt_measure, median, OutlierScores};
use proxforest::proximity::{compute, ProximityMatrix};
use proxforest::DistanceMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ProximityScope, RunConfig};
use crate::error::{CliError, Result};
use crate::svg;

pub mod artifacts {
    pub const MODEL: &str = "model.json";
    pub const METRICS: &str = "metrics.json";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const SPLIT: &str = "split.csv";
    pub const CV: &str = "cv.csv";
    pub const PROXIMITY: &str = "proximity.bin";
    pub const SCORES: &str = "scores.csv";
    pub const NOVELTY: &str = "novelty.csv";
    pub const OUTLIERS: &str = "outliers.json";
    pub const OUTLIERS_SVG: &str = "outliers.svg";
    pub const COORDS: &str = "coords.csv";
    pub const MDS: &str = "mds.json";
    pub const MDS_SVG: &str = "mds.svg";
    pub const ANALYSIS: &str = "analysis.json";
    pub const ANALYSIS_SVG: &str = "analysis.svg";
    pub const MANIFEST: &str = "manifest.json";
    pub const DATASET: &str = "dataset.csv";
    pub const RETURNS: &str = "returns.csv";
    pub const BENCHMARKS: &str = "benchmarks.csv";
    pub const TRUTH: &str = "truth.csv";
}

use artifacts::*;

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    /// Model path when it does not live in the run directory.
    pub model: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::Internal(anyhow::anyhow!("{}: {e}", path.display())))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::MissingInput { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Finite numbers as JSON numbers, infinities as `"inf"` / `"-inf"`.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt_measure(x))
    }
}

impl Run {
    pub fn new(cfg: RunConfig, out: PathBuf, model: Option<PathBuf>) -> Result<Run> {
        cfg.validate()?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run { cfg, out, model })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<String> = names.iter().filter(|n| !self.path(n).is_file()).map(|n| n.to_string()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::MissingArtifacts { dir: self.out.clone(), missing })
        }
    }

    fn manifest(&self, command: &str, outputs: &[&str]) -> Result<()> {
        write_json(
            &self.path(&format!("manifest_{command}.json")),
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "seed": self.cfg.seed,
                "config": self.cfg,
                "outputs": outputs,
            }),
        )
    }

    fn load(&self) -> Result<Dataset> {
        if let Some(ds) = &self.cfg.dataset {
            if !ds.path.is_file() {
                return Err(CliError::MissingInput {
                    path: ds.path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
                });
            }
            let schema = FeatureSchema::infer_from_csv(&ds.path, &ds.label, &ds.categorical)?;
            let dataset = impute_zero(&load_csv(&ds.path, &schema)?);
            return Ok(dataset);
        }
        let spec = self.cfg.synthetic.as_ref().ok_or_else(|| CliError::Config("no dataset configured".into()))?;
        Ok(generate_synthetic(spec)?.dataset)
    }

    fn split(&self, d: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
        Ok(stratified_split_indices(d, self.cfg.split.test_fraction, self.cfg.seed)?)
    }

    fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.path(MODEL))
    }

    fn load_model(&self) -> Result<Forest> {
        let path = self.model_path();
        if self.model.is_none() && !path.is_file() {
            self.require(&[MODEL])?;
        }
        Ok(Forest::from_reader(open(&path)?)?)
    }

    /// Records the proximities are computed over, in record order.
    fn scope(&self, d: &Dataset) -> Result<Dataset> {
        Ok(match self.cfg.proximity.scope {
            ProximityScope::Full => d.clone(),
            ProximityScope::Train => d.subset(&self.split(d)?.0),
        })
    }

    /// Reuses `proximity.bin` when it matches the configured kind and scope,
    /// otherwise computes and stores it.
    fn proximity(&self, scoped: &Dataset) -> Result<ProximityMatrix> {
        let path = self.path(PROXIMITY);
        if path.is_file() {
            let p = ProximityMatrix::read_binary(open(&path)?)?;
            if p.kind() == self.cfg.proximity.kind && p.n() == scoped.n_records() {
                return Ok(p);
            }
        }
        let forest = self.load_model()?;
        forest.check_schema(scoped)?;
        let p = compute(&forest, scoped, self.cfg.proximity.kind)?;
        let mut w = create(&path)?;
        p.write_binary(&mut w)?;
        w.flush()?;
        Ok(p)
    }

    fn scores(&self, p: &ProximityMatrix, scoped: &Dataset) -> Result<OutlierScores> {
        Ok(OutlierScores::compute(p, scoped.labels(), scoped.n_classes(), self.cfg.outliers.to_core())?)
    }

    pub fn synth(&self) -> Result<()> {
        let spec = self.cfg.synthetic.as_ref().ok_or_else(|| CliError::Config("synth needs a [synthetic] table".into()))?;
        let syn = generate_synthetic(spec)?;
        syn.dataset.write_csv(create(&self.path(DATASET))?)?;
        syn.write_returns_csv(create(&self.path(RETURNS))?)?;
        syn.write_benchmarks_csv(create(&self.path(BENCHMARKS))?)?;
        syn.write_truth_csv(create(&self.path(TRUTH))?)?;
        self.manifest("synth", &[DATASET, RETURNS, BENCHMARKS, TRUTH])
    }

    pub fn train(&self) -> Result<()> {
        let d = self.load()?;
        let (train_idx, test_idx) = self.split(&d)?;
        let train = d.subset(&train_idx);
        let test = d.subset(&test_idx);
        let mut params = self.cfg.forest_params();
        let mut outputs = vec![MODEL, METRICS, PREDICTIONS, SPLIT];
        let mut cv_summary = Value::Null;
        if let Some(g) = &self.cfg.grid {
            let cv = match g.budget {
                Some(b) => {
                    let grid = g.grid();
                    grid.validate()?;
                    grid_search_points(&train, &grid.strided_points(b), g.folds, self.cfg.seed, g.scoring, &params)?
                }
                None => grid_search(&train, &g.grid(), g.folds, self.cfg.seed, g.scoring, &params)?,
            };
            cv.write_csv(create(&self.path(CV))?)?;
            outputs.push(CV);
            params = cv.best_point().apply_to(&params);
            cv_summary = json!({
                "scoring": cv.scoring,
                "folds": cv.k,
                "evaluated": cv.rows.len(),
                "best": cv.best_point(),
                "best_mean": cv.rows[cv.best].mean,
                "best_std": cv.rows[cv.best].std,
            });
        }
        let forest = fit_forest(&train, &params)?;
        // proximities from an earlier model are stale now
        let _ = std::fs::remove_file(self.path(PROXIMITY));
        let mut w = create(&self.path(MODEL))?;
        forest.to_writer(&mut w)?;
        w.flush()?;

        let proba = predict_proba(&forest, &test)?;
        let pred: Vec<usize> = proba.iter().map(|r| argmax(r)).collect();
        let report = classification_report(test.labels(), &pred, &proba, d.n_classes())?;
        write_json(
            &self.path(METRICS),
            &json!({
                "n_records": d.n_records(),
                "n_train": train.n_records(),
                "n_test": test.n_records(),
                "classes": d.classes(),
                "params": params,
                "cv": cv_summary,
                "misclassified_count": report.misclassified(),
                "report": report,
            }),
        )?;

        let mut wtr = csv::Writer::from_writer(create(&self.path(PREDICTIONS))?);
        let mut header = vec!["record_id".to_string(), "label".into(), "predicted".into()];
        header.extend(d.classes().iter().map(|c| format!("p_{c}")));
        wtr.write_record(&header)?;
        for (k, row) in proba.iter().enumerate() {
            let mut rec = vec![
                test.ids()[k].to_string(),
                d.classes()[test.labels()[k]].clone(),
                d.classes()[pred[k]].clone(),
            ];
            rec.extend(row.iter().map(|p| format!("{p}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;

        let in_test: BTreeSet<usize> = test_idx.iter().copied().collect();
        let mut wtr = csv::Writer::from_writer(create(&self.path(SPLIT))?);
        wtr.write_record(["record_id", "split"])?;
        for i in 0..d.n_records() {
            wtr.write_record([d.ids()[i].to_string().as_str(), if in_test.contains(&i) { "test" } else { "train" }])?;
        }
        wtr.flush()?;
        self.manifest("train", &outputs)
    }

    pub fn score(&self, csv_cutoff: Option<f64>) -> Result<()> {
        let d = self.load()?;
        let scoped = self.scope(&d)?;
        let _ = std::fs::remove_file(self.path(PROXIMITY));
        let p = self.proximity(&scoped)?;
        let mut outputs = vec![PROXIMITY];
        if let Some(cutoff) = csv_cutoff {
            p.write_csv(create(&self.path("proximity.csv"))?, scoped.ids(), cutoff)?;
            outputs.push("proximity.csv");
        }
        self.manifest("score", &outputs)
    }

    pub fn outliers(&self) -> Result<()> {
        let d = self.load()?;
        let scoped = self.scope(&d)?;
        let p = self.proximity(&scoped)?;
        let s = self.scores(&p, &scoped)?;
        let classes = scoped.classes();
        s.write_csv(create(&self.path(SCORES))?, scoped.ids(), classes)?;

        let mut wtr = csv::Writer::from_writer(create(&self.path(NOVELTY))?);
        let mut header = vec!["record_id".to_string(), "label".into(), "is_novelty".into()];
        header.extend(classes.iter().map(|c| format!("O_{c}")));
        header.extend(classes.iter().map(|c| format!("above_{c}")));
        wtr.write_record(&header)?;
        for i in (0..s.n).filter(|&i| s.flags[i]) {
            let prof = s.profile(i);
            let mut rec = vec![scoped.ids()[i].to_string(), classes[s.labels[i]].clone(), prof.is_novelty.to_string()];
            rec.extend(prof.measures.iter().map(|&m| fmt_measure(m)));
            rec.extend(prof.above.iter().map(|a| a.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;

        let per_class: Vec<Value> = (0..s.n_classes)
            .map(|j| {
                json!({
                    "class": classes[j],
                    "count": s.labels.iter().filter(|&&l| l == j).count(),
                    "median_raw": num(s.med[j]),
                    "deviation": num(s.dev[j]),
                    "threshold": num(s.threshold[j]),
                    "flagged": (0..s.n).filter(|&i| s.labels[i] == j && s.flags[i]).count(),
                    "small_class": s.small_class[j],
                })
            })
            .collect();
        let novelties: Vec<usize> = s.novelties().iter().map(|&i| scoped.ids()[i]).collect();
        write_json(
            &self.path(OUTLIERS),
            &json!({
                "proximity_kind": self.cfg.proximity.kind,
                "scope": self.cfg.proximity.scope,
                "n_records": s.n,
                "k_sigma": num(self.cfg.outliers.k_sigma),
                "anchor": self.cfg.outliers.anchor,
                "deviation": self.cfg.outliers.deviation,
                "outlier_count": s.flagged_count(),
                "novelty_count": novelties.len(),
                "novelties": novelties,
                "classes": per_class,
            }),
        )?;

        let points: Vec<svg::ScatterPoint> = (0..s.n)
            .map(|i| svg::ScatterPoint {
                record_id: scoped.ids()[i],
                class: s.labels[i],
                label: &classes[s.labels[i]],
                measure: s.own(i),
                flag: s.flags[i],
            })
            .collect();
        std::fs::write(self.path(OUTLIERS_SVG), svg::outlier_scatter(&points, classes, &s.threshold))?;
        self.manifest("outliers", &[PROXIMITY, SCORES, NOVELTY, OUTLIERS, OUTLIERS_SVG])
    }

    pub fn mds(&self) -> Result<()> {
        let d = self.load()?;
        let scoped = self.scope(&d)?;
        let p = self.proximity(&scoped)?;
        let s = self.scores(&p, &scoped)?;
        let classes = scoped.classes();
        let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
        let selected: BTreeSet<usize> = if self.cfg.mds.classes.is_empty() {
            (0..classes.len()).collect()
        } else {
            self.cfg
                .mds
                .classes
                .iter()
                .map(|c| index.get(c.as_str()).copied().ok_or_else(|| CliError::UnknownClass(c.clone())))
                .collect::<Result<_>>()?
        };
        let positions: Vec<usize> = (0..scoped.n_records()).filter(|&i| selected.contains(&scoped.labels()[i])).collect();
        let dm = DistanceMatrix::from_proximity(&p.subset(&positions));
        let emb = mds_embed(&dm, &self.cfg.mds_options())?;

        let mut wtr = csv::Writer::from_writer(create(&self.path(COORDS))?);
        wtr.write_record(["record_id", "x", "y", "label", "outlier_flag"])?;
        for (k, &i) in positions.iter().enumerate() {
            wtr.write_record([
                scoped.ids()[i].to_string(),
                format!("{}", emb.coords[k][0]),
                format!("{}", emb.coords[k][1]),
                classes[scoped.labels()[i]].clone(),
                s.flags[i].to_string(),
            ])?;
        }
        wtr.flush()?;

        let labels: Vec<usize> = positions.iter().map(|&i| scoped.labels()[i]).collect();
        let flags: Vec<bool> = positions.iter().map(|&i| s.flags[i]).collect();
        let dist = centroid_distances(&emb.coords, &labels);
        let mut far = 0;
        let mut flagged = 0;
        for (k, &f) in flags.iter().enumerate() {
            if !f {
                continue;
            }
            flagged += 1;
            let class_d: Vec<f64> = (0..labels.len()).filter(|&m| labels[m] == labels[k]).map(|m| dist[m]).collect();
            if dist[k] > median(&class_d) {
                far += 1;
            }
        }
        write_json(
            &self.path(MDS),
            &json!({
                "method": emb.method,
                "seed": emb.seed,
                "stress": num(emb.stress),
                "iterations": emb.stress_trace.len().saturating_sub(1),
                "classes": selected.iter().map(|&j| &classes[j]).collect::<Vec<_>>(),
                "n_points": positions.len(),
                "silhouette": num(silhouette(&emb.coords, &labels)),
                "flagged": flagged,
                "flagged_beyond_median_centroid_distance": far,
            }),
        )?;
        let points: Vec<svg::EmbeddedPoint> = positions
            .iter()
            .enumerate()
            .map(|(k, &i)| svg::EmbeddedPoint {
                record_id: scoped.ids()[i],
                class: labels[k],
                label: &classes[labels[k]],
                xy: emb.coords[k],
                flag: flags[k],
            })
            .collect();
        std::fs::write(self.path(MDS_SVG), svg::embedding_scatter(&points, "MDS of 1 - proximity"))?;
        self.manifest("mds", &[COORDS, MDS, MDS_SVG])
    }

    pub fn can_analyze(&self) -> bool {
        self.cfg.synthetic.is_some() || (self.cfg.analysis.returns.is_some() && self.cfg.analysis.benchmarks.is_some())
    }

    pub fn analyze(&self) -> Result<()> {
        self.require(&[SCORES])?;
        let table = ScoresTable::read(&self.path(SCORES))?;
        let (returns, benchmarks, source) = match (&self.cfg.analysis.returns, &self.cfg.analysis.benchmarks) {
            (Some(r), Some(b)) => (read_series(r, "record_id")?, read_series(b, "class")?, json!({"returns": r, "benchmarks": b})),
            (None, None) => {
                let spec = self.cfg.synthetic.as_ref().ok_or_else(|| {
                    CliError::Config("analyze needs analysis.returns and analysis.benchmarks, or a [synthetic] table".into())
                })?;
                let syn = generate_synthetic(spec)?;
                let returns = syn.dataset.ids().iter().map(|id| id.to_string()).zip(syn.returns.iter().cloned()).collect();
                let benchmarks = syn.dataset.classes().iter().cloned().zip(syn.benchmarks.iter().cloned()).collect();
                (returns, benchmarks, json!("synthetic"))
            }
            _ => return Err(CliError::Config("analysis.returns and analysis.benchmarks must be given together".into())),
        };
        let record_returns: Vec<Option<&[f64]>> =
            table.record_ids.iter().map(|id| returns.get(&id.to_string()).map(Vec::as_slice)).collect();
        let class_bench: Vec<Option<&[f64]>> = table.classes.iter().map(|c| benchmarks.get(c).map(Vec::as_slice)).collect();
        let counts: Vec<usize> = (0..table.classes.len()).map(|j| table.labels.iter().filter(|&&l| l == j).count()).collect();
        let small: Vec<bool> = counts.iter().map(|&c| c < 4).collect();
        let report: QuartileR2Report = quartile_r2(&table.labels, &table.quartiles, &small, &table.classes, &record_returns, &class_bench)
            .map_err(|e| match e {
                proxforest::analysis::AnalysisError::MissingReturns(pos) => {
                    CliError::InvalidInput(format!("no return series for record {}", table.record_ids[pos]))
                }
                other => other.into(),
            })?;
        for c in report.classes.iter().filter(|c| c.skipped) {
            eprintln!("warning: class `{}` has fewer than 4 records; quartile analysis skipped", c.name);
        }
        write_json(&self.path(ANALYSIS), &json!({ "source": source, "report": report }))?;
        std::fs::write(self.path(ANALYSIS_SVG), svg::quartile_boxes(&report))?;
        self.manifest("analyze", &[ANALYSIS, ANALYSIS_SVG])
    }

    pub fn report(&self) -> Result<()> {
        self.require(&[METRICS, PREDICTIONS, SCORES])?;
        let metrics: Value = serde_json::from_reader(open(&self.path(METRICS))?)?;
        let misclassified = read_misclassified(&self.path(PREDICTIONS))?;
        let table = ScoresTable::read(&self.path(SCORES))?;
        let outliers: BTreeSet<usize> =
            table.record_ids.iter().zip(&table.flags).filter(|(_, &f)| f).map(|(&id, _)| id).collect();
        let overlap: Vec<usize> = misclassified.intersection(&outliers).copied().collect();
        let report = &metrics["report"];
        let optional = |name: &str| -> Result<Value> {
            if self.path(name).is_file() {
                Ok(serde_json::from_reader(open(&self.path(name))?)?)
            } else {
                Ok(Value::Null)
            }
        };
        let mds = optional(MDS)?;
        let analysis = optional(ANALYSIS)?;
        let present: Vec<&str> = [
            MODEL, METRICS, PREDICTIONS, SPLIT, CV, PROXIMITY, SCORES, NOVELTY, OUTLIERS, OUTLIERS_SVG, COORDS, MDS, MDS_SVG,
            ANALYSIS, ANALYSIS_SVG,
        ]
        .into_iter()
        .filter(|n| self.path(n).is_file())
        .collect();
        let analysis_summary = if analysis.is_null() {
            Value::Null
        } else {
            let classes = analysis["report"]["classes"].as_array().cloned().unwrap_or_default();
            json!({
                "decreasing_classes": analysis["report"]["decreasing_classes"],
                "analysed_classes": analysis["report"]["analysed_classes"],
                "median_r2_by_quartile": classes
                    .iter()
                    .map(|c| {
                        let medians: Vec<Value> = c["quartiles"]
                            .as_array()
                            .map(|qs| qs.iter().map(|q| q["r_squared"]["median"].clone()).collect())
                            .unwrap_or_default();
                        (c["name"].as_str().unwrap_or_default().to_string(), Value::from(medians))
                    })
                    .collect::<BTreeMap<_, _>>(),
            })
        };
        write_json(
            &self.path(MANIFEST),
            &json!({
                "version": env!("CARGO_PKG_VERSION"),
                "seed": self.cfg.seed,
                "config": self.cfg,
                "classification": {
                    "n_test": metrics["n_test"],
                    "accuracy": report["accuracy"],
                    "f1_micro": report["f1_micro"],
                    "f1_macro": report["f1_macro"],
                    "f1_weighted": report["f1_weighted"],
                    "auc_micro": report["auc_micro"],
                    "auc_macro": report["auc_macro"],
                    "params": metrics["params"],
                    "cv": metrics["cv"],
                },
                "misclassified_count": misclassified.len(),
                "outlier_count": outliers.len(),
                "overlap": overlap.len(),
                "misclassified_ids": misclassified,
                "outlier_ids": outliers,
                "overlap_ids": overlap,
                "mds": mds,
                "analysis": analysis_summary,
                "artifacts": present,
            }),
        )
    }

    /// Every step in order; `analyze` only when a returns panel is available.
    pub fn run_all(&self) -> Result<()> {
        if self.cfg.synthetic.is_some() {
            self.synth()?;
        }
        self.train()?;
        self.score(None)?;
        self.outliers()?;
        self.mds()?;
        if self.can_analyze() {
            self.analyze()?;
        }
        self.report()
    }
}

/// The columns of `scores.csv` the later steps need.
struct ScoresTable {
    record_ids: Vec<usize>,
    classes: Vec<String>,
    labels: Vec<usize>,
    flags: Vec<bool>,
    quartiles: Vec<u8>,
}

impl ScoresTable {
    fn read(path: &Path) -> Result<ScoresTable> {
        let bad = |m: String| CliError::InvalidInput(format!("{}: {m}", path.display()));
        let mut rdr = csv::Reader::from_reader(open(path)?);
        let headers = rdr.headers()?.clone();
        let classes: Vec<String> = headers.iter().filter_map(|h| h.strip_prefix("O_")).filter(|c| *c != "own").map(String::from).collect();
        let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name}")));
        let (id_c, label_c, flag_c, q_c) = (col("record_id")?, col("label")?, col("flag")?, col("quartile")?);
        let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
        let mut t = ScoresTable { record_ids: vec![], classes: classes.clone(), labels: vec![], flags: vec![], quartiles: vec![] };
        for rec in rdr.records() {
            let rec = rec?;
            t.record_ids.push(rec[id_c].parse().map_err(|_| bad(format!("bad record_id {}", &rec[id_c])))?);
            t.labels.push(*index.get(&rec[label_c]).ok_or_else(|| bad(format!("label {} has no O_ column", &rec[label_c])))?);
            t.flags.push(rec[flag_c].parse().map_err(|_| bad(format!("bad flag {}", &rec[flag_c])))?);
            t.quartiles.push(rec[q_c].parse().map_err(|_| bad(format!("bad quartile {}", &rec[q_c])))?);
        }
        Ok(t)
    }
}

fn read_misclassified(path: &Path) -> Result<BTreeSet<usize>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec[1] != rec[2] {
            out.insert(rec[0].parse().map_err(|_| CliError::InvalidInput(format!("{}: bad record_id", path.display())))?);
        }
    }
    Ok(out)
}

/// Reads a long-format panel `<key>,period,return` into per-key series
/// ordered by period.
fn read_series(path: &Path, key: &str) -> Result<HashMap<String, Vec<f64>>> {
    let bad = |m: String| CliError::InvalidInput(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name}")));
    let (k_c, p_c, r_c) = (col(key)?, col("period")?, col("return")?);
    let mut by_key: HashMap<String, BTreeMap<i64, f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let period: i64 = rec[p_c].trim().parse().map_err(|_| bad(format!("bad period {}", &rec[p_c])))?;
        let value: f64 = rec[r_c].trim().parse().map_err(|_| bad(format!("bad return {}", &rec[r_c])))?;
        by_key.entry(rec[k_c].trim().to_string()).or_default().insert(period, value);
    }
    Ok(by_key.into_iter().map(|(k, s)| (k, s.into_values().collect())).collect())
}
