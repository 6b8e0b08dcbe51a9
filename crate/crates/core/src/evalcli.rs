//! Orchestration behind the `convex-shield` binary: generate benchmark data,
//! train, verify, export plot data and tabulate results. Every command is a
//! function of its resolved [`ExperimentConfig`] and the files it reads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::benchmarks::caslite::{self, APrev, CasLiteGrid, H_GRID_STRIDE, H_MAX, TAU_MAX, V_UNIT_FPS};
use crate::benchmarks::{load_dataset, save_dataset, synthetic, BenchmarkKind, SYNTHETIC_1D_SAMPLES, SYNTHETIC_2D_SAMPLES};
use crate::constraints::ConstraintSet;
use crate::error::{from_json_str, Error, Result};
use crate::safepredictor::{build_safe_predictor, build_standard_predictor, ModelKind, SafePredictor};
use crate::training::{save_metrics_csv, split_dataset, train, Checkpoint, Dataset, EpochMetrics, TrainConfig};
use crate::verifier::{self, Accuracy, TableRun, ViolationReport};

pub const THREADS_ENV: &str = "CONVEX_SHIELD_THREADS";
pub const TRAIN_FRACTION: f64 = 0.8;
pub const DATASET_FILE: &str = "dataset.csv";
pub const CONSTRAINTS_FILE: &str = "constraints.json";
/// Rate at which the CAS-lite proximity slice is exported (ft/s), before
/// clamping to the grid.
pub const SLICE_RATE_FPS: f64 = -180.0;

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkKind,
    pub a_prev: Option<APrev>,
    pub model: ModelKind,
    pub train: TrainConfig,
    /// Points per input dimension for verification and export grids;
    /// `None` picks a per-command default.
    pub probe_resolution: Option<usize>,
    /// Verify every this many epochs during training (epoch 0 and the last
    /// epoch are always verified).
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
}

/// Config file contents. Every field is optional; `train` is merged over the
/// benchmark's preset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    benchmark: Option<BenchmarkKind>,
    a_prev: Option<APrev>,
    model: Option<ModelKind>,
    train: Option<serde_json::Map<String, serde_json::Value>>,
    probe_resolution: Option<usize>,
    checkpoint_every: Option<usize>,
    output_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub benchmark: Option<BenchmarkKind>,
    pub a_prev: Option<APrev>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub probe_resolution: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

fn default_checkpoint_every(kind: BenchmarkKind) -> usize {
    match kind {
        BenchmarkKind::Caslite => 10,
        _ => 1,
    }
}

impl ExperimentConfig {
    /// Preset for a benchmark with everything else at its default.
    pub fn preset(benchmark: BenchmarkKind, a_prev: Option<APrev>) -> Result<Self> {
        let cfg = Self {
            benchmark,
            a_prev,
            model: ModelKind::Safe,
            train: benchmark.train_config(),
            probe_resolution: None,
            checkpoint_every: default_checkpoint_every(benchmark),
            output_dir: PathBuf::from("out"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(config_text: Option<&str>, ov: &Overrides) -> Result<Self> {
        let file: ConfigFile = match config_text {
            Some(text) => from_json_str(text)?,
            None => ConfigFile::default(),
        };
        let benchmark = ov
            .benchmark
            .or(file.benchmark)
            .ok_or_else(|| Error::Usage("--benchmark is required (or `benchmark` in the config file)".into()))?;
        let mut train = benchmark.train_config();
        if let Some(fields) = file.train {
            let mut merged = serde_json::to_value(&train)?;
            let obj = merged.as_object_mut().expect("TrainConfig serializes to an object");
            obj.extend(fields);
            train = from_json_str(&merged.to_string()).map_err(|e| match e {
                Error::Parse { path, message } => Error::Parse {
                    path: format!("train.{path}"),
                    message,
                },
                other => other,
            })?;
        }
        if let Some(seed) = ov.seed {
            train.seed = seed;
        }
        if let Some(epochs) = ov.epochs {
            train.epochs = epochs;
        }
        let cfg = Self {
            benchmark,
            a_prev: ov.a_prev.or(file.a_prev),
            model: ov.model.or(file.model).unwrap_or(ModelKind::Safe),
            train,
            probe_resolution: ov.probe_resolution.or(file.probe_resolution),
            checkpoint_every: file.checkpoint_every.unwrap_or(default_checkpoint_every(benchmark)),
            output_dir: ov
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.benchmark, self.a_prev) {
            (BenchmarkKind::Caslite, None) => {
                return Err(Error::Usage("caslite requires --a-prev (coc or cl1500)".into()));
            }
            (BenchmarkKind::Caslite, Some(_)) | (_, None) => {}
            (other, Some(_)) => {
                return Err(Error::Usage(format!("--a-prev only applies to caslite, not {other}")));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Usage("checkpoint_every must be at least 1".into()));
        }
        if self.probe_resolution == Some(0) {
            return Err(Error::Usage("--probe-resolution must be at least 1".into()));
        }
        self.train.validate()
    }

    /// Dataset label used in reports, e.g. `caslite-coc`.
    pub fn dataset_label(&self) -> String {
        match self.a_prev {
            Some(a) => format!("{}-{}", self.benchmark, a_prev_name(a)),
            None => self.benchmark.to_string(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn model_path(&self) -> PathBuf {
        self.path(&format!("model_{}.json", kind_name(self.model)))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.path(&format!("metrics_{}.csv", kind_name(self.model)))
    }
}

fn a_prev_name(a: APrev) -> &'static str {
    match a {
        APrev::Coc => "coc",
        APrev::Cl1500 => "cl1500",
    }
}

pub fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Standard => "standard",
        ModelKind::Safe => "safe",
    }
}

fn network_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Standard => "Standard",
        ModelKind::Safe => "Safe",
    }
}

/// Caps the global worker pool at the value of `CONVEX_SHIELD_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot configure thread pool: {e}")))
}

/// Git-style object hash: SHA-256 over `blob <len>\0` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path)?))
}

fn hash_files(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, file_hash(p)?))
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display())))
    })
}

/// Benchmark data and its constraints, plus a description of how it was
/// sampled.
pub fn generate(cfg: &ExperimentConfig) -> Result<(Dataset, ConstraintSet, serde_json::Value)> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    match cfg.benchmark {
        BenchmarkKind::Synthetic1d => {
            let (ds, set) = synthetic::gen_synthetic_1d(SYNTHETIC_1D_SAMPLES, seed)?;
            let spec = json!({"samples": SYNTHETIC_1D_SAMPLES, "x": "uniform [-2, 2]", "noise_std": 0.05});
            Ok((ds, set, spec))
        }
        BenchmarkKind::Synthetic2d => {
            let (ds, set) = synthetic::gen_synthetic_2d(SYNTHETIC_2D_SAMPLES, seed)?;
            let spec = json!({"samples": SYNTHETIC_2D_SAMPLES, "x": "uniform [0, 1]^2", "noise_std": 0.02});
            Ok((ds, set, spec))
        }
        BenchmarkKind::Caslite => {
            let a_prev = cfg.a_prev.expect("validated");
            let tables = caslite::caslite_solve(&Default::default());
            let set = caslite::caslite_constraints(&tables, &caslite::caslite_unsafeable(&tables))?;
            let ds = caslite::caslite_dataset(&tables, a_prev)?;
            let g: &CasLiteGrid = &tables.grid;
            let spec = json!({
                "a_prev": a_prev_name(a_prev),
                "v_fps": {"min": g.v_fps[0], "max": g.v_fps[g.v_fps.len() - 1], "count": g.v_fps.len()},
                "h_ft": {"min": g.h_ft[0], "max": g.h_ft[g.h_ft.len() - 1], "count": g.h_ft.len()},
                "tau": {"min": 0, "max": TAU_MAX, "count": g.tau.len()},
                "cells": g.cells(),
                "rewards": tables.params,
            });
            Ok((ds, set, spec))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub dataset: PathBuf,
    pub constraints: PathBuf,
    pub provenance: PathBuf,
    pub rows: usize,
}

pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<GenOutput> {
    let (ds, set, grid_spec) = generate(cfg)?;
    create_dir(&cfg.output_dir)?;
    let dataset = cfg.path(DATASET_FILE);
    let constraints = cfg.path(CONSTRAINTS_FILE);
    save_dataset(&dataset, &ds, cfg.benchmark)?;
    set.save(&constraints)?;
    let provenance = cfg.path("provenance_gen.json");
    write_json(
        &provenance,
        &json!({
            "command": "gen",
            "version": env!("CARGO_PKG_VERSION"),
            "benchmark": cfg.benchmark,
            "a_prev": cfg.a_prev,
            "seed": cfg.train.seed,
            "grid_spec": grid_spec,
            "constraint_spec_hash": set.content_hash()?,
            "files": hash_files(&[&dataset, &constraints])?,
        }),
    )?;
    log::info!("wrote {} rows to {}", ds.len(), dataset.display());
    Ok(GenOutput {
        dataset,
        constraints,
        provenance,
        rows: ds.len(),
    })
}

/// Probes verified at training checkpoints. CAS-lite uses its grid cells and
/// region boundaries; the synthetic benchmarks use the verification grid.
pub fn checkpoint_probes(cfg: &ExperimentConfig, set: &ConstraintSet, ds: &Dataset) -> (Array2<f64>, String) {
    match (cfg.benchmark, cfg.probe_resolution) {
        (BenchmarkKind::Caslite, None) => {
            let boundary = verifier::region_boundary_points(set);
            let all = ndarray::concatenate(ndarray::Axis(0), &[ds.inputs.view(), boundary.view()]).expect("same width");
            let spec = format!("{} dataset inputs + {} region boundary points", ds.len(), boundary.nrows());
            (all, spec)
        }
        _ => verification_probes(cfg, set),
    }
}

pub fn verification_probes(cfg: &ExperimentConfig, set: &ConstraintSet) -> (Array2<f64>, String) {
    let res = cfg
        .probe_resolution
        .unwrap_or_else(|| verifier::default_resolution(set.input_dim()));
    verifier::default_probes(set, res)
}

fn is_checkpoint(cfg: &ExperimentConfig, epoch: usize) -> bool {
    epoch == 0 || epoch == cfg.train.epochs || epoch % cfg.checkpoint_every == 0
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: PathBuf,
    pub metrics: PathBuf,
    pub provenance: PathBuf,
    pub history: Vec<EpochMetrics>,
    pub test_accuracy: Accuracy,
    /// Largest violation count over all checkpoints.
    pub max_violations: u64,
    pub kind: ModelKind,
}

impl TrainOutput {
    /// A safe model should never violate; doing so indicates a bug.
    pub fn safety_failure(&self) -> bool {
        self.kind == ModelKind::Safe && self.max_violations > 0
    }
}

pub fn load_inputs(cfg: &ExperimentConfig, data: Option<&Path>, constraints: Option<&Path>) -> Result<(Dataset, ConstraintSet)> {
    let set = ConstraintSet::load(&constraints.map_or_else(|| cfg.path(CONSTRAINTS_FILE), Path::to_path_buf))?;
    let ds = load_dataset(&data.map_or_else(|| cfg.path(DATASET_FILE), Path::to_path_buf), set.input_dim())?;
    if ds.output_dim() != set.output_dim {
        return Err(Error::DimensionMismatch {
            expected: set.output_dim,
            got: ds.output_dim(),
        });
    }
    Ok((ds, set))
}

pub fn build_model(kind: ModelKind, benchmark: BenchmarkKind, set: &ConstraintSet, seed: u64) -> Result<SafePredictor> {
    let arch = benchmark.architecture();
    match kind {
        ModelKind::Safe => build_safe_predictor(set, &arch, seed),
        ModelKind::Standard => build_standard_predictor(set, &arch, seed),
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, data: Option<&Path>, constraints: Option<&Path>) -> Result<TrainOutput> {
    cfg.validate()?;
    let (ds, set) = load_inputs(cfg, data, constraints)?;
    let (train_ds, test_ds) = split_dataset(&ds, TRAIN_FRACTION, cfg.train.seed)?;
    let mut model = build_model(cfg.model, cfg.benchmark, &set, cfg.train.seed)?;
    let (probes, probe_spec) = checkpoint_probes(cfg, &set, &ds);
    let classification = cfg.benchmark.is_classification();

    let history = train(&mut model, &train_ds, &cfg.train, |epoch, m| {
        if !is_checkpoint(cfg, epoch) {
            return Ok(Checkpoint::default());
        }
        let report = verifier::check_violations(m, &set, probes.view(), &probe_spec)?;
        let acc = verifier::accuracy(m, &train_ds, classification)?;
        if report.violations > 0 {
            let level = if m.kind() == ModelKind::Safe { log::Level::Error } else { log::Level::Info };
            log::log!(level, "epoch {epoch}: {} of {} probes violate", report.violations, report.total_probes);
        }
        Ok(Checkpoint {
            accuracy: Some(acc.value()),
            violations: Some((report.violations, report.total_probes)),
        })
    })?;

    create_dir(&cfg.output_dir)?;
    let model_path = cfg.model_path();
    let metrics_path = cfg.metrics_path();
    model.save(&model_path)?;
    save_metrics_csv(&metrics_path, &history)?;
    let test_accuracy = verifier::accuracy(&model, &test_ds, classification)?;
    let max_violations = history
        .iter()
        .filter_map(|m| m.checkpoint.violations.map(|v| v.0))
        .max()
        .unwrap_or(0);
    let provenance = cfg.path(&format!("provenance_train_{}.json", kind_name(cfg.model)));
    let inputs_used = [
        data.map_or_else(|| cfg.path(DATASET_FILE), Path::to_path_buf),
        constraints.map_or_else(|| cfg.path(CONSTRAINTS_FILE), Path::to_path_buf),
    ];
    write_json(
        &provenance,
        &json!({
            "command": "train",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "train_rows": train_ds.len(),
            "test_rows": test_ds.len(),
            "probe_spec": probe_spec,
            "final_loss": history.last().map(|m| m.loss),
            "test_accuracy": test_accuracy,
            "max_checkpoint_violations": max_violations,
            "constraint_spec_hash": model.constraint_hash(),
            "inputs": hash_files(&[&inputs_used[0], &inputs_used[1]])?,
            "files": hash_files(&[&model_path, &metrics_path])?,
        }),
    )?;
    Ok(TrainOutput {
        model: model_path,
        metrics: metrics_path,
        provenance,
        history,
        test_accuracy,
        max_violations,
        kind: cfg.model,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOutput {
    pub kind: ModelKind,
    pub report: ViolationReport,
    pub run: Option<TableRun>,
    pub report_path: PathBuf,
}

impl VerifyOutput {
    pub fn safety_failure(&self) -> bool {
        self.kind == ModelKind::Safe && self.report.violations > 0
    }
}

/// Verifies a saved model. Refuses to run when the model was built against a
/// different constraint set. When the experiment directory holds the
/// dataset, test-split accuracy is recorded for `report`.
pub fn cmd_verify(cfg: &ExperimentConfig, model_file: Option<&Path>, constraints: Option<&Path>) -> Result<VerifyOutput> {
    let set = ConstraintSet::load(&constraints.map_or_else(|| cfg.path(CONSTRAINTS_FILE), Path::to_path_buf))?;
    let model = SafePredictor::load(&model_file.map_or_else(|| cfg.model_path(), Path::to_path_buf), &set)?;
    let (probes, probe_spec) = verification_probes(cfg, &set);
    let report = verifier::check_violations(&model, &set, probes.view(), &probe_spec)?;
    create_dir(&cfg.output_dir)?;
    let kind = model.kind();
    let report_path = cfg.path(&format!("report_{}.json", kind_name(kind)));
    write_json(&report_path, &report)?;

    let data = cfg.path(DATASET_FILE);
    let run = if data.exists() {
        let ds = load_dataset(&data, set.input_dim())?;
        let (_, test) = split_dataset(&ds, TRAIN_FRACTION, cfg.train.seed)?;
        let run = TableRun {
            network: network_label(kind).into(),
            dataset: cfg.dataset_label(),
            accuracy: verifier::accuracy(&model, &test, cfg.benchmark.is_classification())?,
            report: report.clone(),
        };
        write_json(&cfg.path(&format!("run_{}.json", kind_name(kind))), &run)?;
        Some(run)
    } else {
        None
    };
    Ok(VerifyOutput {
        kind,
        report,
        run,
        report_path,
    })
}

fn write_table_csv(path: &Path, header: &[String], rows: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows.outer_iter() {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

fn detailed_columns(model: &SafePredictor, xs: &Array2<f64>, input_names: &[String]) -> Result<(Vec<String>, Array2<f64>)> {
    let det = model.evaluate_detailed(xs.view())?;
    let m = model.output_dim();
    let suffix = |j: usize| if m == 1 { String::new() } else { format!("[{j}]") };
    let mut header: Vec<String> = input_names.to_vec();
    let mut cols: Vec<ndarray::ArrayView1<'_, f64>> = xs.columns().into_iter().collect();
    for j in 0..m {
        header.push(format!("F{}", suffix(j)));
        cols.push(det.output.column(j));
    }
    for (h, g) in model.heads().iter().zip(&det.heads) {
        for j in 0..m {
            header.push(format!("G_{}{}", h.key, suffix(j)));
            cols.push(g.column(j));
        }
    }
    for (b, h) in model.heads().iter().enumerate() {
        header.push(format!("w_{}", h.key));
        cols.push(det.weights.column(b));
    }
    for (i, c) in model.constraints().constraints.iter().enumerate() {
        header.push(format!("proximity_{}", c.name));
        cols.push(det.proximities.column(i));
    }
    let table = ndarray::stack(ndarray::Axis(1), &cols).map_err(|e| Error::Spec(e.to_string()))?;
    Ok((header, table))
}

/// Writes plot-ready CSVs for a model and returns their paths.
///
/// * synthetic1d: `x, F, G_<key>…, w_<key>…, proximity_<name>…` along the domain.
/// * synthetic2d: the same columns over a `resolution x resolution` grid.
/// * caslite: proximity of every constraint over `(h, tau)` at the rate
///   closest to -180 ft/s that the grid covers.
pub fn cmd_export_plots(cfg: &ExperimentConfig, model_file: Option<&Path>, constraints: Option<&Path>) -> Result<Vec<PathBuf>> {
    let set = ConstraintSet::load(&constraints.map_or_else(|| cfg.path(CONSTRAINTS_FILE), Path::to_path_buf))?;
    let model = SafePredictor::load(&model_file.map_or_else(|| cfg.model_path(), Path::to_path_buf), &set)?;
    if model.input_dim() != set.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: set.input_dim(),
            got: model.input_dim(),
        });
    }
    create_dir(&cfg.output_dir)?;
    let tag = kind_name(model.kind());
    let bbox = set.domain.bounding_box();
    let names = cfg.benchmark.input_names();
    if names.len() != set.input_dim() {
        return Err(Error::Usage(format!(
            "benchmark {} does not match a {}-input constraint set",
            cfg.benchmark,
            set.input_dim()
        )));
    }
    let path = match cfg.benchmark {
        BenchmarkKind::Synthetic1d => {
            let res = cfg.probe_resolution.unwrap_or(1001);
            let xs = verifier::uniform_grid(&bbox, res);
            let (header, table) = detailed_columns(&model, &xs, &names)?;
            let path = cfg.path(&format!("curves_1d_{tag}.csv"));
            write_table_csv(&path, &header, &table)?;
            path
        }
        BenchmarkKind::Synthetic2d => {
            let res = cfg.probe_resolution.unwrap_or(101);
            let xs = verifier::uniform_grid(&bbox, res);
            let (header, table) = detailed_columns(&model, &xs, &names)?;
            let path = cfg.path(&format!("surface_2d_{tag}.csv"));
            write_table_csv(&path, &header, &table)?;
            path
        }
        BenchmarkKind::Caslite => {
            let xs = caslite_slice(cfg.probe_resolution.unwrap_or(161));
            let rows = xs.nrows();
            let mut prox = Array2::zeros((rows, set.len()));
            for (r, x) in xs.outer_iter().enumerate() {
                let p = model.proximities_at(&x.to_vec())?;
                if p.len() == set.len() {
                    prox.row_mut(r).assign(&ndarray::aview1(&p));
                } else {
                    // standard models carry no proximity parameters
                    return Err(Error::Usage("proximity slices need a safe model".into()));
                }
            }
            let mut header = names.clone();
            header.extend(set.constraints.iter().map(|c| format!("proximity_{}", c.name)));
            let table = ndarray::concatenate(ndarray::Axis(1), &[xs.view(), prox.view()]).expect("same rows");
            let path = cfg.path(&format!("proximity_slice_{tag}.csv"));
            write_table_csv(&path, &header, &table)?;
            path
        }
    };
    Ok(vec![path])
}

/// Points `(v, h, tau)` with `v` the grid rate nearest -180 ft/s,
/// `h_points` altitudes across the grid and every integer `tau`.
pub fn caslite_slice(h_points: usize) -> Array2<f64> {
    let v_max = f64::from(caslite::V_MAX) * V_UNIT_FPS;
    let v = SLICE_RATE_FPS.clamp(-v_max, v_max);
    let h_max = f64::from(H_MAX / H_GRID_STRIDE) * 100.0;
    let hs = verifier::linspace(-h_max, h_max, h_points);
    let mut out = Array2::zeros((hs.len() * (TAU_MAX + 1), 3));
    for (t, tau) in (0..=TAU_MAX).enumerate() {
        for (j, &h) in hs.iter().enumerate() {
            let r = t * hs.len() + j;
            out.slice_mut(s![r, ..]).assign(&ndarray::aview1(&[v, h, tau as f64]));
        }
    }
    out
}

/// Collects `run_*.json` files in `dir` and its immediate subdirectories,
/// in path order, and writes `table.txt` and `table.csv` there.
pub fn cmd_report(dir: &Path) -> Result<verifier::Table> {
    let mut files = Vec::new();
    let mut scan = |d: &Path| -> Result<()> {
        for entry in fs::read_dir(d)? {
            let p = entry?.path();
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if p.is_file() && name.starts_with("run_") && name.ends_with(".json") {
                files.push(p);
            }
        }
        Ok(())
    };
    scan(dir)?;
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in &subdirs {
        scan(d)?;
    }
    files.sort();
    let runs = files
        .iter()
        .map(|p| {
            from_json_str::<TableRun>(&fs::read_to_string(p)?).map_err(|e| match e {
                Error::Parse { path, message } => Error::Parse {
                    path: format!("{}: {path}", p.display()),
                    message,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = verifier::report_table(&runs);
    fs::write(dir.join("table.txt"), table.to_text())?;
    fs::write(dir.join("table.csv"), table.to_csv()?)?;
    Ok(table)
}
