//! Empirical checks of trained predictors: constraint violations on probe
//! sets, accuracy, continuity along segments, and summary tables.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{AxisBox, ConstraintSet};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::safepredictor::{SafePredictor, CHUNK_ROWS};
use crate::training::Dataset;

/// Slack for interval and half-line bounds. Score constraints are exact.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// Anything that maps a batch of inputs to a batch of outputs.
pub trait Predictor: Sync {
    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl Predictor for SafePredictor {
    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.predict(xs)
    }
}

/// Adapts a per-row closure.
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn predict_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let rows: Vec<Vec<f64>> = xs.outer_iter().map(|r| (self.0)(&r.to_vec())).collect();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Spec("predictor returned ragged rows".into()));
        }
        Array2::from_shape_vec((rows.len(), width), rows.concat()).map_err(|e| Error::Spec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolations {
    pub name: String,
    /// Probes that fall inside the constraint's input region.
    pub probes_in_region: u64,
    pub violations: u64,
    /// Violations as a percentage of all probes.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub total_probes: u64,
    /// Probes violating at least one constraint.
    pub violations: u64,
    pub percent: f64,
    pub per_constraint: Vec<ConstraintViolations>,
    /// Smallest margin seen over all (probe, constraint) pairs inside a
    /// region; `None` when no probe hit any region.
    pub worst_margin: Option<f64>,
    pub probe_spec: String,
}

impl ViolationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn percent(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

#[derive(Default)]
struct Tally {
    in_region: Vec<u64>,
    violations: Vec<u64>,
    any: u64,
    worst: Option<f64>,
}

impl Tally {
    fn new(c: usize) -> Self {
        Self {
            in_region: vec![0; c],
            violations: vec![0; c],
            ..Self::default()
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.in_region.iter_mut().zip(other.in_region) {
            *a += b;
        }
        for (a, b) in self.violations.iter_mut().zip(other.violations) {
            *a += b;
        }
        self.any += other.any;
        self.worst = match (self.worst, other.worst) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Counts probes whose prediction leaves the output set of a constraint whose
/// region contains them.
pub fn check_violations<P: Predictor + ?Sized>(
    predictor: &P,
    constraints: &ConstraintSet,
    probes: ArrayView2<'_, f64>,
    probe_spec: &str,
) -> Result<ViolationReport> {
    constraints.validate()?;
    if probes.ncols() != constraints.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: constraints.input_dim(),
            got: probes.ncols(),
        });
    }
    let c = constraints.len();
    let n = probes.nrows();
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let tallies = starts
        .par_iter()
        .map(|&start| -> Result<Tally> {
            let xs = probes.slice(ndarray::s![start..(start + CHUNK_ROWS).min(n), ..]);
            let ys = predictor.predict_batch(xs)?;
            if ys.nrows() != xs.nrows() || ys.ncols() != constraints.output_dim {
                return Err(Error::DimensionMismatch {
                    expected: constraints.output_dim,
                    got: ys.ncols(),
                });
            }
            let mut t = Tally::new(c);
            for (x, y) in xs.outer_iter().zip(ys.outer_iter()) {
                let x = x.to_vec();
                let y = y.to_vec();
                let mut bad = false;
                for (i, spec) in constraints.constraints.iter().enumerate() {
                    if !spec.region.contains(&x)? {
                        continue;
                    }
                    t.in_region[i] += 1;
                    if let Some(m) = spec.output.margin(&y, VIOLATION_TOLERANCE) {
                        t.worst = Some(t.worst.map_or(m, |w: f64| w.min(m)));
                    }
                    if !spec.output.admits(&y, VIOLATION_TOLERANCE) {
                        t.violations[i] += 1;
                        bad = true;
                    }
                }
                t.any += u64::from(bad);
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tallies.into_iter().fold(Tally::new(c), Tally::merge);
    let n = n as u64;
    Ok(ViolationReport {
        total_probes: n,
        violations: total.any,
        percent: percent(total.any, n),
        per_constraint: constraints
            .constraints
            .iter()
            .enumerate()
            .map(|(i, spec)| ConstraintViolations {
                name: spec.name.clone(),
                probes_in_region: total.in_region[i],
                violations: total.violations[i],
                percent: percent(total.violations[i], n),
            })
            .collect(),
        worst_margin: total.worst,
        probe_spec: probe_spec.to_string(),
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Full tensor grid over a box with `per_dim` points per axis; the last
/// axis varies fastest.
pub fn uniform_grid(bbox: &AxisBox, per_dim: usize) -> Array2<f64> {
    let axes: Vec<Vec<f64>> = bbox.bounds().iter().map(|b| linspace(b[0], b[1], per_dim)).collect();
    let d = axes.len();
    let total = per_dim.pow(d as u32);
    let mut out = Array2::zeros((total, d));
    for (r, mut row) in out.outer_iter_mut().enumerate() {
        let mut rem = r;
        for j in (0..d).rev() {
            row[j] = axes[j][rem % per_dim];
            rem /= per_dim;
        }
    }
    out
}

pub fn random_points(bbox: &AxisBox, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = bbox.dim();
    let mut out = Array2::zeros((n, d));
    for mut row in out.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.random_range(bbox.lo(j)..=bbox.hi(j));
        }
    }
    out
}

/// Corners, face centers and centers of every box of every constraint
/// region.
pub fn region_boundary_points(constraints: &ConstraintSet) -> Array2<f64> {
    let d = constraints.input_dim();
    let mut rows: Vec<f64> = Vec::new();
    for spec in &constraints.constraints {
        for b in spec.region.boxes() {
            let center = b.center();
            rows.extend_from_slice(&center);
            for corner in 0..(1usize << d) {
                rows.extend((0..d).map(|j| if corner >> j & 1 == 1 { b.hi(j) } else { b.lo(j) }));
            }
            for j in 0..d {
                for end in [b.lo(j), b.hi(j)] {
                    let mut p = center.clone();
                    p[j] = end;
                    rows.extend_from_slice(&p);
                }
            }
        }
    }
    let n = rows.len() / d.max(1);
    Array2::from_shape_vec((n, d), rows).expect("row-major probe buffer")
}

/// Default probe set for a constraint set: a tensor grid over the domain's
/// bounding box plus region boundary points. Returns the probes and a short
/// description for reports.
pub fn default_probes(constraints: &ConstraintSet, per_dim: usize) -> (Array2<f64>, String) {
    let bbox = constraints.domain.bounding_box();
    let grid = uniform_grid(&bbox, per_dim);
    let boundary = region_boundary_points(constraints);
    let spec = format!(
        "grid {per_dim}^{} over domain + {} region boundary points",
        constraints.input_dim(),
        boundary.nrows()
    );
    let all = ndarray::concatenate(Axis(0), &[grid.view(), boundary.view()]).expect("same width");
    (all, spec)
}

/// Per-dimension resolution used when none is requested.
pub fn default_resolution(input_dim: usize) -> usize {
    match input_dim {
        0 | 1 => 100_000,
        2 => 400,
        _ => 50,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", content = "value", rename_all = "snake_case")]
pub enum Accuracy {
    /// Percentage of rows whose highest predicted score matches the
    /// highest target score.
    Percent(f64),
    /// Coefficient of determination over all outputs.
    RSquared(f64),
}

impl Accuracy {
    pub fn value(self) -> f64 {
        match self {
            Accuracy::Percent(v) | Accuracy::RSquared(v) => v,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Accuracy::Percent(_) => "accuracy %",
            Accuracy::RSquared(_) => "R2",
        }
    }
}

impl std::fmt::Display for Accuracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Accuracy::Percent(v) => write!(f, "{v:.2}"),
            Accuracy::RSquared(v) => write!(f, "R2={v:.2}"),
        }
    }
}

pub fn accuracy<P: Predictor + ?Sized>(predictor: &P, ds: &Dataset, classification: bool) -> Result<Accuracy> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred = predictor.predict_batch(ds.inputs.view())?;
    if pred.dim() != ds.targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.output_dim(),
            got: pred.ncols(),
        });
    }
    if classification {
        let hits = pred
            .outer_iter()
            .zip(ds.targets.outer_iter())
            .filter(|(p, t)| argmax(&p.to_vec()) == argmax(&t.to_vec()))
            .count();
        Ok(Accuracy::Percent(percent(hits as u64, ds.len() as u64)))
    } else {
        let mean = ds.targets.mean().unwrap_or(0.0);
        let ss_tot: f64 = ds.targets.iter().map(|t| (t - mean).powi(2)).sum();
        let ss_res: f64 = pred.iter().zip(ds.targets.iter()).map(|(p, t)| (p - t).powi(2)).sum();
        if ss_tot == 0.0 {
            return Err(Error::Precondition("targets are constant; R2 is undefined".into()));
        }
        Ok(Accuracy::RSquared(1.0 - ss_res / ss_tot))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityProfile {
    pub points: usize,
    /// Largest change of any output between consecutive points.
    pub max_jump: f64,
    /// Index of the step (between points `i` and `i + 1`) with the largest jump.
    pub worst_step: usize,
    pub jumps: Vec<f64>,
}

/// Evaluates `points` evenly spaced inputs on the segment from `a` to `b` and
/// records the output change between neighbours.
pub fn continuity_probe<P: Predictor + ?Sized>(
    predictor: &P,
    a: &[f64],
    b: &[f64],
    points: usize,
) -> Result<ContinuityProfile> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if points < 2 {
        return Err(Error::Precondition(format!("need at least 2 points, got {points}")));
    }
    let d = a.len();
    let mut xs = Array2::zeros((points, d));
    for (i, mut row) in xs.outer_iter_mut().enumerate() {
        let t = i as f64 / (points - 1) as f64;
        for j in 0..d {
            row[j] = a[j] + (b[j] - a[j]) * t;
        }
    }
    let ys = predictor.predict_batch(xs.view())?;
    let jumps: Vec<f64> = (0..points - 1)
        .map(|i| {
            ys.row(i)
                .iter()
                .zip(ys.row(i + 1).iter())
                .map(|(p, q)| (q - p).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let (worst_step, max_jump) = jumps
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, j)| if j > best.1 { (i, j) } else { best });
    Ok(ContinuityProfile {
        points,
        max_jump,
        worst_step,
        jumps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingCheck {
    pub coarse_points: usize,
    pub fine_points: usize,
    pub coarse_jump: f64,
    pub fine_jump: f64,
    pub ratio: f64,
    /// Whether the jump shrank roughly in proportion to the step size.
    pub halves: bool,
}

/// Compares the maximal jump at `points` and at `2 * points - 1` points,
/// which halves the step exactly. A continuous, piecewise smooth output
/// gives a ratio near 0.5; a discontinuity keeps it near 1.
pub fn halving_check<P: Predictor + ?Sized>(predictor: &P, a: &[f64], b: &[f64], points: usize) -> Result<HalvingCheck> {
    let coarse = continuity_probe(predictor, a, b, points)?;
    let fine = continuity_probe(predictor, a, b, 2 * points - 1)?;
    let ratio = if coarse.max_jump == 0.0 {
        0.0
    } else {
        fine.max_jump / coarse.max_jump
    };
    Ok(HalvingCheck {
        coarse_points: coarse.points,
        fine_points: fine.points,
        coarse_jump: coarse.max_jump,
        fine_jump: fine.max_jump,
        ratio,
        halves: ratio <= 0.75,
    })
}

/// One trained network evaluated on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRun {
    pub network: String,
    pub dataset: String,
    pub accuracy: Accuracy,
    pub report: ViolationReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Rows are networks and column pairs are datasets, both in order of first
/// appearance. Missing combinations are left blank.
pub fn report_table(runs: &[TableRun]) -> Table {
    let mut networks: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for r in runs {
        if !networks.contains(&r.network.as_str()) {
            networks.push(&r.network);
        }
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut header = vec!["Network".to_string()];
    for d in &datasets {
        header.push(format!("{d} Acc"));
        header.push(format!("{d} Violations"));
    }
    let rows = networks
        .iter()
        .map(|n| {
            let mut row = vec![n.to_string()];
            for d in &datasets {
                match runs.iter().find(|r| r.network == *n && r.dataset == *d) {
                    Some(r) => {
                        row.push(r.accuracy.to_string());
                        row.push(format!("{:.2}", r.report.percent));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

impl Table {
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Spec(e.to_string()))
    }
}
