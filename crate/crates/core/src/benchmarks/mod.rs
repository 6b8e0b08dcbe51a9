//! Benchmark generators and their default architectures and training setups.

pub mod caslite;
pub mod synthetic;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::safepredictor::Architecture;
use crate::training::{Dataset, LossKind, TrainConfig};

pub use caslite::APrev;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Synthetic1d,
    Synthetic2d,
    Caslite,
}

impl std::str::FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synthetic1d" => Ok(BenchmarkKind::Synthetic1d),
            "synthetic2d" => Ok(BenchmarkKind::Synthetic2d),
            "caslite" => Ok(BenchmarkKind::Caslite),
            other => Err(Error::Usage(format!(
                "unknown benchmark {other:?} (expected synthetic1d, synthetic2d or caslite)"
            ))),
        }
    }
}

impl std::fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchmarkKind::Synthetic1d => "synthetic1d",
            BenchmarkKind::Synthetic2d => "synthetic2d",
            BenchmarkKind::Caslite => "caslite",
        })
    }
}

pub const SYNTHETIC_1D_SAMPLES: usize = 1000;
pub const SYNTHETIC_2D_SAMPLES: usize = 2000;

impl BenchmarkKind {
    /// Shared trunk and per-head layers. The standard baseline uses the same
    /// trunk with a single head.
    pub fn architecture(self) -> Architecture {
        let (trunk, head) = match self {
            BenchmarkKind::Synthetic1d => (vec![1, 10], vec![10, 1]),
            BenchmarkKind::Synthetic2d => (vec![2, 20, 20], vec![20, 1]),
            BenchmarkKind::Caslite => (vec![3, 45, 45, 45, 45], vec![45, 45, 45, 9]),
        };
        Architecture::new(trunk, head).expect("preset architectures are valid")
    }

    pub fn train_config(self) -> TrainConfig {
        match self {
            BenchmarkKind::Synthetic1d => TrainConfig {
                learning_rate: 0.001,
                batch_size: 50,
                ..TrainConfig::default()
            },
            BenchmarkKind::Synthetic2d => TrainConfig {
                learning_rate: 0.001,
                batch_size: 100,
                ..TrainConfig::default()
            },
            BenchmarkKind::Caslite => TrainConfig {
                batch_size: 512,
                loss: LossKind::Asymmetric,
                ..TrainConfig::default()
            },
        }
    }

    pub fn input_names(self) -> Vec<String> {
        match self {
            BenchmarkKind::Synthetic1d => vec!["x".into()],
            BenchmarkKind::Synthetic2d => vec!["x1".into(), "x2".into()],
            BenchmarkKind::Caslite => caslite::input_names().iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn target_names(self) -> Vec<String> {
        match self {
            BenchmarkKind::Caslite => caslite::ADVISORIES.iter().map(|s| s.to_string()).collect(),
            _ => vec!["y".into()],
        }
    }

    pub fn is_classification(self) -> bool {
        self == BenchmarkKind::Caslite
    }
}

pub const STRATUM_COLUMN: &str = "stratum";

/// CSV with a header of input names, target names and an optional stratum
/// column. Floats use the shortest representation that parses back exactly.
pub fn write_dataset_csv<W: Write>(out: W, ds: &Dataset, inputs: &[String], targets: &[String]) -> Result<()> {
    if inputs.len() != ds.input_dim() || targets.len() != ds.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.input_dim() + ds.output_dim(),
            got: inputs.len() + targets.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = inputs.iter().chain(targets).map(String::as_str).collect();
    if ds.strata.is_some() {
        header.push(STRATUM_COLUMN);
    }
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut row: Vec<String> = ds
            .inputs
            .row(r)
            .iter()
            .chain(ds.targets.row(r).iter())
            .map(f64::to_string)
            .collect();
        if let Some(s) = &ds.strata {
            row.push(s[r].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`]; the first `input_dim`
/// columns are inputs.
pub fn read_dataset_csv<R: Read>(input: R, input_dim: usize) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let has_strata = header.iter().last() == Some(STRATUM_COLUMN);
    let value_cols = header.len() - usize::from(has_strata);
    if value_cols <= input_dim {
        return Err(Error::Spec(format!(
            "dataset has {value_cols} value columns; need more than {input_dim}"
        )));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut strata = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |c: usize| -> Result<f64> {
            record[c].parse().map_err(|e| Error::Parse {
                path: format!("row {}, column {:?}", line + 2, &header[c]),
                message: format!("{e}"),
            })
        };
        for c in 0..value_cols {
            let v = parse(c)?;
            if c < input_dim {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
        if has_strata {
            strata.push(record[value_cols].parse().map_err(|e| Error::Parse {
                path: format!("row {}, column {STRATUM_COLUMN:?}", line + 2),
                message: format!("{e}"),
            })?);
        }
    }
    let n = inputs.len() / input_dim;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let inputs = Array2::from_shape_vec((n, input_dim), inputs).map_err(|e| Error::Spec(e.to_string()))?;
    let targets = Array2::from_shape_vec((n, value_cols - input_dim), targets).map_err(|e| Error::Spec(e.to_string()))?;
    Dataset::new(inputs, targets, has_strata.then_some(strata))
}

pub fn save_dataset(path: &Path, ds: &Dataset, kind: BenchmarkKind) -> Result<()> {
    write_dataset_csv(std::fs::File::create(path)?, ds, &kind.input_names(), &kind.target_names())
}

pub fn load_dataset(path: &Path, input_dim: usize) -> Result<Dataset> {
    read_dataset_csv(std::fs::File::open(path)?, input_dim)
}
