//! Dense feed-forward networks over a flat parameter vector, with a batched
//! reverse-mode tape.

mod tape;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tape::{backward, NodeId, Tape};

/// Layer widths from input to output. Hidden layers use ReLU; the last layer
/// is linear unless `relu_output` is set (used for shared trunks whose output
/// feeds further layers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseNetSpec {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub relu_output: bool,
}

/// Where one affine layer lives inside a flat parameter vector: the weight
/// matrix (row-major, `fan_out x fan_in`) followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSlot {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    pub fn len(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.fan_out == 0
    }
}

impl DenseNetSpec {
    pub fn new(layer_dims: Vec<usize>, relu_output: bool) -> Result<Self> {
        let spec = Self {
            layer_dims,
            relu_output,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Spec(
                "a dense net needs an input and at least one layer".into(),
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Spec("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Number of ReLU units.
    pub fn hidden_units(&self) -> usize {
        let n = self.layer_count();
        self.layer_dims[1..]
            .iter()
            .enumerate()
            .filter(|(l, _)| *l + 1 < n || self.relu_output)
            .map(|(_, d)| d)
            .sum()
    }

    pub fn slots(&self, base: usize) -> Vec<LayerSlot> {
        let mut offset = base;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    offset,
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += slot.len();
                slot
            })
            .collect()
    }

    fn has_relu(&self, layer: usize) -> bool {
        layer + 1 < self.layer_count() || self.relu_output
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if out.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: out.len(),
            });
        }
        for slot in self.slots(0) {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for w in &mut out[slot.weight_range()] {
                *w = rng.random_range(-limit..=limit);
            }
            out[slot.bias_range()].fill(0.0);
        }
        Ok(())
    }
}

/// A named contiguous block of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter vector with a layout of named segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-filled segment and returns its offset.
    pub fn push_segment(&mut self, name: impl Into<String>, len: usize) -> usize {
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.segments.push(Segment {
            name: name.into(),
            offset,
            len,
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, segment: &Segment) -> &[f64] {
        &self.values[segment.offset..segment.offset + segment.len]
    }

    pub fn slice_mut(&mut self, segment: &Segment) -> &mut [f64] {
        &mut self.values[segment.offset..segment.offset + segment.len]
    }

    /// Replaces all values, keeping the layout.
    pub fn assign(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values = values;
        Ok(())
    }
}

/// Runs `spec` on a single input. When `tape` is given, the pass is recorded
/// on it; the tape must have been created over the same `params` slice.
pub fn forward(
    spec: &DenseNetSpec,
    params: &[f64],
    x: &[f64],
    tape: Option<&mut Tape<'_>>,
) -> Result<Vec<f64>> {
    if params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    if x.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: x.len(),
        });
    }
    match tape {
        Some(tape) => {
            if !std::ptr::eq(tape.params(), params) {
                return Err(Error::Precondition(
                    "tape was created over a different parameter vector".into(),
                ));
            }
            let leaf = tape.leaf_rows(&[x])?;
            let out = tape.dense(spec, 0, leaf)?;
            Ok(tape.value(out).row(0).to_vec())
        }
        None => {
            let mut tape = Tape::new(params);
            forward(spec, params, x, Some(&mut tape))
        }
    }
}

#[cfg(test)]
mod tests;
