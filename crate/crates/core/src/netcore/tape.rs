use ndarray::{linalg::general_mat_mul, Array2, ArrayView2, Axis};

use super::{DenseNetSpec, LayerSlot};
use crate::constraints::ConvexOutputSet;
use crate::error::{Error, Result};
use crate::math::{logistic, softplus};
use crate::proximity::ProximityParams;

/// Denominators below this fall back to the head of the input's own key.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { input: NodeId, slot: LayerSlot },
    Relu(NodeId),
    Logistic(NodeId),
    Softplus(NodeId),
    Scale { input: NodeId, scale: f64 },
    /// Row-wise minimum over `cols`; `argmin` holds the chosen column.
    MinCols { input: NodeId, argmin: Vec<usize> },
    /// Copy of `src` with `cols` overwritten by the single-column `value` plus `shift`.
    ReplaceCols { src: NodeId, value: NodeId, cols: Vec<usize> },
    Proximity { offset: usize, dist: Vec<f64> },
    /// Product of `s` (inactive) or `1 - s` (active) factors.
    OverlapWeight { factors: Vec<(NodeId, bool)> },
    /// Normalized weighted sum of `preds`; rows with a vanishing denominator
    /// copy `preds[fallback[r]]`.
    Combine {
        weights: Vec<NodeId>,
        preds: Vec<NodeId>,
        fallback: Vec<usize>,
        denom: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Recorded batched computation over a borrowed parameter vector. Every node
/// holds a `rows x cols` matrix; rows are independent samples.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.nrows()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_rows(&mut self, rows: &[&[f64]]) -> Result<NodeId> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut value = Array2::zeros((rows.len(), cols));
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            value.row_mut(r).assign(&ndarray::aview1(row));
        }
        Ok(self.leaf(value))
    }

    pub fn affine(&mut self, input: NodeId, slot: LayerSlot) -> Result<NodeId> {
        let x = &self.nodes[input.0].value;
        if x.ncols() != slot.fan_in {
            return Err(Error::DimensionMismatch {
                expected: slot.fan_in,
                got: x.ncols(),
            });
        }
        if slot.offset + slot.len() > self.params.len() {
            return Err(Error::Precondition("layer slot exceeds parameter vector".into()));
        }
        let w = weight_view(self.params, slot);
        let b = ndarray::aview1(&self.params[slot.bias_range()]);
        let mut y = x.dot(&w.t());
        y += &b;
        Ok(self.push(Op::Affine { input, slot }, y))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let y = self.value(input).mapv(|v| v.max(0.0));
        self.push(Op::Relu(input), y)
    }

    pub fn logistic(&mut self, input: NodeId) -> NodeId {
        let y = self.value(input).mapv(logistic);
        self.push(Op::Logistic(input), y)
    }

    pub fn softplus(&mut self, input: NodeId) -> NodeId {
        let y = self.value(input).mapv(softplus);
        self.push(Op::Softplus(input), y)
    }

    /// `shift + scale * x` elementwise.
    pub fn scale(&mut self, input: NodeId, scale: f64, shift: f64) -> NodeId {
        let y = self.value(input).mapv(|v| shift + scale * v);
        self.push(Op::Scale { input, scale }, y)
    }

    /// Row-wise minimum over the columns not listed in `excluded` (sorted).
    /// Ties go to the lowest column.
    pub fn min_excluding(&mut self, input: NodeId, excluded: &[usize]) -> Result<NodeId> {
        let x = self.value(input);
        let mut argmin = Vec::with_capacity(x.nrows());
        let mut y = Array2::zeros((x.nrows(), 1));
        for (r, row) in x.rows().into_iter().enumerate() {
            let owned;
            let slice = match row.as_slice() {
                Some(s) => s,
                None => {
                    owned = row.to_vec();
                    &owned
                }
            };
            let (v, j) = crate::constraints::safe_minimum(slice, excluded);
            if j == usize::MAX {
                return Err(Error::Unsatisfiable("no column left to take a minimum over".into()));
            }
            y[[r, 0]] = v;
            argmin.push(j);
        }
        Ok(self.push(Op::MinCols { input, argmin }, y))
    }

    pub fn replace_cols(&mut self, src: NodeId, value: NodeId, cols: &[usize], shift: f64) -> Result<NodeId> {
        let mut y = self.value(src).clone();
        let v = self.value(value);
        if v.ncols() != 1 || v.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch {
                expected: y.nrows(),
                got: v.nrows(),
            });
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= y.ncols()) {
            return Err(Error::DimensionMismatch {
                expected: y.ncols(),
                got: c + 1,
            });
        }
        for r in 0..y.nrows() {
            for &c in cols {
                y[[r, c]] = v[[r, 0]] + shift;
            }
        }
        Ok(self.push(
            Op::ReplaceCols {
                src,
                value,
                cols: cols.to_vec(),
            },
            y,
        ))
    }

    /// Proximity of each row's distance using the `(a, b)` pair at `offset`.
    pub fn proximity(&mut self, offset: usize, dist: Vec<f64>) -> Result<NodeId> {
        if offset + 2 > self.params.len() {
            return Err(Error::Precondition("proximity offset exceeds parameter vector".into()));
        }
        if let Some(d) = dist.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::Precondition(format!("distance must be >= 0, got {d}")));
        }
        let p = ProximityParams {
            a: self.params[offset],
            b: self.params[offset + 1],
        };
        let y = Array2::from_shape_fn((dist.len(), 1), |(r, _)| p.eval_unchecked(dist[r]));
        Ok(self.push(Op::Proximity { offset, dist }, y))
    }

    /// Overlap weight from proximity nodes; `active` marks constraints whose
    /// key bit is set. An empty factor list gives a weight of one.
    pub fn overlap_weight(&mut self, factors: Vec<(NodeId, bool)>, rows: usize) -> Result<NodeId> {
        let mut y = Array2::from_elem((rows, 1), 1.0);
        for &(id, active) in &factors {
            let s = self.value(id);
            if s.nrows() != rows || s.ncols() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: s.nrows(),
                });
            }
            for r in 0..rows {
                y[[r, 0]] *= factor(s[[r, 0]], active);
            }
        }
        Ok(self.push(Op::OverlapWeight { factors }, y))
    }

    pub fn combine(&mut self, weights: Vec<NodeId>, preds: Vec<NodeId>, fallback: Vec<usize>) -> Result<NodeId> {
        if weights.len() != preds.len() || preds.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: preds.len(),
                got: weights.len(),
            });
        }
        let rows = self.rows(preds[0]);
        let cols = self.value(preds[0]).ncols();
        if fallback.len() != rows || fallback.iter().any(|&k| k >= preds.len()) {
            return Err(Error::Precondition("fallback heads must cover every row".into()));
        }
        for (&w, &p) in weights.iter().zip(&preds) {
            if self.value(w).dim() != (rows, 1) || self.value(p).dim() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: self.rows(p),
                });
            }
        }
        let mut denom = vec![0.0; rows];
        for &w in &weights {
            for (r, d) in denom.iter_mut().enumerate() {
                *d += self.value(w)[[r, 0]];
            }
        }
        let mut y = Array2::zeros((rows, cols));
        for r in 0..rows {
            let mut out = y.row_mut(r);
            if denom[r] < UNDERFLOW_FLOOR {
                out.assign(&self.value(preds[fallback[r]]).row(r));
                continue;
            }
            for (&w, &p) in weights.iter().zip(&preds) {
                let wr = self.nodes[w.0].value[[r, 0]];
                if wr != 0.0 {
                    out.scaled_add(wr, &self.nodes[p.0].value.row(r));
                }
            }
            out.mapv_inplace(|v| v / denom[r]);
        }
        Ok(self.push(
            Op::Combine {
                weights,
                preds,
                fallback,
                denom,
            },
            y,
        ))
    }

    /// Records `spec` applied to `input`, with parameters starting at `base`.
    pub fn dense(&mut self, spec: &DenseNetSpec, base: usize, input: NodeId) -> Result<NodeId> {
        let mut h = input;
        for (l, slot) in spec.slots(base).into_iter().enumerate() {
            h = self.affine(h, slot)?;
            if spec.has_relu(l) {
                h = self.relu(h);
            }
        }
        Ok(h)
    }

    /// Records the projection of raw head outputs into `set`.
    pub fn project(&mut self, raw: NodeId, set: &ConvexOutputSet) -> Result<NodeId> {
        set.validate_for_dim(self.value(raw).ncols())?;
        Ok(match *set {
            ConvexOutputSet::Interval { lo, hi } => {
                let s = self.logistic(raw);
                self.scale(s, hi - lo, lo)
            }
            ConvexOutputSet::HalfLineAbove { lo } => {
                let s = self.softplus(raw);
                self.scale(s, 1.0, lo)
            }
            ConvexOutputSet::HalfLineBelow { hi } => {
                let neg = self.scale(raw, -1.0, 0.0);
                let s = self.softplus(neg);
                self.scale(s, -1.0, hi)
            }
            ConvexOutputSet::ScoreNotHighest {
                ref unsafe_indices,
                epsilon,
            } => {
                let floor = self.min_excluding(raw, unsafe_indices)?;
                self.replace_cols(raw, floor, unsafe_indices, -epsilon)?
            }
            ConvexOutputSet::Unconstrained => raw,
        })
    }
}

#[inline]
fn factor(s: f64, active: bool) -> f64 {
    if active {
        1.0 - s
    } else {
        s
    }
}

fn weight_view(params: &[f64], slot: LayerSlot) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((slot.fan_out, slot.fan_in), &params[slot.weight_range()])
        .expect("slot shape matches its range")
}

/// Reverse pass from `output` with cotangent `seed`; returns the gradient
/// with respect to every entry of the tape's parameter vector.
pub fn backward(tape: &Tape<'_>, output: NodeId, seed: &Array2<f64>) -> Result<Vec<f64>> {
    let out_dim = tape.value(output).dim();
    if seed.dim() != out_dim {
        return Err(Error::DimensionMismatch {
            expected: out_dim.0 * out_dim.1,
            got: seed.len(),
        });
    }
    let mut grads = vec![0.0; tape.params.len()];
    let mut adj: Vec<Option<Array2<f64>>> = Vec::with_capacity(output.0 + 1);
    adj.resize_with(output.0 + 1, || None);
    adj[output.0] = Some(seed.clone());

    fn accumulate(adj: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
        match &mut adj[id.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    for idx in (0..=output.0).rev() {
        let Some(g) = adj[idx].take() else { continue };
        let node = &tape.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Affine { input, slot } => {
                let x = tape.value(*input);
                {
                    let mut dw = ndarray::ArrayViewMut2::from_shape(
                        (slot.fan_out, slot.fan_in),
                        &mut grads[slot.weight_range()],
                    )
                    .expect("slot shape matches its range");
                    general_mat_mul(1.0, &g.t(), x, 1.0, &mut dw);
                }
                for (b, s) in grads[slot.bias_range()].iter_mut().zip(g.sum_axis(Axis(0))) {
                    *b += s;
                }
                if !matches!(tape.nodes[input.0].op, Op::Leaf) {
                    let dx = g.dot(&weight_view(tape.params, *slot));
                    accumulate(&mut adj, *input, dx);
                }
            }
            Op::Relu(input) => {
                let mut dx = g;
                dx.zip_mut_with(tape.value(*input), |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
                accumulate(&mut adj, *input, dx);
            }
            Op::Logistic(input) => {
                let mut dx = g;
                dx.zip_mut_with(&node.value, |d, &y| *d *= y * (1.0 - y));
                accumulate(&mut adj, *input, dx);
            }
            Op::Softplus(input) => {
                let mut dx = g;
                dx.zip_mut_with(tape.value(*input), |d, &x| *d *= logistic(x));
                accumulate(&mut adj, *input, dx);
            }
            Op::Scale { input, scale } => {
                let mut dx = g;
                dx.mapv_inplace(|d| d * scale);
                accumulate(&mut adj, *input, dx);
            }
            Op::MinCols { input, argmin } => {
                let mut dx = Array2::zeros(tape.value(*input).dim());
                for (r, &j) in argmin.iter().enumerate() {
                    dx[[r, j]] = g[[r, 0]];
                }
                accumulate(&mut adj, *input, dx);
            }
            Op::ReplaceCols { src, value, cols } => {
                let mut dsrc = g;
                let mut dval = Array2::zeros((dsrc.nrows(), 1));
                for r in 0..dsrc.nrows() {
                    for &c in cols {
                        dval[[r, 0]] += dsrc[[r, c]];
                        dsrc[[r, c]] = 0.0;
                    }
                }
                accumulate(&mut adj, *src, dsrc);
                accumulate(&mut adj, *value, dval);
            }
            Op::Proximity { offset, dist } => {
                let p = ProximityParams {
                    a: tape.params[*offset],
                    b: tape.params[*offset + 1],
                };
                let (mut da, mut db) = (0.0, 0.0);
                for (r, &d) in dist.iter().enumerate() {
                    let pg = p.grad(d);
                    da += g[[r, 0]] * pg.d_a;
                    db += g[[r, 0]] * pg.d_b;
                }
                grads[*offset] += da;
                grads[*offset + 1] += db;
            }
            Op::OverlapWeight { factors } => {
                let rows = g.nrows();
                for (j, &(id, active)) in factors.iter().enumerate() {
                    let mut ds = Array2::zeros((rows, 1));
                    for r in 0..rows {
                        let mut others = 1.0;
                        for (k, &(other, other_active)) in factors.iter().enumerate() {
                            if k != j {
                                others *= factor(tape.value(other)[[r, 0]], other_active);
                            }
                        }
                        let sign = if active { -1.0 } else { 1.0 };
                        ds[[r, 0]] = g[[r, 0]] * sign * others;
                    }
                    accumulate(&mut adj, id, ds);
                }
            }
            Op::Combine {
                weights,
                preds,
                fallback,
                denom,
            } => {
                let rows = g.nrows();
                let y = &node.value;
                for (b, (&w, &p)) in weights.iter().zip(preds).enumerate() {
                    let wv = tape.value(w);
                    let pv = tape.value(p);
                    let mut dp = Array2::zeros(pv.dim());
                    let mut dw = Array2::zeros((rows, 1));
                    for r in 0..rows {
                        if denom[r] < UNDERFLOW_FLOOR {
                            if fallback[r] == b {
                                dp.row_mut(r).assign(&g.row(r));
                            }
                            continue;
                        }
                        let share = wv[[r, 0]] / denom[r];
                        let mut dot = 0.0;
                        for c in 0..pv.ncols() {
                            dp[[r, c]] = g[[r, c]] * share;
                            dot += g[[r, c]] * (pv[[r, c]] - y[[r, c]]);
                        }
                        dw[[r, 0]] = dot / denom[r];
                    }
                    accumulate(&mut adj, p, dp);
                    accumulate(&mut adj, w, dw);
                }
            }
        }
    }
    Ok(grads)
}
