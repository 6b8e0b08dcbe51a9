//! The safe predictor: a shared trunk, one projected head per overlap key, and
//! proximity-weighted convex blending of the heads.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, ConvexOutputSet, OverlapKey, OverlapPartition};
use crate::error::{from_json_str, Error, Result};
use crate::netcore::{DenseNetSpec, NodeId, ParamStore, Tape};
use crate::proximity::ProximityParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows per recorded tape during batched evaluation.
pub const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Plain network: one unconstrained head, no blending.
    Standard,
    Safe,
}

/// Affine map of the declared domain onto `[-1, 1]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl InputNormalizer {
    pub fn for_domain(constraints: &ConstraintSet) -> Self {
        let bbox = constraints.domain.bounding_box();
        let half_width = bbox
            .bounds()
            .iter()
            .map(|[lo, hi]| {
                let hw = 0.5 * (hi - lo);
                if hw > 0.0 {
                    hw
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            center: bbox.center(),
            half_width,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            *o = (x[d] - self.center[d]) / self.half_width[d];
        }
    }
}

/// Layer widths for the shared trunk and for each head. The head's input
/// width must equal the trunk's output width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub trunk: DenseNetSpec,
    pub head: DenseNetSpec,
}

impl Architecture {
    pub fn new(trunk_dims: Vec<usize>, head_dims: Vec<usize>) -> Result<Self> {
        Ok(Self {
            trunk: DenseNetSpec::new(trunk_dims, true)?,
            head: DenseNetSpec::new(head_dims, false)?,
        })
    }
}

/// One constrained predictor `G_b`: a head network and the set it projects into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub key: OverlapKey,
    pub codomain: ConvexOutputSet,
    pub spec: DenseNetSpec,
}

/// Per-row inputs to the recorded graph: normalized inputs, scaled distances
/// to every constraint region, and the partition position of each row's own
/// key (used when all weights underflow).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub inputs: Array2<f64>,
    pub dists: Array2<f64>,
    pub fallback: Vec<usize>,
}

impl Features {
    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn select(&self, rows: &[usize]) -> Features {
        Features {
            inputs: self.inputs.select(Axis(0), rows),
            dists: self.dists.select(Axis(0), rows),
            fallback: rows.iter().map(|&r| self.fallback[r]).collect(),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> Features {
        Features {
            inputs: self.inputs.slice(s![range.clone(), ..]).to_owned(),
            dists: self.dists.slice(s![range.clone(), ..]).to_owned(),
            fallback: self.fallback[range].to_vec(),
        }
    }
}

/// Node handles of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub output: NodeId,
    pub heads: Vec<NodeId>,
    pub weights: Vec<NodeId>,
    pub proximities: Vec<NodeId>,
}

/// Full per-row breakdown of a forward pass.
#[derive(Debug, Clone)]
pub struct Detailed {
    pub output: Array2<f64>,
    /// One `rows x output_dim` matrix per head, in partition order.
    pub heads: Vec<Array2<f64>>,
    /// `rows x k` unnormalized weights.
    pub weights: Array2<f64>,
    /// `rows x c` proximity values.
    pub proximities: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SafePredictor {
    kind: ModelKind,
    constraints: ConstraintSet,
    constraint_hash: String,
    partition: OverlapPartition,
    normalizer: InputNormalizer,
    trunk: DenseNetSpec,
    heads: Vec<HeadSpec>,
    params: ParamStore,
    head_offsets: Vec<usize>,
    proximity_offset: usize,
}

/// `prod_{b_i = 0} s_i * prod_{b_i = 1} (1 - s_i)`.
pub fn weight_eval(proximities: &[f64], key: &OverlapKey) -> f64 {
    proximities
        .iter()
        .enumerate()
        .map(|(i, &s)| if key.bit(i) { 1.0 - s } else { s })
        .product()
}

pub fn build_safe_predictor(constraints: &ConstraintSet, arch: &Architecture, seed: u64) -> Result<SafePredictor> {
    SafePredictor::build(ModelKind::Safe, constraints, arch, seed)
}

/// The unconstrained baseline with the same trunk and a single head.
pub fn build_standard_predictor(constraints: &ConstraintSet, arch: &Architecture, seed: u64) -> Result<SafePredictor> {
    SafePredictor::build(ModelKind::Standard, constraints, arch, seed)
}

fn check_architecture(constraints: &ConstraintSet, trunk: &DenseNetSpec, head: &DenseNetSpec) -> Result<()> {
    trunk.validate()?;
    head.validate()?;
    if trunk.input_dim() != constraints.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: constraints.input_dim(),
            got: trunk.input_dim(),
        });
    }
    if head.input_dim() != trunk.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: trunk.output_dim(),
            got: head.input_dim(),
        });
    }
    if head.output_dim() != constraints.output_dim {
        return Err(Error::DimensionMismatch {
            expected: constraints.output_dim,
            got: head.output_dim(),
        });
    }
    Ok(())
}

fn head_codomains(set: &ConstraintSet, partition: &OverlapPartition) -> Result<Vec<ConvexOutputSet>> {
    let mut codomains = Vec::with_capacity(partition.k());
    let mut infeasible = Vec::new();
    for key in partition.keys() {
        match set.codomain(key) {
            Ok(c) => codomains.push(c),
            Err(Error::Unsatisfiable(_)) => infeasible.push(key.to_string()),
            Err(e) => return Err(e),
        }
    }
    if infeasible.is_empty() {
        Ok(codomains)
    } else {
        Err(Error::InfeasibleOverlap { keys: infeasible })
    }
}

fn layout(trunk: &DenseNetSpec, heads: &[HeadSpec], constraints: &ConstraintSet) -> (ParamStore, Vec<usize>, usize) {
    let mut params = ParamStore::new();
    params.push_segment("trunk", trunk.param_count());
    let head_offsets = heads
        .iter()
        .map(|h| params.push_segment(format!("head:{}", h.key), h.spec.param_count()))
        .collect();
    let mut proximity_offset = params.len();
    for (i, c) in constraints.constraints.iter().enumerate() {
        let off = params.push_segment(format!("proximity:{}", c.name), 2);
        if i == 0 {
            proximity_offset = off;
        }
    }
    (params, head_offsets, proximity_offset)
}

impl SafePredictor {
    fn build(kind: ModelKind, bound: &ConstraintSet, arch: &Architecture, seed: u64) -> Result<Self> {
        bound.validate()?;
        let partition = match kind {
            ModelKind::Safe => bound.partition()?,
            ModelKind::Standard => bound.without_constraints().partition()?,
        };
        Self::build_inner(kind, bound, partition, arch, seed)
    }

    /// Safe predictor over a caller-supplied partition.
    ///
    /// Nothing checks that `partition` covers every input: evaluating at a
    /// point whose overlap key is missing fails with `PartitionIntegrity`.
    /// Meant for studying alternative enumerations such as
    /// [`enumerate_overlaps_interior`](crate::constraints::enumerate_overlaps_interior).
    pub fn build_with_partition(
        constraints: &ConstraintSet,
        partition: OverlapPartition,
        arch: &Architecture,
        seed: u64,
    ) -> Result<Self> {
        constraints.validate()?;
        if partition.constraint_count() != constraints.len() {
            return Err(Error::DimensionMismatch {
                expected: constraints.len(),
                got: partition.constraint_count(),
            });
        }
        Self::build_inner(ModelKind::Safe, constraints, partition, arch, seed)
    }

    fn build_inner(
        kind: ModelKind,
        bound: &ConstraintSet,
        partition: OverlapPartition,
        arch: &Architecture,
        seed: u64,
    ) -> Result<Self> {
        check_architecture(bound, &arch.trunk, &arch.head)?;
        let constraints = match kind {
            ModelKind::Safe => bound.clone(),
            ModelKind::Standard => bound.without_constraints(),
        };
        let codomains = head_codomains(&constraints, &partition)?;
        let heads: Vec<HeadSpec> = partition
            .keys()
            .iter()
            .zip(codomains)
            .map(|(key, codomain)| HeadSpec {
                key: *key,
                codomain,
                spec: arch.head.clone(),
            })
            .collect();
        let (mut params, head_offsets, proximity_offset) = layout(&arch.trunk, &heads, &constraints);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk_seg = params.segments()[0].clone();
        arch.trunk.init(&mut rng, params.slice_mut(&trunk_seg))?;
        for (h, &off) in heads.iter().zip(&head_offsets) {
            let len = h.spec.param_count();
            h.spec.init(&mut rng, &mut params.values_mut()[off..off + len])?;
        }
        let diagonal = constraints
            .domain
            .bounding_box()
            .diagonal(&constraints.distance_scale);
        let initial = ProximityParams::initial(diagonal);
        for i in 0..constraints.len() {
            let v = params.values_mut();
            v[proximity_offset + 2 * i] = initial.a;
            v[proximity_offset + 2 * i + 1] = initial.b;
        }

        Ok(Self {
            kind,
            constraint_hash: bound.content_hash()?,
            normalizer: InputNormalizer::for_domain(bound),
            constraints,
            partition,
            trunk: arch.trunk.clone(),
            heads,
            params,
            head_offsets,
            proximity_offset,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Constraints the architecture is built from (empty for a standard model).
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn constraint_hash(&self) -> &str {
        &self.constraint_hash
    }

    pub fn partition(&self) -> &OverlapPartition {
        &self.partition
    }

    pub fn heads(&self) -> &[HeadSpec] {
        &self.heads
    }

    pub fn trunk(&self) -> &DenseNetSpec {
        &self.trunk
    }

    pub fn normalizer(&self) -> &InputNormalizer {
        &self.normalizer
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.constraints.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.constraints.output_dim
    }

    pub fn proximity(&self, i: usize) -> ProximityParams {
        let v = self.params.values();
        ProximityParams {
            a: v[self.proximity_offset + 2 * i],
            b: v[self.proximity_offset + 2 * i + 1],
        }
    }

    pub fn set_proximity(&mut self, i: usize, p: ProximityParams) {
        let off = self.proximity_offset + 2 * i;
        let v = self.params.values_mut();
        v[off] = p.a;
        v[off + 1] = p.b;
    }

    /// Trunk parameters followed by head parameters (proximity excluded).
    pub fn network_param_count(&self) -> usize {
        self.trunk.param_count() + self.heads.iter().map(|h| h.spec.param_count()).sum::<usize>()
    }

    pub fn hidden_units(&self) -> usize {
        self.trunk.hidden_units() + self.heads.iter().map(|h| h.spec.hidden_units()).sum::<usize>()
    }

    fn features_row(&self, x: &[f64], inputs: &mut [f64], dists: &mut [f64]) -> Result<usize> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.normalizer.apply(x, inputs);
        for (i, d) in dists.iter_mut().enumerate() {
            *d = self.constraints.region_distance(i, x)?;
        }
        let key = self.constraints.key_of(x)?;
        self.partition
            .position(&key)
            .ok_or_else(|| Error::PartitionIntegrity(key.to_string()))
    }

    pub fn features(&self, xs: ArrayView2<'_, f64>) -> Result<Features> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: xs.ncols(),
            });
        }
        let n = xs.nrows();
        let dim = self.input_dim();
        let c = self.constraints.len();
        let rows: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..n)
            .into_par_iter()
            .map(|r| {
                let x = xs.row(r).to_vec();
                let mut inputs = vec![0.0; dim];
                let mut dists = vec![0.0; c];
                let fb = self.features_row(&x, &mut inputs, &mut dists)?;
                Ok((inputs, dists, fb))
            })
            .collect::<Result<_>>()?;
        let mut inputs = Array2::zeros((n, dim));
        let mut dists = Array2::zeros((n, c));
        let mut fallback = Vec::with_capacity(n);
        for (r, (i, d, f)) in rows.into_iter().enumerate() {
            inputs.row_mut(r).assign(&ndarray::aview1(&i));
            dists.row_mut(r).assign(&ndarray::aview1(&d));
            fallback.push(f);
        }
        Ok(Features {
            inputs,
            dists,
            fallback,
        })
    }

    /// Records the forward pass for every row of `feats` on `tape`, which
    /// must have been created over this model's parameter vector.
    pub fn record(&self, tape: &mut Tape<'_>, feats: &Features) -> Result<Recorded> {
        if !std::ptr::eq(tape.params(), self.params.values()) {
            return Err(Error::Precondition("tape was created over a different parameter vector".into()));
        }
        let rows = feats.rows();
        let leaf = tape.leaf(feats.inputs.clone());
        let latent = tape.dense(&self.trunk, 0, leaf)?;
        let proximities: Vec<NodeId> = (0..self.constraints.len())
            .map(|i| tape.proximity(self.proximity_offset + 2 * i, feats.dists.column(i).to_vec()))
            .collect::<Result<_>>()?;
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for (h, &off) in self.heads.iter().zip(&self.head_offsets) {
            let raw = tape.dense(&h.spec, off, latent)?;
            heads.push(tape.project(raw, &h.codomain)?);
            let factors = proximities
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, h.key.bit(i)))
                .collect();
            weights.push(tape.overlap_weight(factors, rows)?);
        }
        let output = tape.combine(weights.clone(), heads.clone(), feats.fallback.clone())?;
        Ok(Recorded {
            output,
            heads,
            weights,
            proximities,
        })
    }

    fn chunks(rows: usize) -> Vec<Range<usize>> {
        (0..rows)
            .step_by(CHUNK_ROWS)
            .map(|start| start..(start + CHUNK_ROWS).min(rows))
            .collect()
    }

    pub fn predict_features(&self, feats: &Features) -> Result<Array2<f64>> {
        let parts: Vec<Array2<f64>> = Self::chunks(feats.rows())
            .into_par_iter()
            .map(|range| {
                let chunk = feats.slice(range);
                let mut tape = Tape::new(self.params.values());
                let rec = self.record(&mut tape, &chunk)?;
                Ok(tape.value(rec.output).clone())
            })
            .collect::<Result<_>>()?;
        concat_rows(parts, self.output_dim())
    }

    /// `F(x)` for every row of `xs`.
    pub fn predict(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.predict_features(&self.features(xs)?)
    }

    pub fn safe_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        Ok(self.predict(xs)?.row(0).to_vec())
    }

    /// `G_b(x)` for the head of `key`.
    pub fn constrained_forward(&self, key: &OverlapKey, x: &[f64]) -> Result<Vec<f64>> {
        let pos = self
            .partition
            .position(key)
            .ok_or_else(|| Error::PartitionIntegrity(key.to_string()))?;
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut inputs = vec![0.0; x.len()];
        self.normalizer.apply(x, &mut inputs);
        let head = &self.heads[pos];
        let mut tape = Tape::new(self.params.values());
        let leaf = tape.leaf_rows(&[&inputs])?;
        let latent = tape.dense(&self.trunk, 0, leaf)?;
        let raw = tape.dense(&head.spec, self.head_offsets[pos], latent)?;
        let out = tape.project(raw, &head.codomain)?;
        Ok(tape.value(out).row(0).to_vec())
    }

    pub fn proximities_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.constraints.len())
            .map(|i| self.proximity(i).eval(self.constraints.region_distance(i, x)?))
            .collect()
    }

    /// Output, every head's output, weights and proximities for each row.
    pub fn evaluate_detailed(&self, xs: ArrayView2<'_, f64>) -> Result<Detailed> {
        let feats = self.features(xs)?;
        let k = self.heads.len();
        let c = self.constraints.len();
        let parts: Vec<(Array2<f64>, Vec<Array2<f64>>, Array2<f64>, Array2<f64>)> = Self::chunks(feats.rows())
            .into_par_iter()
            .map(|range| {
                let chunk = feats.slice(range);
                let rows = chunk.rows();
                let mut tape = Tape::new(self.params.values());
                let rec = self.record(&mut tape, &chunk)?;
                let heads = rec.heads.iter().map(|&h| tape.value(h).clone()).collect();
                let mut w = Array2::zeros((rows, k));
                for (b, &id) in rec.weights.iter().enumerate() {
                    w.column_mut(b).assign(&tape.value(id).column(0));
                }
                let mut p = Array2::zeros((rows, c));
                for (i, &id) in rec.proximities.iter().enumerate() {
                    p.column_mut(i).assign(&tape.value(id).column(0));
                }
                Ok((tape.value(rec.output).clone(), heads, w, p))
            })
            .collect::<Result<_>>()?;
        let mut outputs = Vec::new();
        let mut heads: Vec<Vec<Array2<f64>>> = vec![Vec::new(); k];
        let mut weights = Vec::new();
        let mut proximities = Vec::new();
        for (o, hs, w, p) in parts {
            outputs.push(o);
            for (b, h) in hs.into_iter().enumerate() {
                heads[b].push(h);
            }
            weights.push(w);
            proximities.push(p);
        }
        let out_dim = self.output_dim();
        Ok(Detailed {
            output: concat_rows(outputs, out_dim)?,
            heads: heads
                .into_iter()
                .map(|h| concat_rows(h, out_dim))
                .collect::<Result<_>>()?,
            weights: concat_rows(weights, k)?,
            proximities: concat_rows(proximities, c)?,
        })
    }

    /// Partition, head codomains and sizes as JSON.
    pub fn describe(&self) -> serde_json::Value {
        let heads: Vec<serde_json::Value> = self
            .heads
            .iter()
            .map(|h| {
                serde_json::json!({
                    "key": h.key.to_string(),
                    "codomain": h.codomain,
                    "layer_dims": h.spec.layer_dims,
                    "params": h.spec.param_count(),
                    "nodes": h.spec.hidden_units(),
                })
            })
            .collect();
        serde_json::json!({
            "kind": self.kind,
            "constraints": self.constraints.len(),
            "k": self.partition.k(),
            "keys": self.partition.keys().iter().map(ToString::to_string).collect::<Vec<_>>(),
            "trunk": {
                "layer_dims": self.trunk.layer_dims,
                "params": self.trunk.param_count(),
                "nodes": self.trunk.hidden_units(),
            },
            "heads": heads,
            "proximity_params": 2 * self.constraints.len(),
            "network_params": self.network_param_count(),
            "total_params": self.params.len(),
            "nodes": self.hidden_units(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let net = self.network_param_count();
        let proximity_params = self
            .constraints
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), self.proximity(i)))
            .collect();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            input_normalizer: self.normalizer.clone(),
            trunk_spec: self.trunk.clone(),
            head_specs: self.heads.clone(),
            params: self.params.values()[..net].to_vec(),
            proximity_params,
            constraint_spec_hash: self.constraint_hash.clone(),
        };
        if file.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("cannot serialize non-finite parameters".into()));
        }
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Loads a model and binds it to `constraints`, refusing files built
    /// against a different constraint set or with tampered head codomains.
    pub fn from_json(text: &str, constraints: &ConstraintSet) -> Result<Self> {
        let probe: VersionProbe = from_json_str(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: MODEL_FORMAT_VERSION,
                found: probe.format_version,
            });
        }
        let file: ModelFile = from_json_str(text)?;
        constraints.validate()?;
        let found = constraints.content_hash()?;
        if file.constraint_spec_hash != found {
            return Err(Error::HashMismatch {
                expected: file.constraint_spec_hash,
                found,
            });
        }
        let internal = match file.kind {
            ModelKind::Safe => constraints.clone(),
            ModelKind::Standard => constraints.without_constraints(),
        };
        let partition = internal.partition()?;
        let codomains = head_codomains(&internal, &partition)?;
        if file.head_specs.len() != partition.k() {
            return Err(Error::Spec(format!(
                "model has {} heads but the constraints induce {}",
                file.head_specs.len(),
                partition.k()
            )));
        }
        for (i, (h, (key, codomain))) in file
            .head_specs
            .iter()
            .zip(partition.keys().iter().zip(&codomains))
            .enumerate()
        {
            if h.key != *key || h.codomain != *codomain {
                return Err(Error::Spec(format!(
                    "head_specs[{i}] ({}) does not match the constraint partition",
                    h.key
                )));
            }
            check_architecture(&internal, &file.trunk_spec, &h.spec)?;
        }
        let dim = internal.input_dim();
        if file.input_normalizer.center.len() != dim || file.input_normalizer.half_width.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: file.input_normalizer.center.len(),
            });
        }
        let (mut params, head_offsets, proximity_offset) = layout(&file.trunk_spec, &file.head_specs, &internal);
        let net = params.len() - 2 * internal.len();
        if file.params.len() != net {
            return Err(Error::DimensionMismatch {
                expected: net,
                got: file.params.len(),
            });
        }
        params.values_mut()[..net].copy_from_slice(&file.params);
        if file.proximity_params.len() != internal.len() {
            return Err(Error::Spec("proximity parameters do not match the constraints".into()));
        }
        for (i, c) in internal.constraints.iter().enumerate() {
            let p = file
                .proximity_params
                .get(&c.name)
                .ok_or_else(|| Error::Spec(format!("missing proximity parameters for {:?}", c.name)))?;
            params.values_mut()[proximity_offset + 2 * i] = p.a;
            params.values_mut()[proximity_offset + 2 * i + 1] = p.b;
        }
        Ok(Self {
            kind: file.kind,
            constraints: internal,
            constraint_hash: file.constraint_spec_hash,
            partition,
            normalizer: file.input_normalizer,
            trunk: file.trunk_spec,
            heads: file.head_specs,
            params,
            head_offsets,
            proximity_offset,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, constraints: &ConstraintSet) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, constraints)
    }
}

fn concat_rows(parts: Vec<Array2<f64>>, cols: usize) -> Result<Array2<f64>> {
    if parts.is_empty() {
        return Ok(Array2::zeros((0, cols)));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Precondition(e.to_string()))
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    input_normalizer: InputNormalizer,
    trunk_spec: DenseNetSpec,
    head_specs: Vec<HeadSpec>,
    params: Vec<f64>,
    proximity_params: BTreeMap<String, ProximityParams>,
    constraint_spec_hash: String,
}

#[cfg(test)]
mod tests;
