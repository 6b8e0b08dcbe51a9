//! Input regions as finite unions of closed axis-aligned boxes.
//!
//! Membership is boundary-inclusive. Distances are scaled Euclidean distances
//! computed by clamping per dimension, so a point has distance zero exactly
//! when it lies in some box. Regions with many boxes are searched through a
//! small bounding-volume hierarchy built at construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxisBox {
    bounds: Vec<[f64; 2]>,
}

impl AxisBox {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Spec("box must have at least one dimension".into()));
        }
        for (d, [lo, hi]) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Spec(format!("box bound in dimension {d} is not finite")));
            }
            if lo > hi {
                return Err(Error::Spec(format!(
                    "box interval in dimension {d} has lo {lo} > hi {hi}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Box from per-dimension centers and half-widths.
    pub fn centered(center: &[f64], half_width: &[f64]) -> Result<Self> {
        if center.len() != half_width.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: half_width.len(),
            });
        }
        Self::new(
            center
                .iter()
                .zip(half_width)
                .map(|(c, w)| [c - w, c + w])
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn lo(&self, d: usize) -> f64 {
        self.bounds[d][0]
    }

    pub fn hi(&self, d: usize) -> f64 {
        self.bounds[d][1]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|([lo, hi], &v)| *lo <= v && v <= *hi)
    }

    /// Scaled distance from `x` to the box.
    pub fn distance(&self, x: &[f64], scale: &[f64]) -> f64 {
        scaled_norm(self.bounds.iter().zip(x).zip(scale).map(|(([lo, hi], &v), &w)| {
            w * gap(*lo, *hi, v)
        }))
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    /// Scaled length of the main diagonal.
    pub fn diagonal(&self, scale: &[f64]) -> f64 {
        scaled_norm(self.bounds.iter().zip(scale).map(|([lo, hi], w)| w * (hi - lo)))
    }
}

#[inline]
fn gap(lo: f64, hi: f64, v: f64) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

/// Euclidean norm with max-rescaling so tiny positive gaps never square to zero.
fn scaled_norm(parts: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = parts.clone().fold(0.0f64, |m, p| m.max(p.abs()));
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    let sum: f64 = parts.map(|p| (p / max) * (p / max)).sum();
    max * sum.sqrt()
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vec<f64>,
    hi: Vec<f64>,
    // Range into `order` for leaves, child indices for interior nodes.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

impl Bvh {
    fn build(boxes: &[AxisBox]) -> Self {
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..boxes.len()).collect(),
        };
        bvh.build_node(boxes, 0, boxes.len());
        bvh
    }

    fn build_node(&mut self, boxes: &[AxisBox], start: usize, end: usize) -> usize {
        let dim = boxes[0].dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for d in 0..dim {
                lo[d] = lo[d].min(boxes[i].lo(d));
                hi[d] = hi[d].max(boxes[i].hi(d));
            }
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let ca = boxes[a].lo(axis) + boxes[a].hi(axis);
            let cb = boxes[b].lo(axis) + boxes[b].hi(axis);
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let left = self.build_node(boxes, start, mid);
        let right = self.build_node(boxes, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn node_distance(&self, node: usize, x: &[f64], scale: &[f64]) -> f64 {
        let n = &self.nodes[node];
        scaled_norm(
            n.lo.iter()
                .zip(&n.hi)
                .zip(x)
                .zip(scale)
                .map(|(((lo, hi), &v), &w)| w * gap(*lo, *hi, v)),
        )
    }

    fn node_contains(&self, node: usize, x: &[f64]) -> bool {
        let n = &self.nodes[node];
        n.lo.iter().zip(&n.hi).zip(x).all(|((lo, hi), &v)| *lo <= v && v <= *hi)
    }

    fn contains(&self, boxes: &[AxisBox], x: &[f64]) -> bool {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if !self.node_contains(node, x) {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    if self.order[n.start..n.end].iter().any(|&i| boxes[i].contains(x)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn distance(&self, boxes: &[AxisBox], x: &[f64], scale: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![(0usize, self.node_distance(0, x, scale))];
        while let Some((node, bound)) = stack.pop() {
            if bound >= best {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                Some((l, r)) => {
                    let dl = self.node_distance(l, x, scale);
                    let dr = self.node_distance(r, x, scale);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
                None => {
                    for &i in &self.order[n.start..n.end] {
                        best = best.min(boxes[i].distance(x, scale));
                    }
                    if best == 0.0 {
                        return 0.0;
                    }
                }
            }
        }
        best
    }
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    boxes: Vec<AxisBox>,
}

/// A closed input region: a non-empty finite union of boxes of equal dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct InputRegion {
    boxes: Vec<AxisBox>,
    index: Bvh,
}

impl PartialEq for InputRegion {
    fn eq(&self, other: &Self) -> bool {
        self.boxes == other.boxes
    }
}

impl TryFrom<RegionRepr> for InputRegion {
    type Error = Error;

    fn try_from(repr: RegionRepr) -> Result<Self> {
        InputRegion::new(repr.boxes)
    }
}

impl From<InputRegion> for RegionRepr {
    fn from(region: InputRegion) -> Self {
        RegionRepr { boxes: region.boxes }
    }
}

impl InputRegion {
    pub fn new(boxes: Vec<AxisBox>) -> Result<Self> {
        let Some(first) = boxes.first() else {
            return Err(Error::Spec("input region must contain at least one box".into()));
        };
        let dim = first.dim();
        for b in &boxes {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: b.dim(),
                });
            }
            // Re-validate boxes that arrived through deserialization.
            AxisBox::new(b.bounds.clone())?;
        }
        let index = Bvh::build(&boxes);
        Ok(Self { boxes, index })
    }

    pub fn single(b: AxisBox) -> Self {
        Self::new(vec![b]).expect("a single validated box is a valid region")
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn boxes(&self) -> &[AxisBox] {
        &self.boxes
    }

    /// Smallest box enclosing the whole region.
    pub fn bounding_box(&self) -> AxisBox {
        let root = &self.index.nodes[0];
        AxisBox {
            bounds: root.lo.iter().zip(&root.hi).map(|(&l, &h)| [l, h]).collect(),
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Boundary-inclusive membership.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.index.contains(&self.boxes, x))
    }

    /// Minimum scaled distance from `x` to any box; zero iff `x` is in the region.
    pub fn distance(&self, x: &[f64], scale: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(scale.len())?;
        if let Some(w) = scale.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Precondition(format!(
                "distance scale weights must be positive and finite, got {w}"
            )));
        }
        Ok(self.index.distance(&self.boxes, x, scale))
    }
}
