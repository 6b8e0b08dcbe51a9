//! Overlap keys and exact enumeration of the non-empty overlap regions.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::region::InputRegion;
use super::ConstraintSpec;
use crate::error::{Error, Result};

pub const MAX_CONSTRAINTS: usize = 64;

/// Membership pattern across `c` input regions; bit `i` is set iff the point
/// lies in region `i`. Displayed with constraint 0 first, e.g. `"10"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OverlapKey {
    bits: u64,
    len: u8,
}

impl OverlapKey {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len > MAX_CONSTRAINTS {
            return Err(Error::Spec(format!(
                "at most {MAX_CONSTRAINTS} constraints are supported, got {len}"
            )));
        }
        if len < MAX_CONSTRAINTS && bits >> len != 0 {
            return Err(Error::Spec(format!("key bits {bits:#b} exceed length {len}")));
        }
        Ok(Self { bits, len: len as u8 })
    }

    pub fn from_membership(members: &[bool]) -> Result<Self> {
        let bits = members
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &m)| if m { acc | (1 << i) } else { acc });
        Self::new(bits, members.len())
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    /// Indices of the constraints that apply on this overlap region.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.bit(i))
    }
}

impl fmt::Display for OverlapKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for OverlapKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let members = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Spec(format!("invalid overlap key character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_membership(&members)
    }
}

impl Serialize for OverlapKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OverlapKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The ordered set of keys whose overlap regions are non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPartition {
    constraint_count: usize,
    keys: Vec<OverlapKey>,
    index: HashMap<u64, usize>,
}

impl OverlapPartition {
    pub fn from_keys(constraint_count: usize, keys: impl IntoIterator<Item = OverlapKey>) -> Result<Self> {
        let mut sorted: Vec<OverlapKey> = keys.into_iter().collect();
        for key in &sorted {
            if key.len() != constraint_count {
                return Err(Error::DimensionMismatch {
                    expected: constraint_count,
                    got: key.len(),
                });
            }
        }
        sorted.sort_by_key(|k| k.to_string());
        sorted.dedup();
        if sorted.is_empty() {
            return Err(Error::Spec("partition must contain at least one key".into()));
        }
        let index = sorted.iter().enumerate().map(|(i, k)| (k.bits, i)).collect();
        Ok(Self {
            constraint_count,
            keys: sorted,
            index,
        })
    }

    /// Number of non-empty overlap regions.
    pub fn k(&self) -> usize {
        self.keys.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraint_count
    }

    pub fn keys(&self) -> &[OverlapKey] {
        &self.keys
    }

    pub fn position(&self, key: &OverlapKey) -> Option<usize> {
        self.index.get(&key.bits).copied()
    }
}

/// Membership key of `x` with respect to `constraints`.
pub fn overlap_key_of(constraints: &[ConstraintSpec], x: &[f64]) -> Result<OverlapKey> {
    let members = constraints
        .iter()
        .map(|c| c.region.contains(x))
        .collect::<Result<Vec<_>>>()?;
    OverlapKey::from_membership(&members)
}

/// Exact enumeration of the overlap partition of `domain`.
///
/// Every box face contributes a breakpoint per dimension. Membership in a
/// closed box is constant on each open interval between consecutive
/// breakpoints and at each breakpoint itself, so evaluating the membership
/// pattern at every breakpoint and every midpoint (in all combinations)
/// visits every distinct key, including keys that only occur on shared faces.
pub fn enumerate_overlaps(constraints: &[ConstraintSpec], domain: &InputRegion) -> Result<OverlapPartition> {
    enumerate(constraints, domain, true)
}

/// Enumeration restricted to full-dimensional cells of the arrangement.
///
/// Keys that only occur on lower-dimensional faces (regions meeting only on
/// their boundaries) are omitted. The resulting partition does not cover
/// those faces; it exists to reproduce that construction, not for building
/// production predictors.
pub fn enumerate_overlaps_interior(
    constraints: &[ConstraintSpec],
    domain: &InputRegion,
) -> Result<OverlapPartition> {
    enumerate(constraints, domain, false)
}

fn enumerate(constraints: &[ConstraintSpec], domain: &InputRegion, include_faces: bool) -> Result<OverlapPartition> {
    let c = constraints.len();
    if c > MAX_CONSTRAINTS {
        return Err(Error::Spec(format!(
            "at most {MAX_CONSTRAINTS} constraints are supported, got {c}"
        )));
    }
    let dim = domain.dim();
    for spec in constraints {
        if spec.region.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: spec.region.dim(),
            });
        }
    }
    let bbox = domain.bounding_box();

    let regions = constraints.iter().map(|s| &s.region).chain(std::iter::once(domain));
    let coords: Vec<Vec<f64>> = (0..dim)
        .map(|d| {
            let (dlo, dhi) = (bbox.lo(d), bbox.hi(d));
            let mut breaks: Vec<f64> = regions
                .clone()
                .flat_map(|r| r.boxes().iter().flat_map(move |b| [b.lo(d), b.hi(d)]))
                .filter(|v| (dlo..=dhi).contains(v))
                .collect();
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            candidate_coordinates(&breaks, include_faces)
        })
        .collect();

    let shape: Vec<usize> = coords.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut masks = vec![0u64; total];
    let mut in_domain = vec![false; total];

    for b in domain.boxes() {
        if let Some(ranges) = index_ranges(b, &coords) {
            for_each_cell(&ranges, &shape, |flat| in_domain[flat] = true);
        }
    }
    for (i, spec) in constraints.iter().enumerate() {
        for b in spec.region.boxes() {
            if let Some(ranges) = index_ranges(b, &coords) {
                for_each_cell(&ranges, &shape, |flat| masks[flat] |= 1 << i);
            }
        }
    }

    let seen: BTreeSet<u64> = masks
        .iter()
        .zip(&in_domain)
        .filter(|(_, &inside)| inside)
        .map(|(&m, _)| m)
        .collect();
    let keys = seen
        .into_iter()
        .map(|bits| OverlapKey::new(bits, c))
        .collect::<Result<Vec<_>>>()?;
    OverlapPartition::from_keys(c, keys)
}

fn candidate_coordinates(breaks: &[f64], include_faces: bool) -> Vec<f64> {
    if breaks.len() < 2 {
        return breaks.to_vec();
    }
    let mut out = Vec::with_capacity(2 * breaks.len());
    for (i, &b) in breaks.iter().enumerate() {
        if include_faces {
            out.push(b);
        }
        if let Some(&next) = breaks.get(i + 1) {
            out.push(0.5 * (b + next));
        }
    }
    out
}

/// Inclusive index ranges of candidate coordinates covered by a box.
fn index_ranges(b: &super::AxisBox, coords: &[Vec<f64>]) -> Option<Vec<(usize, usize)>> {
    coords
        .iter()
        .enumerate()
        .map(|(d, cs)| {
            let first = cs.partition_point(|&v| v < b.lo(d));
            let end = cs.partition_point(|&v| v <= b.hi(d));
            (first < end).then_some((first, end - 1))
        })
        .collect()
}

fn for_each_cell(ranges: &[(usize, usize)], shape: &[usize], mut visit: impl FnMut(usize)) {
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        let flat = idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i);
        visit(flat);
        // Odometer increment, last dimension fastest.
        let mut d = ranges.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if idx[d] < ranges[d].1 {
                idx[d] += 1;
                break;
            }
            idx[d] = ranges[d].0;
        }
    }
}
