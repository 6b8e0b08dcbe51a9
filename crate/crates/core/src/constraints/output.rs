//! Convex output sets and the differentiable maps that project into them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logistic, softplus};

/// A convex subset of the output space.
///
/// Bound variants (`Interval`, `HalfLineAbove`, `HalfLineBelow`) constrain
/// every output coordinate. `ScoreNotHighest` pins each unsafe coordinate to
/// `epsilon` below the minimum of the remaining coordinates, which keeps the
/// unsafe scores lowest (and therefore never the highest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params")]
pub enum ConvexOutputSet {
    Interval { lo: f64, hi: f64 },
    HalfLineAbove { lo: f64 },
    HalfLineBelow { hi: f64 },
    ScoreNotHighest { unsafe_indices: Vec<usize>, epsilon: f64 },
    Unconstrained,
}

/// Lower and upper bounds with infinities for open sides.
fn bounds_of(set: &ConvexOutputSet) -> Option<(f64, f64)> {
    match *set {
        ConvexOutputSet::Interval { lo, hi } => Some((lo, hi)),
        ConvexOutputSet::HalfLineAbove { lo } => Some((lo, f64::INFINITY)),
        ConvexOutputSet::HalfLineBelow { hi } => Some((f64::NEG_INFINITY, hi)),
        _ => None,
    }
}

fn from_bounds(lo: f64, hi: f64) -> Result<ConvexOutputSet> {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) if lo < hi => Ok(ConvexOutputSet::Interval { lo, hi }),
        (true, true) => Err(Error::Unsatisfiable(format!(
            "interval intersection [{lo}, {hi}] is empty"
        ))),
        (true, false) => Ok(ConvexOutputSet::HalfLineAbove { lo }),
        (false, true) => Ok(ConvexOutputSet::HalfLineBelow { hi }),
        (false, false) => Ok(ConvexOutputSet::Unconstrained),
    }
}

impl ConvexOutputSet {
    pub fn score_not_highest(mut unsafe_indices: Vec<usize>, epsilon: f64) -> Self {
        unsafe_indices.sort_unstable();
        unsafe_indices.dedup();
        ConvexOutputSet::ScoreNotHighest {
            unsafe_indices,
            epsilon,
        }
    }

    /// Structural checks: bounds finite and ordered, epsilon positive.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexOutputSet::Interval { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::Spec(format!("interval requires lo < hi, got ({lo}, {hi})")));
                }
            }
            ConvexOutputSet::HalfLineAbove { lo: b } | ConvexOutputSet::HalfLineBelow { hi: b } => {
                if !b.is_finite() {
                    return Err(Error::Spec("half-line bound must be finite".into()));
                }
            }
            ConvexOutputSet::ScoreNotHighest {
                unsafe_indices,
                epsilon,
            } => {
                if unsafe_indices.is_empty() {
                    return Err(Error::Spec("score constraint needs at least one index".into()));
                }
                if !(*epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(Error::Spec(format!("epsilon must be positive, got {epsilon}")));
                }
            }
            ConvexOutputSet::Unconstrained => {}
        }
        Ok(())
    }

    /// Checks the set is non-empty within an output space of dimension `dim`.
    pub fn validate_for_dim(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if let ConvexOutputSet::ScoreNotHighest { unsafe_indices, .. } = self {
            if let Some(&i) = unsafe_indices.iter().find(|&&i| i >= dim) {
                return Err(Error::Spec(format!(
                    "unsafe index {i} out of range for output dimension {dim}"
                )));
            }
            if unsafe_indices.len() >= dim {
                return Err(Error::Unsatisfiable(format!(
                    "all {dim} output coordinates are marked unsafe"
                )));
            }
        }
        Ok(())
    }

    /// Differentiable map from a raw latent vector into the set.
    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.validate_for_dim(raw.len())?;
        let out = match self {
            ConvexOutputSet::Interval { lo, hi } => raw
                .iter()
                .map(|&z| lo + (hi - lo) * logistic(z))
                .collect(),
            ConvexOutputSet::HalfLineAbove { lo } => raw.iter().map(|&z| lo + softplus(z)).collect(),
            ConvexOutputSet::HalfLineBelow { hi } => raw.iter().map(|&z| hi - softplus(-z)).collect(),
            ConvexOutputSet::ScoreNotHighest {
                unsafe_indices,
                epsilon,
            } => {
                let floor = safe_minimum(raw, unsafe_indices).0;
                let mut y = raw.to_vec();
                for &i in unsafe_indices {
                    y[i] = floor - epsilon;
                }
                y
            }
            ConvexOutputSet::Unconstrained => raw.to_vec(),
        };
        Ok(out)
    }

    /// Exact set membership, with `tol` slack on bound and equality checks.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        match self {
            ConvexOutputSet::ScoreNotHighest {
                unsafe_indices,
                epsilon,
            } => {
                if unsafe_indices.iter().any(|&i| i >= y.len()) || unsafe_indices.len() >= y.len() {
                    return false;
                }
                let target = safe_minimum(y, unsafe_indices).0 - epsilon;
                unsafe_indices.iter().all(|&i| (y[i] - target).abs() <= tol)
            }
            ConvexOutputSet::Unconstrained => y.iter().all(|v| !v.is_nan()),
            _ => self.margin(y, tol).is_some_and(|m| m >= 0.0),
        }
    }

    /// Signed safety margin of `y`; negative means the constraint is violated.
    ///
    /// Bound variants report the distance to the nearest bound plus `tol`.
    /// `ScoreNotHighest` reports how far the highest unsafe score sits below
    /// the overall maximum; a zero margin (a tie for highest) is a violation,
    /// which `admits` accounts for.
    pub fn margin(&self, y: &[f64], tol: f64) -> Option<f64> {
        if y.iter().any(|v| v.is_nan()) {
            return Some(f64::NEG_INFINITY);
        }
        match self {
            ConvexOutputSet::Unconstrained => None,
            ConvexOutputSet::ScoreNotHighest { unsafe_indices, .. } => {
                let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let worst = unsafe_indices
                    .iter()
                    .filter_map(|&i| y.get(i).copied())
                    .fold(f64::NEG_INFINITY, f64::max);
                Some(max - worst)
            }
            other => {
                let (lo, hi) = bounds_of(other).expect("bound variant");
                let m = y
                    .iter()
                    .map(|&v| (v - lo).min(hi - v))
                    .fold(f64::INFINITY, f64::min);
                Some(m + tol)
            }
        }
    }

    /// Whether `y` satisfies the constraint this set enforces.
    ///
    /// For bound variants this is membership with `tol` slack. For
    /// `ScoreNotHighest` it is the original requirement: no unsafe score may
    /// reach the maximum score.
    pub fn admits(&self, y: &[f64], tol: f64) -> bool {
        match self {
            ConvexOutputSet::Unconstrained => !y.iter().any(|v| v.is_nan()),
            ConvexOutputSet::ScoreNotHighest { .. } => self.margin(y, tol).is_some_and(|m| m > 0.0),
            _ => self.margin(y, tol).is_some_and(|m| m >= 0.0),
        }
    }

    /// Convex intersection of two sets.
    pub fn intersect(&self, other: &ConvexOutputSet) -> Result<ConvexOutputSet> {
        use ConvexOutputSet::*;
        match (self, other) {
            (Unconstrained, s) | (s, Unconstrained) => Ok(s.clone()),
            (
                ScoreNotHighest {
                    unsafe_indices: a,
                    epsilon: ea,
                },
                ScoreNotHighest {
                    unsafe_indices: b,
                    epsilon: eb,
                },
            ) => {
                let merged: Vec<usize> = a.iter().chain(b).copied().collect();
                Ok(ConvexOutputSet::score_not_highest(merged, ea.max(*eb)))
            }
            (ScoreNotHighest { .. }, _) | (_, ScoreNotHighest { .. }) => Err(Error::Spec(
                "score constraints cannot be combined with bound constraints".into(),
            )),
            (a, b) => {
                let (alo, ahi) = bounds_of(a).expect("bound variant");
                let (blo, bhi) = bounds_of(b).expect("bound variant");
                from_bounds(alo.max(blo), ahi.min(bhi))
            }
        }
    }
}

/// Minimum over coordinates outside `unsafe_indices` and the index attaining
/// it; ties go to the lowest index. `unsafe_indices` must be sorted.
pub(crate) fn safe_minimum(y: &[f64], unsafe_indices: &[usize]) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (j, &v) in y.iter().enumerate() {
        if unsafe_indices.binary_search(&j).is_ok() {
            continue;
        }
        if best.1 == usize::MAX || v < best.0 {
            best = (v, j);
        }
    }
    best
}

/// Intersection of a list of sets; the empty list yields `Unconstrained`.
pub fn intersect_output_sets<'a>(sets: impl IntoIterator<Item = &'a ConvexOutputSet>) -> Result<ConvexOutputSet> {
    sets.into_iter()
        .try_fold(ConvexOutputSet::Unconstrained, |acc, s| acc.intersect(s))
}
