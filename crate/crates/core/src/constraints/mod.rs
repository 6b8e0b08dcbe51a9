//! Input regions, convex output sets, constraint files and overlap partitions.

mod output;
mod overlap;
mod region;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use output::{intersect_output_sets, ConvexOutputSet};
pub(crate) use output::safe_minimum;
pub use overlap::{
    enumerate_overlaps, enumerate_overlaps_interior, overlap_key_of, OverlapKey, OverlapPartition,
    MAX_CONSTRAINTS,
};
pub use region::{AxisBox, InputRegion};

use crate::error::{from_json_str, Error, Result};

pub const CONSTRAINT_FORMAT_VERSION: u32 = 1;

/// One input-output requirement: inputs in `region` must map into `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub name: String,
    pub region: InputRegion,
    pub output: ConvexOutputSet,
}

/// A versioned collection of constraints over a declared input domain.
///
/// `distance_scale` weights each input dimension when measuring distances to
/// constraint regions, so heterogeneous units can be put on a common footing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub format_version: u32,
    pub domain: InputRegion,
    pub distance_scale: Vec<f64>,
    pub output_dim: usize,
    pub constraints: Vec<ConstraintSpec>,
}

impl ConstraintSet {
    pub fn new(
        domain: InputRegion,
        distance_scale: Vec<f64>,
        output_dim: usize,
        constraints: Vec<ConstraintSpec>,
    ) -> Result<Self> {
        let set = Self {
            format_version: CONSTRAINT_FORMAT_VERSION,
            domain,
            distance_scale,
            output_dim,
            constraints,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONSTRAINT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: CONSTRAINT_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        let dim = self.domain.dim();
        if self.distance_scale.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.distance_scale.len(),
            });
        }
        if self.distance_scale.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Spec("distance scale weights must be positive".into()));
        }
        if self.output_dim == 0 {
            return Err(Error::Spec("output dimension must be positive".into()));
        }
        if self.constraints.len() > MAX_CONSTRAINTS {
            return Err(Error::Spec(format!(
                "at most {MAX_CONSTRAINTS} constraints are supported"
            )));
        }
        let mut names = HashSet::new();
        for c in &self.constraints {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Spec(format!("duplicate constraint name {:?}", c.name)));
            }
            if c.region.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.region.dim(),
                });
            }
            c.output.validate_for_dim(self.output_dim)?;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// The same domain and scaling with no constraints attached.
    pub fn without_constraints(&self) -> Self {
        Self {
            constraints: Vec::new(),
            ..self.clone()
        }
    }

    pub fn region_distance(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.constraints[i].region.distance(x, &self.distance_scale)
    }

    pub fn key_of(&self, x: &[f64]) -> Result<OverlapKey> {
        overlap_key_of(&self.constraints, x)
    }

    pub fn partition(&self) -> Result<OverlapPartition> {
        enumerate_overlaps(&self.constraints, &self.domain)
    }

    /// Output set shared by every constraint active under `key`.
    pub fn codomain(&self, key: &OverlapKey) -> Result<ConvexOutputSet> {
        let set = intersect_output_sets(key.active().map(|i| &self.constraints[i].output))?;
        set.validate_for_dim(self.output_dim)?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = from_json_str(text)?;
        set.validate()?;
        Ok(set)
    }

    /// Hex SHA-256 of the canonical (compact) JSON encoding.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> ConstraintSet {
        let domain = InputRegion::single(AxisBox::new(vec![[0.0, 1.0], [0.0, 1.0]]).unwrap());
        let a = ConstraintSpec {
            name: "a".into(),
            region: InputRegion::single(AxisBox::new(vec![[0.1, 0.45], [0.3, 0.7]]).unwrap()),
            output: ConvexOutputSet::Interval { lo: 0.7, hi: 1.0 },
        };
        let b = ConstraintSpec {
            name: "b".into(),
            region: InputRegion::single(AxisBox::new(vec![[0.35, 0.7], [0.3, 0.7]]).unwrap()),
            output: ConvexOutputSet::Interval { lo: 0.5, hi: 0.8 },
        };
        ConstraintSet::new(domain, vec![1.0, 1.0], 1, vec![a, b]).unwrap()
    }

    #[test]
    fn json_round_trip_and_hash_stability() {
        let set = sample_set();
        let back = ConstraintSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.content_hash().unwrap(), set.content_hash().unwrap());
        let mut other = set.clone();
        other.constraints[0].name = "renamed".into();
        assert_ne!(other.content_hash().unwrap(), set.content_hash().unwrap());
    }

    #[test]
    fn parse_errors_name_the_path() {
        let mut value: serde_json::Value = serde_json::from_str(&sample_set().to_json().unwrap()).unwrap();
        value["constraints"][1]["output"]["params"]["lo"] = serde_json::json!("high");
        let err = ConstraintSet::from_json(&value.to_string()).unwrap_err();
        match err {
            Error::Parse { path, .. } => assert!(path.starts_with("constraints[1].output"), "{path}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn version_and_duplicate_checks() {
        let mut set = sample_set();
        set.format_version = 99;
        assert!(matches!(set.validate(), Err(Error::FormatVersion { found: 99, .. })));
        let mut dup = sample_set();
        dup.constraints[1].name = "a".into();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn codomains_follow_active_constraints() {
        let set = sample_set();
        let both: OverlapKey = "11".parse().unwrap();
        assert_eq!(set.codomain(&both).unwrap(), ConvexOutputSet::Interval { lo: 0.7, hi: 0.8 });
        let none: OverlapKey = "00".parse().unwrap();
        assert_eq!(set.codomain(&none).unwrap(), ConvexOutputSet::Unconstrained);
    }
}
