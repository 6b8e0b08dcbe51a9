//! Synthetic regression problems with one or two interval-style constraints.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constraints::{AxisBox, ConstraintSet, ConstraintSpec, ConvexOutputSet, InputRegion};
use crate::error::{Error, Result};
use crate::training::Dataset;

pub fn truth_1d(x: f64) -> f64 {
    (2.0 * x).tanh()
}

pub fn truth_2d(x1: f64, x2: f64) -> f64 {
    (0.5 + 0.4 * (2.0 * PI * x1).sin() * (2.0 * PI * x2).sin()).clamp(0.0, 1.0)
}

fn boxed(bounds: &[[f64; 2]]) -> Result<InputRegion> {
    Ok(InputRegion::single(AxisBox::new(bounds.to_vec())?))
}

/// `x > 0 => y > 0` on the domain `[-2, 2]`.
pub fn constraints_1d() -> Result<ConstraintSet> {
    ConstraintSet::new(
        boxed(&[[-2.0, 2.0]])?,
        vec![1.0],
        1,
        vec![ConstraintSpec {
            name: "positive".into(),
            region: boxed(&[[0.0, 2.0]])?,
            output: ConvexOutputSet::HalfLineAbove { lo: 0.0 },
        }],
    )
}

/// Two overlapping boxes on `[0, 1]^2` with interval bounds.
pub fn constraints_2d() -> Result<ConstraintSet> {
    ConstraintSet::new(
        boxed(&[[0.0, 1.0], [0.0, 1.0]])?,
        vec![1.0, 1.0],
        1,
        vec![
            ConstraintSpec {
                name: "a1".into(),
                region: boxed(&[[0.1, 0.45], [0.3, 0.7]])?,
                output: ConvexOutputSet::Interval { lo: 0.7, hi: 1.0 },
            },
            ConstraintSpec {
                name: "a2".into(),
                region: boxed(&[[0.35, 0.7], [0.3, 0.7]])?,
                output: ConvexOutputSet::Interval { lo: 0.5, hi: 0.8 },
            },
        ],
    )
}

/// `x ~ U[-2, 2]`, `y = tanh(2x) + 0.05 * noise`.
pub fn gen_synthetic_1d(n: usize, seed: u64) -> Result<(Dataset, ConstraintSet)> {
    if n < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, 1));
    let mut targets = Array2::zeros((n, 1));
    for r in 0..n {
        let x: f64 = rng.random_range(-2.0..=2.0);
        let noise: f64 = rng.sample(StandardNormal);
        inputs[[r, 0]] = x;
        targets[[r, 0]] = truth_1d(x) + 0.05 * noise;
    }
    Ok((Dataset::new(inputs, targets, None)?, constraints_1d()?))
}

/// `x ~ U[0, 1]^2`, `y = clip(0.5 + 0.4 sin(2 pi x1) sin(2 pi x2)) + 0.02 * noise`.
pub fn gen_synthetic_2d(n: usize, seed: u64) -> Result<(Dataset, ConstraintSet)> {
    if n < 4 {
        return Err(Error::Precondition(format!("need at least 4 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, 2));
    let mut targets = Array2::zeros((n, 1));
    for r in 0..n {
        let x1: f64 = rng.random_range(0.0..=1.0);
        let x2: f64 = rng.random_range(0.0..=1.0);
        let noise: f64 = rng.sample(StandardNormal);
        inputs[[r, 0]] = x1;
        inputs[[r, 1]] = x2;
        targets[[r, 0]] = truth_2d(x1, x2) + 0.02 * noise;
    }
    Ok((Dataset::new(inputs, targets, None)?, constraints_2d()?))
}
