//! Proximity functions `s(d) = 1 - exp(-(d / sigma1)^sigma2)`.
//!
//! Parameters are stored unconstrained: `sigma1 = exp(a)` and
//! `sigma2 = 1 + exp(b)`, so any real `(a, b)` gives `sigma1 > 0` and
//! `sigma2 > 1`. The function is exactly zero at `d = 0`, which is what makes
//! heads that ignore an active constraint receive zero weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub a: f64,
    pub b: f64,
}

/// Partial derivatives of the proximity value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProximityGrad {
    pub d_a: f64,
    pub d_b: f64,
    pub d_dist: f64,
}

impl ProximityParams {
    pub fn from_sigmas(sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(sigma1 > 0.0) || !sigma1.is_finite() || !(sigma2 > 1.0) || !sigma2.is_finite() {
            return Err(Error::Precondition(format!(
                "proximity needs sigma1 > 0 and sigma2 > 1, got ({sigma1}, {sigma2})"
            )));
        }
        Ok(Self {
            a: sigma1.ln(),
            b: (sigma2 - 1.0).ln(),
        })
    }

    /// Default initialization: `sigma1` at a tenth of `diagonal`, `sigma2 = 2`.
    pub fn initial(diagonal: f64) -> Self {
        Self::from_sigmas(0.1 * diagonal.max(f64::MIN_POSITIVE), 2.0)
            .expect("positive diagonal gives valid sigmas")
    }

    pub fn sigma1(&self) -> f64 {
        self.a.exp()
    }

    pub fn sigma2(&self) -> f64 {
        1.0 + self.b.exp()
    }

    /// Proximity value for distance `d`; in `[0, 1]` and zero iff `d == 0`.
    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::Precondition(format!("distance must be >= 0, got {d}")));
        }
        Ok(self.eval_unchecked(d))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, d: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        let t = (d / self.sigma1()).powf(self.sigma2());
        -(-t).exp_m1()
    }

    /// Analytic gradient through the reparameterization; zero at `d == 0`.
    pub fn grad(&self, d: f64) -> ProximityGrad {
        if !(d > 0.0) {
            return ProximityGrad::default();
        }
        let sigma1 = self.sigma1();
        let sigma2 = self.sigma2();
        let ratio = d / sigma1;
        let t = ratio.powf(sigma2);
        let decay = (-t).exp();
        ProximityGrad {
            d_a: -decay * sigma2 * t,
            d_b: decay * t * ratio.ln() * self.b.exp(),
            d_dist: decay * sigma2 * t / d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Plain evaluation of the closed form, used as the finite-difference target.
    fn reference(a: f64, b: f64, d: f64) -> f64 {
        let sigma1 = a.exp();
        let sigma2 = 1.0 + b.exp();
        1.0 - (-(d / sigma1).powf(sigma2)).exp()
    }

    fn unit_two() -> ProximityParams {
        ProximityParams::from_sigmas(1.0, 2.0).unwrap()
    }

    #[test]
    fn spot_values() {
        let p = unit_two();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert!((p.eval(1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((p.eval(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((1.0 - p.eval(10.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn negative_distance_is_rejected() {
        assert!(unit_two().eval(-1e-9).is_err());
        assert!(unit_two().eval(f64::NAN).is_err());
    }

    #[test]
    fn reparameterization_round_trips() {
        let p = ProximityParams::from_sigmas(0.37, 4.5).unwrap();
        assert!((p.sigma1() - 0.37).abs() < 1e-15);
        assert!((p.sigma2() - 4.5).abs() < 1e-14);
        assert!(ProximityParams::from_sigmas(1.0, 1.0).is_err());
        assert!(ProximityParams::from_sigmas(0.0, 2.0).is_err());
        // Arbitrary raw values always land in the open parameter domain.
        let wild = ProximityParams { a: -40.0, b: -20.0 };
        assert!(wild.sigma1() > 0.0 && wild.sigma2() > 1.0);
    }

    #[test]
    fn gradient_at_zero_distance_vanishes() {
        assert_eq!(unit_two().grad(0.0), ProximityGrad::default());
    }

    #[test]
    fn distance_derivative_spot_value() {
        let g = unit_two().grad(1.0);
        assert!((g.d_dist - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let h = 1e-6;
        let fd = (reference(0.0, 0.0, 1.0 + h) - reference(0.0, 0.0, 1.0 - h)) / (2.0 * h);
        assert!((fd - 0.735_758_882_342_885).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let a = rng.random_range(-1.5..1.5);
            let b = rng.random_range(-1.5..1.5);
            let d = rng.random_range(0.01..10.0);
            let g = ProximityParams { a, b }.grad(d);
            let fd_a = (reference(a + h, b, d) - reference(a - h, b, d)) / (2.0 * h);
            let fd_b = (reference(a, b + h, d) - reference(a, b - h, d)) / (2.0 * h);
            let fd_d = (reference(a, b, d + h) - reference(a, b, d - h)) / (2.0 * h);
            for (analytic, numeric) in [(g.d_a, fd_a), (g.d_b, fd_b), (g.d_dist, fd_d)] {
                let err = (analytic - numeric).abs() / numeric.abs().max(1e-3);
                assert!(err <= 1e-5, "analytic {analytic} vs fd {numeric} at a={a} b={b} d={d}");
            }
        }
    }

    #[test]
    fn monotone_bounded_and_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = ProximityParams {
                a: rng.random_range(-2.0..2.0),
                b: rng.random_range(-2.0..2.0),
            };
            let mut ds: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..20.0)).collect();
            ds.sort_by(f64::total_cmp);
            let vals: Vec<f64> = ds.iter().map(|&d| p.eval(d).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            assert!(vals.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let d = rng.random_range(0.0..5.0);
            let mut prev = f64::INFINITY;
            for k in 1..12 {
                let delta = 10f64.powi(-k);
                let jump = (p.eval(d + delta).unwrap() - p.eval(d).unwrap()).abs();
                assert!(jump <= prev + 1e-15);
                prev = jump;
            }
            assert!(prev < 1e-9);
        }
    }
}
