//! Local randomizers and their calibration.
//!
//! Each report passes through one of three local mechanisms: additive
//! Laplace noise, additive Gaussian noise, or binary randomized response.
//! A [`MechanismSpec`] states the per-user privacy demand
//! `(epsilon, delta)` together with the query sensitivity; [`calibrate`]
//! turns it into a concrete noise scale. The Gaussian scale is calibrated
//! against the exact additive-noise divergence [`gaussian_dp_delta`], not
//! the classical inflated sufficient condition, so downstream probabilities
//! are tight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The supported local randomizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Laplace,
    Gaussian,
    RandomizedResponse,
}

impl MechanismKind {
    /// Stable lowercase name used in CLI output.
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::RandomizedResponse => "rr",
        }
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(MechanismKind::Laplace),
            "gaussian" => Ok(MechanismKind::Gaussian),
            "rr" | "randomized-response" => Ok(MechanismKind::RandomizedResponse),
            other => Err(Error::config(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// A per-user privacy demand: mechanism kind, `(epsilon, delta)` target and
/// query sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl MechanismSpec {
    /// Validates and builds a spec.
    ///
    /// `epsilon` must be strictly positive and finite; `delta` must lie in
    /// `[0, 1)` and must be strictly positive for the Gaussian mechanism
    /// (pure Gaussian DP is unattainable with finite noise); Laplace and
    /// randomized response are pure mechanisms and require `delta == 0`;
    /// `sensitivity` must be strictly positive and finite.
    pub fn new(kind: MechanismKind, epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        if !(delta.is_finite() && (0.0..1.0).contains(&delta)) {
            return Err(Error::config(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::config(format!(
                "sensitivity must be finite and > 0, got {sensitivity}"
            )));
        }
        match kind {
            MechanismKind::Gaussian if delta == 0.0 => Err(Error::config(
                "the Gaussian mechanism requires delta > 0".to_string(),
            )),
            MechanismKind::Laplace | MechanismKind::RandomizedResponse if delta != 0.0 => {
                Err(Error::config(format!(
                    "{} is a pure mechanism and requires delta == 0",
                    kind.name()
                )))
            }
            _ => Ok(MechanismSpec {
                kind,
                epsilon,
                delta,
                sensitivity,
            }),
        }
    }

    /// Pure Laplace spec with unit sensitivity.
    pub fn pure_laplace(epsilon: f64) -> Result<Self> {
        MechanismSpec::new(MechanismKind::Laplace, epsilon, 0.0, 1.0)
    }

    /// Gaussian spec with unit sensitivity.
    pub fn gaussian(epsilon: f64, delta: f64) -> Result<Self> {
        MechanismSpec::new(MechanismKind::Gaussian, epsilon, delta, 1.0)
    }

    /// Binary randomized response spec (sensitivity is fixed at 1).
    pub fn randomized_response(epsilon: f64) -> Result<Self> {
        MechanismSpec::new(MechanismKind::RandomizedResponse, epsilon, 0.0, 1.0)
    }
}

/// A mechanism spec together with the calibrated noise scale.
///
/// For Laplace the scale is the distribution parameter `b`; for Gaussian it
/// is the standard deviation `sigma`; for randomized response it is the
/// flip probability `1 / (1 + e^epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedMechanism {
    spec: MechanismSpec,
    scale: f64,
}

impl CalibratedMechanism {
    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Output density at `z` when the true value is `location`.
    ///
    /// Randomized response has no density on the real line; asking for one
    /// is a caller error.
    pub fn density(&self, location: f64, z: f64) -> Result<f64> {
        Ok(self.log_density(location, z)?.exp())
    }

    /// Natural log of [`Self::density`]; preferred in tail comparisons
    /// where the densities themselves underflow.
    pub fn log_density(&self, location: f64, z: f64) -> Result<f64> {
        match self.spec.kind {
            MechanismKind::Laplace => {
                Ok(-(z - location).abs() / self.scale - (2.0 * self.scale).ln())
            }
            MechanismKind::Gaussian => {
                let u = (z - location) / self.scale;
                Ok(-0.5 * u * u - self.scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
            }
            MechanismKind::RandomizedResponse => Err(Error::config(
                "randomized response has no density on the real line".to_string(),
            )),
        }
    }

    /// Cumulative distribution of the output at `z` when the true value is
    /// `location`.
    pub fn cdf(&self, location: f64, z: f64) -> Result<f64> {
        match self.spec.kind {
            MechanismKind::Laplace => {
                let u = (z - location) / self.scale;
                Ok(if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                })
            }
            MechanismKind::Gaussian => Ok(normal_cdf((z - location) / self.scale)),
            MechanismKind::RandomizedResponse => Err(Error::config(
                "randomized response has no CDF on the real line".to_string(),
            )),
        }
    }
}

/// Standard normal CDF, accurate in both tails via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact hockey-stick divergence of the Gaussian additive-noise pair at
/// shift `sensitivity`:
///
/// `delta(sigma) = Phi(Delta/(2 sigma) - eps sigma/Delta)
///                 - e^eps Phi(-Delta/(2 sigma) - eps sigma/Delta)`.
///
/// This is the tight `delta` achieved by `N(0, sigma^2)` versus
/// `N(Delta, sigma^2)` at log-ratio threshold `eps`, strictly decreasing in
/// `sigma`.
pub fn gaussian_dp_delta(sigma: f64, epsilon: f64, sensitivity: f64) -> f64 {
    let a = sensitivity / (2.0 * sigma);
    let b = epsilon * sigma / sensitivity;
    normal_cdf(a - b) - epsilon.exp() * normal_cdf(-a - b)
}

/// Calibrates the noise scale for a validated spec.
///
/// Laplace: `b = sensitivity / epsilon` in closed form. Gaussian: bisection
/// of [`gaussian_dp_delta`] over `sigma` in
/// `[1e-6 * sensitivity, 1e6 * sensitivity]` to relative width `1e-12` —
/// the divergence is strictly decreasing in `sigma`, so the root is unique.
/// Randomized response: flip probability `1 / (1 + e^epsilon)`.
pub fn calibrate(spec: MechanismSpec) -> Result<CalibratedMechanism> {
    let scale = match spec.kind {
        MechanismKind::Laplace => spec.sensitivity / spec.epsilon,
        MechanismKind::RandomizedResponse => 1.0 / (1.0 + spec.epsilon.exp()),
        MechanismKind::Gaussian => {
            let mut lo = 1e-6 * spec.sensitivity;
            let mut hi = 1e6 * spec.sensitivity;
            let f = |sigma: f64| gaussian_dp_delta(sigma, spec.epsilon, spec.sensitivity);
            if f(lo) < spec.delta {
                // Essentially no noise needed; the demand is weaker than
                // what the smallest bracketed scale already satisfies.
                return Ok(CalibratedMechanism { spec, scale: lo });
            }
            if f(hi) > spec.delta {
                return Err(Error::numeric(format!(
                    "gaussian calibration bracket exhausted for epsilon={}, delta={}",
                    spec.epsilon, spec.delta
                )));
            }
            // f is strictly decreasing: f(lo) >= delta >= f(hi).
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > spec.delta {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (hi - lo) <= 1e-12 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    Ok(CalibratedMechanism { spec, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 40-digit arbitrary-precision
    // arithmetic and frozen here.
    const PHI_M05: f64 = 0.3085375387259868963622953893916;
    const PHI_M15: f64 = 0.0668072012688580710411250456829;
    const GDD_1_1_1: f64 = 0.1269367375066439450636978588587;
    const SIGMA_E1_D1E10: f64 = 5.8677777496305263890463038112686;

    #[test]
    fn normal_cdf_matches_reference() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(-0.5) - PHI_M05).abs() < 1e-15);
        assert!((normal_cdf(-1.5) - PHI_M15).abs() < 1e-15);
        // Tail accuracy: relative error, not absolute.
        let tail = normal_cdf(-8.0);
        assert!((tail - 6.22096057427178412351599517e-16).abs() < 1e-22);
    }

    #[test]
    fn gaussian_dp_delta_matches_reference() {
        let v = gaussian_dp_delta(1.0, 1.0, 1.0);
        assert!((v - GDD_1_1_1).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn gaussian_dp_delta_decreasing_in_sigma() {
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let sigma = 0.05 * 1.2_f64.powi(k);
            let v = gaussian_dp_delta(sigma, 0.7, 1.0);
            assert!(v <= prev + 1e-18, "not decreasing at sigma={sigma}");
            prev = v;
        }
    }

    #[test]
    fn gaussian_calibration_matches_reference() {
        let m = calibrate(MechanismSpec::gaussian(1.0, 1e-10).unwrap()).unwrap();
        assert!(
            (m.scale() - SIGMA_E1_D1E10).abs() < 1e-9 * SIGMA_E1_D1E10,
            "sigma = {}",
            m.scale()
        );
        // Round trip: the calibrated scale reproduces the demanded delta.
        let back = gaussian_dp_delta(m.scale(), 1.0, 1.0);
        assert!((back - 1e-10).abs() < 1e-20, "round trip delta = {back}");
    }

    #[test]
    fn gaussian_calibration_monotone_in_epsilon() {
        let mut prev = f64::INFINITY;
        for eps in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let m = calibrate(MechanismSpec::gaussian(eps, 1e-10).unwrap()).unwrap();
            assert!(m.scale() < prev, "sigma not decreasing at eps={eps}");
            prev = m.scale();
        }
    }

    #[test]
    fn laplace_calibration_and_density() {
        let m = calibrate(MechanismSpec::pure_laplace(2.0).unwrap()).unwrap();
        assert_eq!(m.scale(), 0.5);
        // Simpson integration of the density over the smooth half-line
        // right of the location matches the CDF difference.
        let n = 40_000;
        let (a, b) = (0.3, 0.3 + 20.0 * m.scale());
        let h = (b - a) / n as f64;
        let mut acc = m.density(0.3, a).unwrap() + m.density(0.3, b).unwrap();
        for i in 1..n {
            let wgt = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += wgt * m.density(0.3, a + i as f64 * h).unwrap();
        }
        let integral = acc * h / 3.0;
        let expect = m.cdf(0.3, b).unwrap() - m.cdf(0.3, a).unwrap();
        assert!((integral - expect).abs() < 1e-12);
        // CDF at the location is 1/2 for a symmetric density.
        assert!((m.cdf(0.3, 0.3).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_density_reference() {
        let m = calibrate(MechanismSpec::gaussian(1.0, 0.1269367375066439).unwrap()).unwrap();
        assert!((m.scale() - 1.0).abs() < 1e-9);
        let v = m.density(0.0, 0.0).unwrap();
        assert!((v - 0.3989422804014326779399460599344).abs() < 1e-9);
    }

    #[test]
    fn rr_has_no_density_or_cdf() {
        let m = calibrate(MechanismSpec::randomized_response(1.0).unwrap()).unwrap();
        assert!((m.scale() - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!(m.density(0.0, 0.0).is_err());
        assert!(m.cdf(0.0, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MechanismSpec::new(MechanismKind::Laplace, 0.0, 0.0, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Laplace, -1.0, 0.0, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Laplace, f64::NAN, 0.0, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Laplace, 1.0, 0.1, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Gaussian, 1.0, 0.0, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Gaussian, 1.0, 1.0, 1.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Gaussian, 1.0, 1e-6, 0.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Gaussian, 1.0, 1e-6, 2.0).is_ok());
    }
}
