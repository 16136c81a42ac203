//! Single-site potential laws with densities that extend to entire
//! functions, so any window inside the support can be continued.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the single-site law is specified in configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Uniform law on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Density `Σ_i coefficients[i]·λ^i` on `[support[0], support[1]]`.
    Polynomial {
        support: [f64; 2],
        coefficients: Vec<f64>,
    },
}

const NORMALIZATION_TOL: f64 = 1e-12;
const POSITIVITY_GRID: usize = 4097;

/// A validated single-site law.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    spec: DistributionSpec,
    lo: f64,
    hi: f64,
    // Monomial coefficients of the density on the support.
    coefficients: Vec<f64>,
}

impl Distribution {
    pub fn new(spec: DistributionSpec) -> Result<Self> {
        let dist = Self::unchecked(spec)?;
        let mass = dist.cdf(dist.hi);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "density integrates to {mass:.15}, not 1"
            )));
        }
        let scale = dist
            .coefficients
            .iter()
            .map(|c| c.abs())
            .fold(0.0, f64::max);
        for i in 0..POSITIVITY_GRID {
            let x = dist.lo + (dist.hi - dist.lo) * i as f64 / (POSITIVITY_GRID - 1) as f64;
            let g = dist.density(x);
            if g < -1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "density is negative ({g:.3e}) at {x}"
                )));
            }
        }
        Ok(dist)
    }

    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::new(DistributionSpec::Uniform { half_width })
    }

    pub fn polynomial(support: [f64; 2], coefficients: Vec<f64>) -> Result<Self> {
        Self::new(DistributionSpec::Polynomial {
            support,
            coefficients,
        })
    }

    /// Builds the law without normalization or positivity checks.
    pub(crate) fn unchecked(spec: DistributionSpec) -> Result<Self> {
        match &spec {
            DistributionSpec::Uniform { half_width } => {
                let a = *half_width;
                if !(a.is_finite() && a > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "uniform half-width must be positive and finite, got {a}"
                    )));
                }
                Ok(Self {
                    lo: -a,
                    hi: a,
                    coefficients: vec![0.5 / a],
                    spec,
                })
            }
            DistributionSpec::Polynomial {
                support,
                coefficients,
            } => {
                let [lo, hi] = *support;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidInput(format!(
                        "polynomial support [{lo}, {hi}] is not a finite interval"
                    )));
                }
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput(
                        "polynomial coefficients must be finite and non-empty".into(),
                    ));
                }
                Ok(Self {
                    lo,
                    hi,
                    coefficients: coefficients.clone(),
                    spec,
                })
            }
        }
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Half-width when the law is uniform.
    pub fn uniform_half_width(&self) -> Option<f64> {
        match self.spec {
            DistributionSpec::Uniform { half_width } => Some(half_width),
            DistributionSpec::Polynomial { .. } => None,
        }
    }

    /// `true` when the density is invariant under `λ → -λ`.
    pub fn is_even(&self) -> bool {
        (self.lo + self.hi).abs() <= 1e-15 * (self.hi - self.lo)
            && self
                .coefficients
                .iter()
                .skip(1)
                .step_by(2)
                .all(|c| *c == 0.0)
    }

    /// Density on the real line (zero off the support).
    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// The entire extension of the density from the support.
    #[inline]
    pub fn density_ext(&self, w: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * w + c)
    }

    fn antiderivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + c / (i + 1) as f64)
            * x
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        self.antiderivative(x) - self.antiderivative(self.lo)
    }

    /// Inverse CDF by safeguarded Newton iteration, to `1e-10` in `λ`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Sampling(format!("probability {u} outside [0, 1]")));
        }
        if let DistributionSpec::Uniform { half_width } = self.spec {
            return Ok(-half_width + 2.0 * half_width * u);
        }
        let (mut lo, mut hi) = (self.lo, self.hi);
        let mut x = lo + u * (hi - lo);
        for _ in 0..200 {
            let f = self.cdf(x) - u;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let g = self.density(x);
            let newton = x - f / g;
            let next = if g > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 1e-10 || hi - lo <= 1e-10 {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Sampling(format!(
            "inverse CDF did not converge for u = {u}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn epanechnikov() -> Distribution {
        Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap()
    }

    #[test]
    fn uniform_basics() {
        let u = Distribution::uniform(2.0).unwrap();
        assert_eq!(u.density(0.3), 0.25);
        assert_eq!(u.density(2.5), 0.0);
        assert_abs_diff_eq!(u.cdf(0.0), 0.5);
        assert_abs_diff_eq!(u.quantile(0.75).unwrap(), 1.0);
        assert!(u.is_even());
        assert!(Distribution::uniform(0.0).is_err());
    }

    #[test]
    fn polynomial_validation() {
        let p = epanechnikov();
        assert_abs_diff_eq!(p.cdf(1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.density(0.0), 0.75);
        assert!(p.is_even());
        // Not normalized.
        assert!(Distribution::polynomial([-1.0, 1.0], vec![1.0]).is_err());
        // Normalized but negative around the origin.
        assert!(Distribution::polynomial([-1.0, 1.0], vec![-0.25, 0.0, 2.25]).is_err());
        assert!(Distribution::polynomial([1.0, -1.0], vec![0.5]).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = epanechnikov();
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let x = p.quantile(u).unwrap();
            assert!((p.cdf(x) - u).abs() < 1e-9, "u = {u}");
        }
    }

    #[test]
    fn extension_matches_density() {
        let p = epanechnikov();
        let w = Complex64::new(0.3, 0.0);
        assert_abs_diff_eq!(p.density_ext(w).re, p.density(0.3), epsilon = 1e-15);
        let w = Complex64::new(0.0, 1.0);
        assert_abs_diff_eq!(p.density_ext(w).re, 1.5, epsilon = 1e-15);
    }
}
