//! Common traits for bivariate copulas.

use crate::error::Result;

/// A bivariate copula: a cdf on the unit square with uniform margins and
/// a density on its interior.
pub trait BivariateCopula {
    /// `C(u1, u2)`; grounded (`C(0, u) = 0`, `C(u, 1) = u`).
    fn cdf(&self, u1: f64, u2: f64) -> f64;

    /// Density `c(u1, u2)` on the open unit square.
    fn pdf(&self, u1: f64, u2: f64) -> Result<f64>;

    /// Log density; override when a stabler form exists.
    fn ln_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        Ok(self.pdf(u1, u2)?.ln())
    }

    /// Cdf on the product grid `u1s x u2s`, row-major. Implementations
    /// with expensive marginal inversions override this to share work
    /// along each axis.
    fn cdf_grid(&self, u1s: &[f64], u2s: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(u1s.len() * u2s.len());
        for &a in u1s {
            for &b in u2s {
                out.push(self.cdf(a, b));
            }
        }
        out
    }

    /// Density on the product grid `u1s x u2s`, row-major; evaluation
    /// failures surface as NaN. Overridden where per-axis caching pays.
    fn pdf_grid(&self, u1s: &[f64], u2s: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(u1s.len() * u2s.len());
        for &a in u1s {
            for &b in u2s {
                out.push(self.pdf(a, b).unwrap_or(f64::NAN));
            }
        }
        out
    }
}

/// A copula that also exposes the conditional distribution of the second
/// coordinate given the first, and its inverse.
pub trait ConditionalCopula: BivariateCopula {
    /// `C_{2|1}(u2 | u1) = dC(u1, u2)/du1`.
    fn conditional_cdf(&self, u2: f64, given_u1: f64) -> Result<f64>;

    /// `u2` solving `C_{2|1}(u2 | u1) = q`.
    fn conditional_inverse(&self, q: f64, given_u1: f64) -> Result<f64>;
}

/// The independence copula `C(u1, u2) = u1 * u2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Independence;

impl BivariateCopula for Independence {
    fn cdf(&self, u1: f64, u2: f64) -> f64 {
        u1.clamp(0.0, 1.0) * u2.clamp(0.0, 1.0)
    }

    fn pdf(&self, _u1: f64, _u2: f64) -> Result<f64> {
        Ok(1.0)
    }

    fn ln_pdf(&self, _u1: f64, _u2: f64) -> Result<f64> {
        Ok(0.0)
    }
}

impl ConditionalCopula for Independence {
    fn conditional_cdf(&self, u2: f64, _given_u1: f64) -> Result<f64> {
        Ok(u2)
    }

    fn conditional_inverse(&self, q: f64, _given_u1: f64) -> Result<f64> {
        Ok(q)
    }
}
