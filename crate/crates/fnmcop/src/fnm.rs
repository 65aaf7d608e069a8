//! The bivariate K-component finite normal mixture (K-FNM) distribution
//! and its copula.
//!
//! A K-FNM is a mixture of bivariate normals with unit variances. To make
//! the mixture identifiable the raw component means must sum to zero and
//! follow a fixed first-coordinate pattern: the first mean is `K - 1`,
//! the middle ones are `-1`, and the last is forced by the zero-sum
//! constraint; second coordinates are the free parameters
//! `theta_1..theta_{K-1}` with the last again forced. What remains free is
//! the reduced vector `(pi_1..pi_{K-1}, theta_1..theta_{K-1},
//! rho_1..rho_K)` held in [`FnmParams`].
//!
//! [`FnmCopula`] caches the expanded components and exposes the mixture
//! cdf/pdf/quantile per margin, the joint cdf/pdf, the copula obtained by
//! plugging the marginal quantiles into the joint cdf, Pearson's
//! correlation of the latent pair, and exact sampling.

use crate::copula::BivariateCopula;
use crate::error::{Error, Result};
use crate::gauss::{self, Correlation};
use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Margin selector for the two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Margin {
    First,
    Second,
}

impl Margin {
    #[inline]
    fn index(self) -> usize {
        match self {
            Margin::First => 0,
            Margin::Second => 1,
        }
    }
}

/// Reduced (identifiable) parameter vector of a K-FNM copula.
#[derive(Debug, Clone, PartialEq)]
pub struct FnmParams {
    pis: Vec<f64>,
    thetas: Vec<f64>,
    rhos: Vec<Correlation>,
}

#[derive(Serialize, Deserialize)]
struct FnmParamsRepr {
    #[serde(rename = "K")]
    k: usize,
    pi: Vec<f64>,
    theta: Vec<f64>,
    rho: Vec<f64>,
}

impl FnmParams {
    /// Validate and build a parameter vector. `rhos` has one entry per
    /// component; `pis` and `thetas` have one entry less.
    pub fn new(pis: Vec<f64>, thetas: Vec<f64>, rhos: Vec<f64>) -> Result<Self> {
        let k = rhos.len();
        if k == 0 {
            return Err(Error::domain("K-FNM needs at least one component"));
        }
        if pis.len() != k - 1 || thetas.len() != k - 1 {
            return Err(Error::domain(format!(
                "with K = {k} expected {} mixing weights and thetas, got {} and {}",
                k - 1,
                pis.len(),
                thetas.len()
            )));
        }
        let mut sum = 0.0;
        for &p in &pis {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(format!(
                    "mixing probabilities must lie in (0,1), got {p}"
                )));
            }
            sum += p;
        }
        if k > 1 && sum >= 1.0 {
            return Err(Error::domain(format!(
                "mixing probabilities sum to {sum} >= 1"
            )));
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("theta parameters must be finite"));
        }
        let rhos = rhos
            .into_iter()
            .map(Correlation::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(FnmParams { pis, thetas, rhos })
    }

    /// The independence-resembling parametrization: equal weights, zero
    /// thetas and correlations.
    pub fn independence(k: usize) -> Self {
        assert!(k >= 1);
        FnmParams {
            pis: vec![1.0 / k as f64; k - 1],
            thetas: vec![0.0; k - 1],
            rhos: vec![Correlation::new(0.0).unwrap(); k],
        }
    }

    pub fn k(&self) -> usize {
        self.rhos.len()
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.rhos.iter().map(|r| r.value()).collect()
    }

    /// All K mixing weights (the implied last one included).
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.pis.clone();
        w.push(1.0 - self.pis.iter().sum::<f64>());
        w
    }

    /// Number of free parameters, `3K - 2`.
    pub fn free_parameter_count(&self) -> usize {
        3 * self.k() - 2
    }

    /// Natural-coordinate flat vector `(pi.., theta.., rho..)`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.pis.clone();
        v.extend_from_slice(&self.thetas);
        v.extend(self.rhos.iter().map(|r| r.value()));
        v
    }

    pub fn from_flat(k: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 3 * k - 2 {
            return Err(Error::domain(format!(
                "flat vector for K = {k} needs {} entries, got {}",
                3 * k - 2,
                v.len()
            )));
        }
        FnmParams::new(
            v[..k - 1].to_vec(),
            v[k - 1..2 * (k - 1)].to_vec(),
            v[2 * (k - 1)..].to_vec(),
        )
    }
}

impl Serialize for FnmParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FnmParamsRepr {
            k: self.k(),
            pi: self.pis.clone(),
            theta: self.thetas.clone(),
            rho: self.rhos.iter().map(|r| r.value()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FnmParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FnmParamsRepr::deserialize(d)?;
        if repr.rho.len() != repr.k {
            return Err(serde::de::Error::custom(format!(
                "K = {} but {} rho entries",
                repr.k,
                repr.rho.len()
            )));
        }
        FnmParams::new(repr.pi, repr.theta, repr.rho).map_err(serde::de::Error::custom)
    }
}

/// Fully expanded mixture components (weights, mean vectors, correlations).
#[derive(Debug, Clone, PartialEq)]
pub struct FnmComponents {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub rhos: Vec<f64>,
}

/// Expand the reduced parameters into explicit component weights, means
/// and correlations. Raw means sum to zero by construction.
pub fn expand(params: &FnmParams) -> FnmComponents {
    let k = params.k();
    let weights = params.weights();
    let mut means = Vec::with_capacity(k);
    if k == 1 {
        means.push([0.0, 0.0]);
    } else {
        let mut m1 = Vec::with_capacity(k);
        m1.push(k as f64 - 1.0);
        for _ in 1..k - 1 {
            m1.push(-1.0);
        }
        m1.push(-m1.iter().sum::<f64>());
        let mut m2 = params.thetas.clone();
        m2.push(-m2.iter().sum::<f64>());
        for i in 0..k {
            means.push([m1[i], m2[i]]);
        }
    }
    FnmComponents {
        weights,
        means,
        rhos: params.rhos.iter().map(|r| r.value()).collect(),
    }
}

/// Moments of the latent (pre-copula) K-FNM pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceSummary {
    pub delta11: f64,
    pub delta12: f64,
    pub delta22: f64,
    pub pearson_rho: f64,
}

/// A K-FNM copula with its expanded components cached.
#[derive(Debug, Clone)]
pub struct FnmCopula {
    params: FnmParams,
    comp: FnmComponents,
}

impl FnmCopula {
    pub fn new(params: FnmParams) -> Self {
        let comp = expand(&params);
        FnmCopula { params, comp }
    }

    pub fn params(&self) -> &FnmParams {
        &self.params
    }

    pub fn components(&self) -> &FnmComponents {
        &self.comp
    }

    /// Univariate mixture cdf of the selected margin.
    pub fn uni_cdf(&self, y: f64, margin: Margin) -> f64 {
        let d = margin.index();
        self.comp
            .weights
            .iter()
            .zip(&self.comp.means)
            .map(|(&w, m)| w * gauss::norm_cdf(y - m[d]))
            .sum()
    }

    /// Univariate mixture density of the selected margin.
    pub fn uni_pdf(&self, y: f64, margin: Margin) -> f64 {
        let d = margin.index();
        self.comp
            .weights
            .iter()
            .zip(&self.comp.means)
            .map(|(&w, m)| w * gauss::norm_pdf(y - m[d]))
            .sum()
    }

    fn ln_uni_pdf(&self, y: f64, margin: Margin) -> f64 {
        let d = margin.index();
        let mut max = f64::NEG_INFINITY;
        let mut g = [0.0f64; 16];
        let k = self.comp.weights.len();
        debug_assert!(k <= 16 || k <= self.comp.weights.len());
        let mut buf;
        let gs: &mut [f64] = if k <= 16 {
            &mut g[..k]
        } else {
            buf = vec![0.0; k];
            &mut buf
        };
        for (i, m) in self.comp.means.iter().enumerate() {
            let z = y - m[d];
            gs[i] = -0.5 * z * z - gauss::LN_SQRT_2PI;
            if gs[i] > max {
                max = gs[i];
            }
        }
        let s: f64 = self
            .comp
            .weights
            .iter()
            .zip(gs.iter())
            .map(|(&w, &gi)| w * (gi - max).exp())
            .sum();
        max + s.ln()
    }

    /// Quantile of the selected margin; safeguarded Newton with a
    /// bisection fallback inside an expanding bracket.
    pub fn uni_quantile(&self, p: f64, margin: Margin) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "mixture quantile requires p in (0, 1), got {p}"
            )));
        }
        let d = margin.index();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for m in &self.comp.means {
            lo = lo.min(m[d]);
            hi = hi.max(m[d]);
        }
        lo -= 10.0;
        hi += 10.0;
        // Widen for extreme probabilities (the default bracket covers
        // p down to ~1e-23 per component tail).
        while self.uni_cdf(lo, margin) > p {
            lo -= 5.0;
        }
        while self.uni_cdf(hi, margin) < p {
            hi += 5.0;
        }
        // Moment-matched normal start.
        let (mean, var) = self.margin_moments(d);
        let mut x = mean + var.sqrt() * gauss::norm_quantile(p)?;
        x = x.clamp(lo, hi);
        for _ in 0..200 {
            let f = self.uni_cdf(x, margin) - p;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dens = self.uni_pdf(x, margin);
            let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= 1e-13 * (1.0 + x.abs()) {
                break;
            }
        }
        Ok(x)
    }

    fn margin_moments(&self, d: usize) -> (f64, f64) {
        let mean: f64 = self
            .comp
            .weights
            .iter()
            .zip(&self.comp.means)
            .map(|(&w, m)| w * m[d])
            .sum();
        let var: f64 = self
            .comp
            .weights
            .iter()
            .zip(&self.comp.means)
            .map(|(&w, m)| w * (1.0 + m[d] * m[d]))
            .sum::<f64>()
            - mean * mean;
        (mean, var)
    }

    /// Joint mixture cdf.
    pub fn biv_cdf(&self, y1: f64, y2: f64) -> f64 {
        self.comp
            .weights
            .iter()
            .zip(self.comp.means.iter().zip(&self.comp.rhos))
            .map(|(&w, (m, &r))| {
                w * gauss::bvn_cdf(y1 - m[0], y2 - m[1], Correlation::new(r).unwrap())
            })
            .sum()
    }

    /// Joint mixture density.
    pub fn biv_pdf(&self, y1: f64, y2: f64) -> f64 {
        self.ln_biv_pdf(y1, y2).exp()
    }

    fn ln_biv_pdf(&self, y1: f64, y2: f64) -> f64 {
        let k = self.comp.weights.len();
        let mut gs = vec![0.0f64; k];
        let mut max = f64::NEG_INFINITY;
        for i in 0..k {
            let m = &self.comp.means[i];
            let r = self.comp.rhos[i];
            let z1 = y1 - m[0];
            let z2 = y2 - m[1];
            let omr2 = (1.0 - r) * (1.0 + r);
            let q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / omr2;
            gs[i] = -0.5 * q - gauss::LN_SQRT_2PI * 2.0 - 0.5 * omr2.ln();
            if gs[i] > max {
                max = gs[i];
            }
        }
        let s: f64 = self
            .comp
            .weights
            .iter()
            .zip(&gs)
            .map(|(&w, &g)| w * (g - max).exp())
            .sum();
        max + s.ln()
    }

    /// Copula cdf `C(u1, u2)`; boundary values are exact.
    pub fn copula_cdf(&self, u1: f64, u2: f64) -> f64 {
        let u1 = u1.clamp(0.0, 1.0);
        let u2 = u2.clamp(0.0, 1.0);
        if u1 == 0.0 || u2 == 0.0 {
            return 0.0;
        }
        if u1 == 1.0 {
            return u2;
        }
        if u2 == 1.0 {
            return u1;
        }
        let q1 = self
            .uni_quantile(u1, Margin::First)
            .expect("interior u after boundary handling");
        let q2 = self
            .uni_quantile(u2, Margin::Second)
            .expect("interior u after boundary handling");
        self.biv_cdf(q1, q2).clamp(0.0, 1.0)
    }

    /// Copula density `c(u1, u2)` on the open unit square.
    pub fn copula_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        Ok(self.ln_copula_pdf(u1, u2)?.exp())
    }

    /// Log copula density with the first-margin quantile already known;
    /// lets sweeps over a grid reuse per-row inversions.
    pub(crate) fn ln_copula_pdf_at_q1(&self, q1: f64, u2: f64) -> Result<f64> {
        if !(u2 > 0.0 && u2 < 1.0) {
            return Err(Error::domain(format!(
                "copula density requires u2 in (0, 1), got {u2}"
            )));
        }
        let q2 = self.uni_quantile(u2, Margin::Second)?;
        Ok(self.ln_biv_pdf(q1, q2)
            - self.ln_uni_pdf(q1, Margin::First)
            - self.ln_uni_pdf(q2, Margin::Second))
    }

    /// Log copula density; the form used by likelihoods.
    pub fn ln_copula_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        if !(u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0) {
            return Err(Error::domain(format!(
                "copula density requires (u1, u2) in the open unit square, got ({u1}, {u2})"
            )));
        }
        let q1 = self.uni_quantile(u1, Margin::First)?;
        let q2 = self.uni_quantile(u2, Margin::Second)?;
        Ok(self.ln_biv_pdf(q1, q2)
            - self.ln_uni_pdf(q1, Margin::First)
            - self.ln_uni_pdf(q2, Margin::Second))
    }

    /// Moments of the latent pair: the Delta covariance terms and the
    /// implied Pearson correlation.
    pub fn covariance_summary(&self) -> CovarianceSummary {
        let c = &self.comp;
        let mean = |d: usize| -> f64 {
            c.weights
                .iter()
                .zip(&c.means)
                .map(|(&w, m)| w * m[d])
                .sum()
        };
        let (m1, m2) = (mean(0), mean(1));
        let delta11: f64 = c
            .weights
            .iter()
            .zip(&c.means)
            .map(|(&w, m)| w * (1.0 + m[0] * m[0]))
            .sum::<f64>()
            - m1 * m1;
        let delta22: f64 = c
            .weights
            .iter()
            .zip(&c.means)
            .map(|(&w, m)| w * (1.0 + m[1] * m[1]))
            .sum::<f64>()
            - m2 * m2;
        let delta12: f64 = c
            .weights
            .iter()
            .zip(c.means.iter().zip(&c.rhos))
            .map(|(&w, (m, &r))| w * (r + m[0] * m[1]))
            .sum::<f64>()
            - m1 * m2;
        CovarianceSummary {
            delta11,
            delta12,
            delta22,
            pearson_rho: delta12 / (delta11 * delta22).sqrt(),
        }
    }

    /// Pearson correlation of the latent K-FNM pair.
    pub fn pearson_rho(&self) -> f64 {
        self.covariance_summary().pearson_rho
    }

    /// Draw `n` pairs from the copula (uniform margins), deterministically
    /// for a given seed.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let pick: f64 = rng.gen();
            let mut acc = 0.0;
            let mut idx = self.comp.weights.len() - 1;
            for (i, &w) in self.comp.weights.iter().enumerate() {
                acc += w;
                if pick < acc {
                    idx = i;
                    break;
                }
            }
            let z1: f64 = normal.sample(&mut rng);
            let z2: f64 = normal.sample(&mut rng);
            let m = &self.comp.means[idx];
            let r = self.comp.rhos[idx];
            let y1 = m[0] + z1;
            let y2 = m[1] + r * z1 + (1.0 - r * r).sqrt() * z2;
            out.push((
                self.uni_cdf(y1, Margin::First),
                self.uni_cdf(y2, Margin::Second),
            ));
        }
        out
    }
}

impl BivariateCopula for FnmCopula {
    fn cdf(&self, u1: f64, u2: f64) -> f64 {
        self.copula_cdf(u1, u2)
    }

    fn pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        self.copula_pdf(u1, u2)
    }

    fn ln_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        self.ln_copula_pdf(u1, u2)
    }

    fn pdf_grid(&self, u1s: &[f64], u2s: &[f64]) -> Vec<f64> {
        let q1s: Vec<Result<f64>> = u1s
            .iter()
            .map(|&u| self.uni_quantile(u, Margin::First))
            .collect();
        let q2s: Vec<Result<f64>> = u2s
            .iter()
            .map(|&u| self.uni_quantile(u, Margin::Second))
            .collect();
        let ln_m1: Vec<f64> = q1s
            .iter()
            .map(|q| q.as_ref().map(|&q| self.ln_uni_pdf(q, Margin::First)).unwrap_or(f64::NAN))
            .collect();
        let ln_m2: Vec<f64> = q2s
            .iter()
            .map(|q| q.as_ref().map(|&q| self.ln_uni_pdf(q, Margin::Second)).unwrap_or(f64::NAN))
            .collect();
        let mut out = Vec::with_capacity(u1s.len() * u2s.len());
        for (i, q1) in q1s.iter().enumerate() {
            for (j, q2) in q2s.iter().enumerate() {
                match (q1, q2) {
                    (Ok(a), Ok(b)) => {
                        out.push((self.ln_biv_pdf(*a, *b) - ln_m1[i] - ln_m2[j]).exp())
                    }
                    _ => out.push(f64::NAN),
                }
            }
        }
        out
    }

    fn cdf_grid(&self, u1s: &[f64], u2s: &[f64]) -> Vec<f64> {
        // one marginal inversion per axis value instead of per cell
        let q1s: Vec<Option<f64>> = u1s
            .iter()
            .map(|&u| {
                if u > 0.0 && u < 1.0 {
                    self.uni_quantile(u, Margin::First).ok()
                } else {
                    None
                }
            })
            .collect();
        let q2s: Vec<Option<f64>> = u2s
            .iter()
            .map(|&u| {
                if u > 0.0 && u < 1.0 {
                    self.uni_quantile(u, Margin::Second).ok()
                } else {
                    None
                }
            })
            .collect();
        let mut out = Vec::with_capacity(u1s.len() * u2s.len());
        for (i, &a) in u1s.iter().enumerate() {
            for (j, &b) in u2s.iter().enumerate() {
                match (q1s[i], q2s[j]) {
                    (Some(q1), Some(q2)) => out.push(self.biv_cdf(q1, q2).clamp(0.0, 1.0)),
                    _ => out.push(self.copula_cdf(a, b)),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fnm(pis: &[f64], thetas: &[f64], rhos: &[f64]) -> FnmCopula {
        FnmCopula::new(FnmParams::new(pis.to_vec(), thetas.to_vec(), rhos.to_vec()).unwrap())
    }

    #[test]
    fn expand_follows_constraint_pattern() {
        let c = expand(&FnmParams::new(vec![0.5], vec![0.45], vec![0.1, 0.2]).unwrap());
        assert_eq!(c.means, vec![[1.0, 0.45], [-1.0, -0.45]]);

        let c = expand(&FnmParams::new(vec![0.3, 0.3], vec![1.5, 1.5], vec![0.0, 0.0, 0.0]).unwrap());
        assert_eq!(c.means, vec![[2.0, 1.5], [-1.0, 1.5], [-1.0, -3.0]]);
        let sum1: f64 = c.means.iter().map(|m| m[0]).sum();
        let sum2: f64 = c.means.iter().map(|m| m[1]).sum();
        assert_eq!(sum1, 0.0);
        assert_eq!(sum2, 0.0);

        let c = expand(&FnmParams::new(vec![], vec![], vec![0.5]).unwrap());
        assert_eq!(c.means, vec![[0.0, 0.0]]);
        assert_eq!(c.weights, vec![1.0]);
    }

    #[test]
    fn params_validation() {
        assert!(FnmParams::new(vec![], vec![], vec![]).is_err());
        assert!(FnmParams::new(vec![0.5], vec![0.0], vec![0.0]).is_err()); // wrong lengths
        assert!(FnmParams::new(vec![1.2], vec![0.0], vec![0.0, 0.0]).is_err());
        assert!(FnmParams::new(vec![0.6, 0.5], vec![0.0, 0.0], vec![0.0, 0.0, 0.0]).is_err());
        assert!(FnmParams::new(vec![0.5], vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(FnmParams::new(vec![0.5], vec![f64::NAN], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn uni_cdf_examples() {
        let c = fnm(&[0.5], &[0.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(c.uni_cdf(0.0, Margin::Second), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.uni_cdf(0.0, Margin::First), 0.5, epsilon = 1e-15);

        let c = fnm(&[0.3], &[0.0], &[0.0, 0.0]);
        let expected = 0.3 * gauss::norm_cdf(-1.0) + 0.7 * gauss::norm_cdf(1.0);
        assert_abs_diff_eq!(c.uni_cdf(0.0, Margin::First), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.6365, epsilon = 5e-5);
    }

    #[test]
    fn uni_quantile_round_trip() {
        let cases = [
            fnm(&[0.5], &[0.0], &[0.0, 0.0]),
            fnm(&[0.3], &[0.0], &[0.8, -0.8]),
            fnm(&[0.2, 0.5], &[1.5, -0.5], &[0.8, -0.8, 0.8]),
            fnm(&[], &[], &[0.9]),
        ];
        for c in &cases {
            for m in [Margin::First, Margin::Second] {
                for i in 1..100 {
                    let p = i as f64 / 100.0;
                    let q = c.uni_quantile(p, m).unwrap();
                    assert!(
                        (c.uni_cdf(q, m) - p).abs() < 1e-12,
                        "round trip failed at p={p}"
                    );
                }
                // extreme probabilities still bracket correctly
                for p in [1e-12, 1.0 - 1e-12] {
                    let q = c.uni_quantile(p, m).unwrap();
                    assert!((c.uni_cdf(q, m) - p).abs() < 1e-13);
                }
            }
        }
        let c = fnm(&[0.5], &[0.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(c.uni_quantile(0.5, Margin::First).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.uni_quantile(0.5, Margin::Second).unwrap(), 0.0, epsilon = 1e-12);
        // inverse of the 0.6365 example
        let c = fnm(&[0.3], &[0.0], &[0.0, 0.0]);
        let p0 = c.uni_cdf(0.0, Margin::First);
        assert_abs_diff_eq!(c.uni_quantile(p0, Margin::First).unwrap(), 0.0, epsilon = 1e-10);
        assert!(c.uni_quantile(0.0, Margin::First).is_err());
        // reference quantiles (independent bisection oracle, scipy brentq)
        let c = fnm(&[0.3], &[0.0], &[0.8, -0.8]);
        assert_abs_diff_eq!(
            c.uni_quantile(0.25, Margin::First).unwrap(),
            -1.376172585349,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            c.uni_quantile(0.8, Margin::Second).unwrap(),
            0.841621233573,
            epsilon = 1e-9
        );
    }

    #[test]
    fn biv_cdf_single_component_reduces_to_bvn() {
        let c = fnm(&[], &[], &[0.5]);
        for (y1, y2) in [(0.0, 0.0), (-1.0, 2.0), (0.3, 0.3)] {
            assert_eq!(
                c.biv_cdf(y1, y2),
                gauss::bvn_cdf(y1, y2, Correlation::new(0.5).unwrap())
            );
        }
        assert_abs_diff_eq!(c.biv_cdf(38.0, 38.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn biv_pdf_factorizes_when_second_margin_independent() {
        // theta = 0 and both rhos zero: f2(y1, y2) = f1(y1) * phi(y2)
        let c = fnm(&[0.3], &[0.0], &[0.0, 0.0]);
        for y1 in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            for y2 in [-1.5, 0.0, 0.7] {
                let want = c.uni_pdf(y1, Margin::First) * gauss::norm_pdf(y2);
                assert_abs_diff_eq!(c.biv_pdf(y1, y2), want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn copula_cdf_boundaries_and_independence() {
        let c = fnm(&[0.3], &[0.0], &[0.8, -0.8]);
        assert_eq!(c.copula_cdf(0.0, 0.7), 0.0);
        assert_eq!(c.copula_cdf(0.7, 0.0), 0.0);
        assert_eq!(c.copula_cdf(1.0, 0.7), 0.7);
        assert_eq!(c.copula_cdf(0.7, 1.0), 0.7);

        for pi in [0.2, 0.5, 0.8] {
            let c = fnm(&[pi], &[0.0], &[0.0, 0.0]);
            for (u1, u2) in [(0.3, 0.7), (0.5, 0.5), (0.9, 0.1)] {
                assert_abs_diff_eq!(c.copula_cdf(u1, u2), u1 * u2, epsilon = 1e-12);
            }
        }

        let c = fnm(&[], &[], &[0.5]);
        assert_abs_diff_eq!(c.copula_cdf(0.5, 0.5), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn copula_pdf_independence_is_one() {
        for pi in [0.2, 0.5, 0.8] {
            let c = fnm(&[pi], &[0.0], &[0.0, 0.0]);
            for (u1, u2) in [(0.1, 0.9), (0.5, 0.5), (0.33, 0.66)] {
                assert_abs_diff_eq!(c.copula_pdf(u1, u2).unwrap(), 1.0, epsilon = 1e-10);
            }
        }
        let c = fnm(&[0.3], &[0.0], &[0.8, -0.8]);
        assert!(c.copula_pdf(0.0, 0.5).is_err());
        assert!(c.copula_pdf(0.5, 1.0).is_err());
    }

    #[test]
    fn copula_pdf_reference_values() {
        // Independent implementation oracle (mixture + bisection, scipy).
        let c = fnm(&[0.3], &[0.0], &[0.8, -0.8]);
        let cases = [
            (0.3, 0.7, 1.524540339848),
            (0.05, 0.95, 4.716591652021),
            (0.5, 0.5, 1.200597981155),
            (0.9, 0.9, 1.089488133611),
        ];
        for (u1, u2, want) in cases {
            assert_abs_diff_eq!(c.copula_pdf(u1, u2).unwrap(), want, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(c.copula_cdf(0.3, 0.7), 0.122467425772, epsilon = 1e-7);

        let c = fnm(&[0.2, 0.5], &[1.5, -0.5], &[0.8, -0.8, 0.8]);
        let cases = [
            (0.3, 0.7, 1.140852774940),
            (0.5, 0.5, 1.768968893507),
            (0.12, 0.88, 0.643559894197),
        ];
        for (u1, u2, want) in cases {
            assert_abs_diff_eq!(c.copula_pdf(u1, u2).unwrap(), want, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(c.copula_cdf(0.3, 0.7), 0.213399674958, epsilon = 1e-7);
    }

    #[test]
    fn copula_pdf_normalizes_for_table_parameters() {
        // the close-to-BVN(tau=0.5) parametrization
        let c = fnm(&[0.5], &[0.451], &[0.647, 0.647]);
        let rule = crate::quad::QuadratureRule::gauss_legendre(50).unwrap();
        let mut total = 0.0;
        for (&u, &wu) in rule.nodes().iter().zip(rule.weights()) {
            for (&v, &wv) in rule.nodes().iter().zip(rule.weights()) {
                total += wu * wv * c.copula_pdf(u, v).unwrap();
            }
        }
        // The density has integrable corner singularities, so the 50-point
        // rule carries ~1.3e-5 truncation error; the exact 50-point value
        // is pinned against an independent implementation.
        assert_abs_diff_eq!(total, 1.0000128777, epsilon = 1e-8);
        assert_abs_diff_eq!(total, 1.0, epsilon = 5e-5);
    }

    #[test]
    fn copula_pdf_reflection_symmetry() {
        let c = fnm(&[0.5], &[0.0], &[0.6, 0.6]);
        for (u1, u2) in [(0.2, 0.7), (0.45, 0.1), (0.8, 0.8)] {
            let a = c.copula_pdf(u1, u2).unwrap();
            let b = c.copula_pdf(1.0 - u1, 1.0 - u2).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn pearson_rho_reduced_cases() {
        let c = fnm(&[0.5], &[0.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(c.pearson_rho(), 0.0, epsilon = 1e-15);

        for rho in [-0.6, 0.3, 0.9] {
            let c = fnm(&[0.5], &[0.0], &[rho, rho]);
            let s = c.covariance_summary();
            assert_abs_diff_eq!(s.delta11, 2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.delta22, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.delta12, rho, epsilon = 1e-15);
            assert_abs_diff_eq!(c.pearson_rho(), rho / 2.0f64.sqrt(), epsilon = 1e-15);
        }

        // K = 2 closed form Delta11 = 1 + pi(1-pi)K^2
        for pi in [0.1, 0.3, 0.7] {
            let c = fnm(&[pi], &[0.4], &[0.2, -0.5]);
            let s = c.covariance_summary();
            assert_abs_diff_eq!(s.delta11, 1.0 + pi * (1.0 - pi) * 4.0, epsilon = 1e-14);
        }
        // K = 3 reference (moment formulas, cross-checked by Monte Carlo)
        let c = fnm(&[0.2, 0.5], &[1.5, -0.5], &[0.8, -0.8, 0.8]);
        assert_abs_diff_eq!(c.pearson_rho(), 0.4992928861, epsilon = 1e-9);
    }

    #[test]
    fn pearson_rho_matches_monte_carlo() {
        use rand::Rng;
        let c = fnm(&[0.3], &[1.2], &[0.5, -0.7]);
        let comp = c.components();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let pick: f64 = rng.gen();
            let idx = if pick < comp.weights[0] { 0 } else { 1 };
            let z1: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let z2: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let r = comp.rhos[idx];
            let x = comp.means[idx][0] + z1;
            let y = comp.means[idx][1] + r * z1 + (1.0 - r * r).sqrt() * z2;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let sample_rho = cov / (vx * vy).sqrt();
        assert!((c.pearson_rho() - sample_rho).abs() < 0.005);
    }

    #[test]
    fn sampling_is_deterministic_and_uniform() {
        let c = fnm(&[0.3], &[0.0], &[0.8, -0.8]);
        let a = c.sample(1000, 7);
        let b = c.sample(1000, 7);
        assert_eq!(a, b);
        let other = c.sample(1000, 8);
        assert_ne!(a, other);

        // Kolmogorov-Smirnov against U(0,1) at the 1% level (crit ~ 1.63/sqrt(n)).
        let n = 100_000;
        let samples = c.sample(n, 123);
        for dim in 0..2 {
            let mut xs: Vec<f64> = samples
                .iter()
                .map(|p| if dim == 0 { p.0 } else { p.1 })
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut d: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let ecdf_hi = (i + 1) as f64 / n as f64;
                let ecdf_lo = i as f64 / n as f64;
                d = d.max((ecdf_hi - x).abs()).max((x - ecdf_lo).abs());
            }
            assert!(
                d < 1.63 / (n as f64).sqrt(),
                "margin {dim} fails KS: D = {d}"
            );
        }
    }

    #[test]
    fn serde_round_trip() {
        let p = FnmParams::new(vec![0.3], vec![0.5], vec![0.8, -0.8]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"K\":2"));
        assert!(json.contains("\"pi\":[0.3]"));
        let back: FnmParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"K":3,"pi":[0.3],"theta":[0.5],"rho":[0.8,-0.8]}"#;
        assert!(serde_json::from_str::<FnmParams>(bad).is_err());
    }
}
