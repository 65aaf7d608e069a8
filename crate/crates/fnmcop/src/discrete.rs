//! Discrete-response comparison: ordinal-regression marginals on a
//! covariate grid, the copula-based bivariate pmf, and the discrete KL
//! distance between two copula models with shared margins, plus its
//! minimization over the mixture copula.
//!
//! The bivariate pmf of a cell is the copula rectangle probability
//! `C(G(a_{y1+1}+b1 x), G(a_{y2+1}+b2 x)) - ... + C(G(a_{y1}+b1 x),
//! G(a_{y2}+b2 x))`. The discrete KL sums `f log(f/g)` over the covariate
//! grid and all category pairs; the reported distance averages over the
//! grid (covariate uniform on its values), which is also the scale the
//! discrimination sample size is computed on.

use crate::copula::BivariateCopula;
use crate::error::{Error, Result};
use crate::estimate::{FnmParametrization, Parametrization};
use crate::families::Copula;
use crate::fnm::{FnmCopula, FnmParams};
use crate::gauss;
use crate::kl::{
    independence_start, random_start, tau_matched_start, KlMinimizeOptions, KlReport,
};
use crate::optim::{self, BfgsOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Latent-scale link of the ordinal regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Probit,
    Logit,
}

impl LinkFunction {
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            LinkFunction::Probit => gauss::norm_cdf(x),
            LinkFunction::Logit => 1.0 / (1.0 + (-x).exp()),
        }
    }

    pub fn quantile(self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("link quantile needs p in (0,1), got {p}")));
        }
        match self {
            LinkFunction::Probit => gauss::norm_quantile(p),
            LinkFunction::Logit => Ok((p / (1.0 - p)).ln()),
        }
    }
}

/// Ordinal-regression specification shared by both margins: cutpoints,
/// slopes, link and the covariate grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrdinalSpec {
    n_categories: usize,
    cutpoints: Vec<f64>,
    beta1: f64,
    beta2: f64,
    xs: Vec<f64>,
    link: LinkFunction,
}

impl OrdinalSpec {
    pub fn new(
        cutpoints: Vec<f64>,
        beta1: f64,
        beta2: f64,
        xs: Vec<f64>,
        link: LinkFunction,
    ) -> Result<Self> {
        if cutpoints.is_empty() {
            return Err(Error::domain("need at least one cutpoint (two categories)"));
        }
        if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("cutpoints must be strictly increasing"));
        }
        if xs.is_empty() {
            return Err(Error::domain("covariate grid must be nonempty"));
        }
        Ok(OrdinalSpec {
            n_categories: cutpoints.len() + 1,
            cutpoints,
            beta1,
            beta2,
            xs,
            link,
        })
    }

    /// Equally weighted categories at `x = 0` (cutpoints `G^{-1}(y/Y)`)
    /// over a grid of `n_x` points equally spaced in [-1, 1].
    pub fn equally_weighted(
        n_categories: usize,
        n_x: usize,
        beta1: f64,
        beta2: f64,
        link: LinkFunction,
    ) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::domain("need at least two categories"));
        }
        if n_x < 1 {
            return Err(Error::domain("need at least one covariate value"));
        }
        let cutpoints = (1..n_categories)
            .map(|y| link.quantile(y as f64 / n_categories as f64))
            .collect::<Result<Vec<_>>>()?;
        let xs = if n_x == 1 {
            vec![0.0]
        } else {
            (0..n_x)
                .map(|i| -1.0 + 2.0 * i as f64 / (n_x - 1) as f64)
                .collect()
        };
        OrdinalSpec::new(cutpoints, beta1, beta2, xs, link)
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn beta(&self, margin: usize) -> f64 {
        if margin == 0 {
            self.beta1
        } else {
            self.beta2
        }
    }

    /// Cumulative category probabilities `G(alpha_y + beta x)` for
    /// y = 0..=Y (grounded at 0 and 1).
    fn cumulative(&self, x: f64, margin: usize) -> Vec<f64> {
        let beta = self.beta(margin);
        let mut cs = Vec::with_capacity(self.n_categories + 1);
        cs.push(0.0);
        for &a in &self.cutpoints {
            cs.push(self.link.cdf(a + beta * x));
        }
        cs.push(1.0);
        cs
    }
}

/// `P(Y_j = y | x)` under the ordinal regression of margin `j`.
pub fn ordinal_pmf(y: usize, x: f64, spec: &OrdinalSpec, margin: usize) -> f64 {
    assert!(y < spec.n_categories, "category out of range");
    let cs = spec.cumulative(x, margin);
    cs[y + 1] - cs[y]
}

/// Joint pmf of `(Y1, Y2)` at covariate `x` under a copula model.
pub fn biv_pmf(
    y1: usize,
    y2: usize,
    x: f64,
    spec: &OrdinalSpec,
    cop: &impl BivariateCopula,
) -> Result<f64> {
    assert!(y1 < spec.n_categories && y2 < spec.n_categories);
    let c1 = spec.cumulative(x, 0);
    let c2 = spec.cumulative(x, 1);
    let rect = cop.cdf(c1[y1 + 1], c2[y2 + 1]) - cop.cdf(c1[y1], c2[y2 + 1])
        - cop.cdf(c1[y1 + 1], c2[y2])
        + cop.cdf(c1[y1], c2[y2]);
    check_cell(rect)
}

fn check_cell(rect: f64) -> Result<f64> {
    if rect < -1e-12 {
        return Err(Error::numeric(format!(
            "rectangle probability {rect} is negative beyond tolerance"
        )));
    }
    Ok(rect.max(0.0))
}

/// Per-covariate joint pmf matrices of a copula model.
#[derive(Debug, Clone, Serialize)]
pub struct DiscretePmfTable {
    pub xs: Vec<f64>,
    /// One row-major `Y x Y` matrix per covariate value.
    pub matrices: Vec<Vec<f64>>,
}

/// All joint pmfs over the covariate grid.
pub fn pmf_table(spec: &OrdinalSpec, cop: &impl BivariateCopula) -> Result<DiscretePmfTable> {
    let yy = spec.n_categories;
    let mut matrices = Vec::with_capacity(spec.xs.len());
    for &x in &spec.xs {
        let c1 = spec.cumulative(x, 0);
        let c2 = spec.cumulative(x, 1);
        let grid = cop.cdf_grid(&c1, &c2);
        let at = |i: usize, j: usize| grid[i * (yy + 1) + j];
        let mut m = Vec::with_capacity(yy * yy);
        for y1 in 0..yy {
            for y2 in 0..yy {
                let rect = at(y1 + 1, y2 + 1) - at(y1, y2 + 1) - at(y1 + 1, y2) + at(y1, y2);
                m.push(check_cell(rect)?);
            }
        }
        matrices.push(m);
    }
    Ok(DiscretePmfTable {
        xs: spec.xs.clone(),
        matrices,
    })
}

/// Discrete KL distance between two copula models sharing `spec`:
/// the average over the covariate grid of
/// `sum_{y1,y2} f log(f/g)`.
pub fn kl_discrete(
    spec: &OrdinalSpec,
    cop_f: &impl BivariateCopula,
    cop_g: &impl BivariateCopula,
) -> Result<f64> {
    let f = pmf_table(spec, cop_f)?;
    let g = pmf_table(spec, cop_g)?;
    Ok(kl_between_tables(&f, &g)?.0)
}

/// `(mean KL, log-ratio variance)` of two pmf tables with the covariate
/// uniform over the grid.
fn kl_between_tables(f: &DiscretePmfTable, g: &DiscretePmfTable) -> Result<(f64, f64)> {
    let mut kl = 0.0;
    let mut m2 = 0.0;
    for (fx, gx) in f.matrices.iter().zip(&g.matrices) {
        for (&fv, &gv) in fx.iter().zip(gx) {
            if fv <= 0.0 {
                continue;
            }
            if gv <= 0.0 {
                return Err(Error::numeric(
                    "comparison pmf vanishes where the target has mass",
                ));
            }
            let lr = (fv / gv).ln();
            kl += fv * lr;
            m2 += fv * lr * lr;
        }
    }
    let nx = f.matrices.len() as f64;
    let klbar = kl / nx;
    let sigma2 = (m2 / nx - klbar * klbar).max(0.0);
    Ok((klbar, sigma2))
}

/// Minimize the discrete KL distance from a discretized target copula to
/// a discretized K-component mixture copula.
pub fn kl_discrete_minimize(
    target: &Copula,
    spec: &OrdinalSpec,
    k: usize,
    opts: &KlMinimizeOptions,
) -> Result<KlReport> {
    if k < 1 {
        return Err(Error::domain("K must be at least 1"));
    }
    let f = pmf_table(spec, target)?;
    let par = FnmParametrization { k };

    let objective = |z: &[f64]| -> f64 {
        let nat = par.to_natural(z);
        let params = match FnmParams::from_flat(k, &nat) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let g = match pmf_table(spec, &FnmCopula::new(params)) {
            Ok(g) => g,
            Err(_) => return f64::INFINITY,
        };
        match kl_between_tables(&f, &g) {
            Ok((kl, _)) => kl,
            Err(_) => f64::INFINITY,
        }
    };

    let bfgs = BfgsOptions {
        max_iterations: 500,
        gradient_tolerance: 1e-7,
        relative_f_tolerance: 1e-14,
    };
    // Same canonical-first protocol as the continuous minimizer; the
    // discrete problem is nearly interpolating for small Y, so the
    // canonical optimum is the reproducible one.
    const RESOLVED_KL: f64 = 2e-3;
    let mut canonical = vec![par.to_unconstrained(&independence_start(k))];
    if let Some(s) = tau_matched_start(target, k) {
        canonical.push(par.to_unconstrained(&s));
    }
    for extra in &opts.extra_starts {
        if extra.k() == k {
            canonical.push(par.to_unconstrained(&extra.flat()));
        }
    }
    let mut best: Option<optim::BfgsResult> = None;
    let mut starts_used = 0usize;
    let consider = |best: &mut Option<optim::BfgsResult>, r: optim::BfgsResult| {
        if r.f.is_finite() {
            let better = match best {
                None => true,
                Some(b) => r.f < b.f - 1e-12,
            };
            if better {
                *best = Some(r);
            }
        }
    };
    for s in &canonical {
        starts_used += 1;
        consider(&mut best, optim::minimize(objective, s, &bfgs));
    }
    let resolved = best.as_ref().map(|b| b.f <= RESOLVED_KL).unwrap_or(false);
    if !resolved {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        while starts_used < opts.n_starts.max(1) {
            starts_used += 1;
            let s = par.to_unconstrained(&random_start(k, &mut rng));
            consider(&mut best, optim::minimize(objective, &s, &bfgs));
        }
    }
    let best = best.ok_or_else(|| {
        Error::numeric(format!("all {starts_used} starts failed to converge"))
    })?;

    let params = FnmParams::from_flat(k, &par.to_natural(&best.x))?;
    let g = pmf_table(spec, &FnmCopula::new(params.clone()))?;
    let (kl, sigma2) = kl_between_tables(&f, &g)?;
    let sample_size = if kl > 0.0 {
        Some(opts.sample_size_formula.evaluate(kl, sigma2)?)
    } else {
        None
    };
    Ok(KlReport {
        target: target.clone(),
        kl,
        sigma2,
        sample_size,
        fnm_params: params,
        gradient_norm: best.gradient_norm,
        starts_used,
    })
}
