//! Semi-parametric maximum-likelihood fitting: rank pseudo-observations,
//! copula log-likelihoods, quasi-Newton maximization in an unconstrained
//! reparametrization, delta-method standard errors and AIC.
//!
//! Mixing weights travel through a multinomial logit, correlations
//! through Fisher's z, strictly positive parameters through logs and
//! `>= 1` parameters through `log(x - 1)`, so the optimizer never sees a
//! boundary. Standard errors come from the numeric Hessian at the
//! optimum mapped back through the transform Jacobian.

use crate::copula::BivariateCopula;
use crate::dependence::kendall_tau_empirical;
use crate::error::{Error, Result};
use crate::families::{theta_for_tau, Copula, FamilyKind};
use crate::fnm::{FnmCopula, FnmParams};
use crate::optim::{self, BfgsOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Rank-based pseudo-observations `r/(n+1)` in the open unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    pairs: Vec<(f64, f64)>,
}

impl PseudoObservations {
    /// Transform two raw columns to average ranks over `n + 1`.
    pub fn from_data(col1: &[f64], col2: &[f64]) -> Result<Self> {
        if col1.len() != col2.len() {
            return Err(Error::input(format!(
                "columns disagree in length: {} vs {}",
                col1.len(),
                col2.len()
            )));
        }
        if col1.len() < 2 {
            return Err(Error::input("need at least 2 observations"));
        }
        if col1.iter().chain(col2).any(|v| !v.is_finite()) {
            return Err(Error::input("observations must be finite"));
        }
        let r1 = average_ranks(col1);
        let r2 = average_ranks(col2);
        let scale = 1.0 / (col1.len() as f64 + 1.0);
        Ok(PseudoObservations {
            pairs: r1
                .into_iter()
                .zip(r2)
                .map(|(a, b)| (a * scale, b * scale))
                .collect(),
        })
    }

    /// Wrap values that are already uniform, e.g. simulated copula draws.
    pub fn from_uniforms(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::input("need at least 2 observations"));
        }
        if pairs
            .iter()
            .any(|&(a, b)| !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0))
        {
            return Err(Error::input(
                "pseudo-observations must lie strictly inside the unit square",
            ));
        }
        Ok(PseudoObservations { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Average ranks (1-based; ties share the mean rank).
fn average_ranks(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).expect("finite"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && col[idx[j]] == col[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Log-likelihood of a K-FNM copula at the pseudo-observations
/// (`-inf` when any point underflows or fails).
pub fn loglik_fnm(params: &FnmParams, u: &PseudoObservations) -> f64 {
    let cop = FnmCopula::new(params.clone());
    loglik(&cop, u)
}

/// Log-likelihood of a parametric family copula.
pub fn loglik_family(cop: &Copula, u: &PseudoObservations) -> f64 {
    loglik(cop, u)
}

fn loglik(cop: &impl BivariateCopula, u: &PseudoObservations) -> f64 {
    let mut total = 0.0;
    for &(a, b) in u.pairs() {
        match cop.ln_pdf(a, b) {
            Ok(v) if v.is_finite() => total += v,
            _ => return f64::NEG_INFINITY,
        }
    }
    total
}

/// AIC = -2 loglik + 2 p.
pub fn aic(loglik: f64, parameter_count: usize) -> f64 {
    -2.0 * loglik + 2.0 * parameter_count as f64
}

/// What to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum FitModel {
    Fnm { k: usize },
    Family { kind: FamilyKind, survival: bool },
}

/// Fitted parameters in natural form.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FitEstimates {
    Fnm(FnmParams),
    Family(Copula),
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: String,
    pub estimates: FitEstimates,
    pub parameter_names: Vec<String>,
    pub parameter_values: Vec<f64>,
    /// Delta-method standard errors; `None` when the numeric Hessian is
    /// not negative-definite.
    pub se: Option<Vec<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub restarts_used: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Fitting knobs; `Default` gives the standard pipeline.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of starts; `None` means 5 for mixtures with K >= 2 and 1
    /// otherwise.
    pub n_restarts: Option<usize>,
    pub seed: u64,
    /// Natural-coordinate initial values overriding the default start.
    pub init: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_restarts: None,
            seed: 20_24,
            init: None,
        }
    }
}

// ---------- unconstrained reparametrizations ----------

pub(crate) trait Parametrization: Sync {
    fn dim(&self) -> usize;
    fn to_natural(&self, z: &[f64]) -> Vec<f64>;
    fn to_unconstrained(&self, natural: &[f64]) -> Vec<f64>;
    fn parameter_names(&self) -> Vec<String>;
}

pub(crate) struct FnmParametrization {
    pub k: usize,
}

const RHO_CAP: f64 = 1.0 - 1e-12;

impl Parametrization for FnmParametrization {
    fn dim(&self) -> usize {
        3 * self.k - 2
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(3 * k - 2);
        // multinomial logit with the last component as reference
        let max_z = z[..k - 1].iter().fold(0.0f64, |m, &v| m.max(v));
        let mut denom = (-max_z).exp();
        let exps: Vec<f64> = z[..k - 1]
            .iter()
            .map(|&v| {
                let e = (v - max_z).exp();
                denom += e;
                e
            })
            .collect();
        for e in exps {
            out.push((e / denom).clamp(1e-12, 1.0 - 1e-12));
        }
        out.extend_from_slice(&z[k - 1..2 * (k - 1)]);
        for &v in &z[2 * (k - 1)..] {
            out.push(v.tanh().clamp(-RHO_CAP, RHO_CAP));
        }
        out
    }

    fn to_unconstrained(&self, natural: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(3 * k - 2);
        let pi_last = (1.0 - natural[..k - 1].iter().sum::<f64>()).max(1e-12);
        for &p in &natural[..k - 1] {
            out.push((p / pi_last).ln());
        }
        out.extend_from_slice(&natural[k - 1..2 * (k - 1)]);
        for &r in &natural[2 * (k - 1)..] {
            out.push(r.clamp(-RHO_CAP, RHO_CAP).atanh());
        }
        out
    }

    fn parameter_names(&self) -> Vec<String> {
        let k = self.k;
        let mut names = Vec::new();
        for i in 1..k {
            names.push(format!("pi{i}"));
        }
        for i in 1..k {
            names.push(format!("theta{i}"));
        }
        for i in 1..=k {
            names.push(format!("rho{i}"));
        }
        names
    }
}

enum Link {
    FisherZ,
    Log,
    LogShift1,
    Identity,
}

impl Link {
    fn natural(&self, z: f64) -> f64 {
        match self {
            Link::FisherZ => z.tanh().clamp(-RHO_CAP, RHO_CAP),
            Link::Log => z.exp(),
            Link::LogShift1 => 1.0 + z.exp(),
            Link::Identity => z,
        }
    }

    fn unconstrained(&self, x: f64) -> f64 {
        match self {
            Link::FisherZ => x.clamp(-RHO_CAP, RHO_CAP).atanh(),
            Link::Log => x.ln(),
            Link::LogShift1 => (x - 1.0).max(1e-12).ln(),
            Link::Identity => x,
        }
    }
}

pub(crate) struct FamilyParametrization {
    kind: FamilyKind,
    survival: bool,
    links: Vec<Link>,
    names: Vec<String>,
}

impl FamilyParametrization {
    pub(crate) fn new(kind: FamilyKind, survival: bool) -> Self {
        let (links, names): (Vec<Link>, Vec<&str>) = match kind {
            FamilyKind::Bvn => (vec![Link::FisherZ], vec!["theta"]),
            FamilyKind::T => (vec![Link::FisherZ, Link::Log], vec!["theta", "nu"]),
            FamilyKind::Frank => (vec![Link::Identity], vec!["theta"]),
            FamilyKind::Clayton => (vec![Link::Log], vec!["theta"]),
            FamilyKind::Gumbel => (vec![Link::LogShift1], vec!["theta"]),
            FamilyKind::Bb1 => (vec![Link::Log, Link::LogShift1], vec!["theta", "delta"]),
            FamilyKind::Bb7 => (vec![Link::LogShift1, Link::Log], vec!["theta", "delta"]),
        };
        FamilyParametrization {
            kind,
            survival,
            links,
            names: names.into_iter().map(String::from).collect(),
        }
    }

    pub(crate) fn copula(&self, natural: &[f64]) -> Result<Copula> {
        let theta = natural[0];
        let (delta, nu) = match self.kind {
            FamilyKind::T => (None, Some(natural[1])),
            FamilyKind::Bb1 | FamilyKind::Bb7 => (Some(natural[1]), None),
            _ => (None, None),
        };
        Copula::from_parts(self.kind, theta, delta, nu, self.survival)
    }
}

impl Parametrization for FamilyParametrization {
    fn dim(&self) -> usize {
        self.links.len()
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .zip(z)
            .map(|(l, &v)| l.natural(v))
            .collect()
    }

    fn to_unconstrained(&self, natural: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .zip(natural)
            .map(|(l, &x)| l.unconstrained(x))
            .collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

/// Natural-parameter names of a K-component mixture fit.
pub fn fnm_parameter_names(k: usize) -> Vec<String> {
    FnmParametrization { k }.parameter_names()
}

// ---------- fitting ----------

/// Maximize the copula log-likelihood for `model` on pseudo-observations.
pub fn fit_ml(model: &FitModel, u: &PseudoObservations, opts: &FitOptions) -> Result<FitResult> {
    match model {
        FitModel::Fnm { k } => fit_fnm(*k, u, opts),
        FitModel::Family { kind, survival } => fit_family(*kind, *survival, u, opts),
    }
}

fn soft_sample_size_warning(n: usize, p: usize, warnings: &mut Vec<String>) {
    if n < 10 * p {
        warnings.push(format!(
            "only {n} observations for {p} free parameters (fewer than 10 per parameter)"
        ));
    }
}

fn pick_best(results: Vec<(usize, optim::BfgsResult)>, n: usize) -> optim::BfgsResult {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tie = 1e-8 / n as f64;
    results
        .into_iter()
        .filter(|(_, r)| r.f.is_finite())
        .min_by(|(ia, a), (ib, b)| {
            if (a.f - b.f).abs() < tie {
                let na = norm(&a.x);
                let nb = norm(&b.x);
                na.partial_cmp(&nb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(ia.cmp(ib))
            } else {
                a.f.partial_cmp(&b.f).unwrap_or(std::cmp::Ordering::Equal)
            }
        })
        .map(|(_, r)| r)
        .expect("at least one finite start")
}

fn fnm_default_init(k: usize) -> Vec<f64> {
    // independence-resembling start with a deterministic rho jitter that
    // breaks the symmetric stationary point
    let mut natural = Vec::with_capacity(3 * k - 2);
    for _ in 1..k {
        natural.push(1.0 / k as f64);
    }
    for _ in 1..k {
        natural.push(0.0);
    }
    for i in 0..k {
        natural.push(1e-3 * (i as f64 + 1.0));
    }
    natural
}

fn fnm_random_init(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // pi uniform on the simplex, theta ~ U(-2,2), rho ~ U(-0.95, 0.95)
    let mut e: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    let mut natural: Vec<f64> = e[..k - 1].to_vec();
    for _ in 1..k {
        natural.push(rng.gen_range(-2.0..2.0));
    }
    for _ in 0..k {
        natural.push(rng.gen_range(-0.95..0.95));
    }
    natural
}

fn fit_fnm(k: usize, u: &PseudoObservations, opts: &FitOptions) -> Result<FitResult> {
    if k < 1 {
        return Err(Error::domain("K must be at least 1"));
    }
    let par = FnmParametrization { k };
    let mut warnings = Vec::new();
    soft_sample_size_warning(u.len(), par.dim(), &mut warnings);

    // Mean log-likelihood keeps the gradient scale O(1), so the
    // gradient-norm convergence test is meaningful for any n.
    let inv_n = 1.0 / u.len() as f64;
    let objective = |z: &[f64]| -> f64 {
        let nat = par.to_natural(z);
        match FnmParams::from_flat(k, &nat) {
            Ok(p) => -loglik_fnm(&p, u) * inv_n,
            Err(_) => f64::INFINITY,
        }
    };

    let n_starts = opts.n_restarts.unwrap_or(if k >= 2 { 5 } else { 1 });
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(n_starts);
    starts.push(match &opts.init {
        Some(nat) => par.to_unconstrained(nat),
        None => par.to_unconstrained(&fnm_default_init(k)),
    });
    while starts.len() < n_starts {
        starts.push(par.to_unconstrained(&fnm_random_init(k, &mut rng)));
    }
    if !objective(&starts[0]).is_finite() {
        return Err(Error::numeric(
            "log-likelihood is not finite at the initial parameters",
        ));
    }

    let bfgs_opts = BfgsOptions::default();
    let results: Vec<(usize, optim::BfgsResult)> = starts
        .iter()
        .enumerate()
        .map(|(i, s)| (i, optim::minimize(objective, s, &bfgs_opts)))
        .collect();
    let restarts_used = results.len();
    let best = pick_best(results, u.len());

    let natural = par.to_natural(&best.x);
    let params = FnmParams::from_flat(k, &natural)?;
    let ll = -best.f * u.len() as f64;
    let se = standard_errors(&par, &best.x, u.len(), objective, &mut warnings);

    Ok(FitResult {
        model: format!("fnm{k}"),
        estimates: FitEstimates::Fnm(params.clone()),
        parameter_names: par.parameter_names(),
        parameter_values: natural,
        se,
        loglik: ll,
        aic: aic(ll, params.free_parameter_count()),
        converged: best.converged,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
        restarts_used,
        warnings,
    })
}

fn family_default_init(kind: FamilyKind, tau_hat: f64) -> Vec<f64> {
    let t = tau_hat.clamp(-0.93, 0.93);
    match kind {
        FamilyKind::Bvn => vec![theta_for_tau(FamilyKind::Bvn, t).unwrap_or(0.0)],
        FamilyKind::T => vec![theta_for_tau(FamilyKind::T, t).unwrap_or(0.0), 5.0],
        FamilyKind::Frank => {
            let th = if t.abs() < 0.02 {
                0.5_f64.copysign(if t == 0.0 { 1.0 } else { t })
            } else {
                theta_for_tau(FamilyKind::Frank, t).unwrap_or(0.5)
            };
            vec![th]
        }
        FamilyKind::Clayton => vec![theta_for_tau(FamilyKind::Clayton, t.max(0.05)).unwrap()],
        FamilyKind::Gumbel => vec![theta_for_tau(FamilyKind::Gumbel, t.max(0.02)).unwrap()],
        FamilyKind::Bb1 => {
            // split the dependence between the two generators
            let tt = t.max(0.05);
            vec![2.0 * tt / (1.0 - tt) / 2.0, (1.0 / (1.0 - tt) + 1.0) / 2.0]
        }
        FamilyKind::Bb7 => {
            let tt = t.max(0.05);
            vec![(1.0 / (1.0 - tt) + 1.0) / 2.0, tt / (1.0 - tt)]
        }
    }
}

fn fit_family(
    kind: FamilyKind,
    survival: bool,
    u: &PseudoObservations,
    opts: &FitOptions,
) -> Result<FitResult> {
    let par = FamilyParametrization::new(kind, survival);
    let mut warnings = Vec::new();
    soft_sample_size_warning(u.len(), par.dim(), &mut warnings);

    let inv_n = 1.0 / u.len() as f64;
    let objective = |z: &[f64]| -> f64 {
        let nat = par.to_natural(z);
        match par.copula(&nat) {
            Ok(c) => -loglik_family(&c, u) * inv_n,
            Err(_) => f64::INFINITY,
        }
    };

    // survival reflection: the empirical tau is unchanged, so the
    // moment-matched start works for both orientations
    let tau_hat = kendall_tau_empirical(u.pairs());
    let init_nat = match &opts.init {
        Some(v) => v.clone(),
        None => family_default_init(kind, tau_hat),
    };
    let n_starts = opts.n_restarts.unwrap_or(1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![par.to_unconstrained(&init_nat)];
    while starts.len() < n_starts {
        let base = &starts[0];
        starts.push(
            base.iter()
                .map(|&z| z + rng.gen_range(-0.7..0.7))
                .collect(),
        );
    }
    if !objective(&starts[0]).is_finite() {
        return Err(Error::numeric(
            "log-likelihood is not finite at the initial parameters",
        ));
    }

    let bfgs_opts = BfgsOptions::default();
    let results: Vec<(usize, optim::BfgsResult)> = starts
        .iter()
        .enumerate()
        .map(|(i, s)| (i, optim::minimize(objective, s, &bfgs_opts)))
        .collect();
    let restarts_used = results.len();
    let best = pick_best(results, u.len());

    let natural = par.to_natural(&best.x);
    let cop = par.copula(&natural)?;
    let ll = -best.f * u.len() as f64;
    let se = standard_errors(&par, &best.x, u.len(), objective, &mut warnings);

    Ok(FitResult {
        model: cop.label(),
        estimates: FitEstimates::Family(cop.clone()),
        parameter_names: par.parameter_names(),
        parameter_values: natural,
        se,
        loglik: ll,
        aic: aic(ll, cop.parameter_count()),
        converged: best.converged,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
        restarts_used,
        warnings,
    })
}

/// Delta-method standard errors in natural coordinates; `None` when the
/// Hessian of the negative log-likelihood is not positive definite.
fn standard_errors(
    par: &dyn Parametrization,
    z_opt: &[f64],
    n: usize,
    objective: impl Fn(&[f64]) -> f64,
    warnings: &mut Vec<String>,
) -> Option<Vec<f64>> {
    // objective is the mean negative log-likelihood, so the information
    // matrix is n times its Hessian
    let mut obj = |z: &[f64]| objective(z);
    let h = optim::hessian(&mut obj, z_opt);
    let chol = match nalgebra::Cholesky::new(h) {
        Some(c) => c,
        None => {
            warnings.push(
                "Hessian not positive definite at the optimum; standard errors unavailable"
                    .to_string(),
            );
            return None;
        }
    };
    let cov_z = chol.inverse() / n as f64;
    let dim = par.dim();
    // Jacobian of natural(z) at the optimum
    let mut jac = nalgebra::DMatrix::zeros(dim, dim);
    let mut zp = z_opt.to_vec();
    for j in 0..dim {
        let hj = 1e-6 * z_opt[j].abs().max(1.0);
        zp[j] = z_opt[j] + hj;
        let np = par.to_natural(&zp);
        zp[j] = z_opt[j] - hj;
        let nm = par.to_natural(&zp);
        zp[j] = z_opt[j];
        for i in 0..dim {
            jac[(i, j)] = (np[i] - nm[i]) / (2.0 * hj);
        }
    }
    let cov_nat = &jac * cov_z * jac.transpose();
    let mut se = Vec::with_capacity(dim);
    for i in 0..dim {
        let v = cov_nat[(i, i)];
        if v.is_finite() && v >= 0.0 {
            se.push(v.sqrt());
        } else {
            warnings.push("negative variance in delta-method mapping".to_string());
            return None;
        }
    }
    Some(se)
}
