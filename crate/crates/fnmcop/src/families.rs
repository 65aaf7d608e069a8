//! The comparison suite of parametric copula families: BVN, Student-t,
//! Frank, Clayton, Gumbel, BB1 and BB7, plus the survival (reflection)
//! transform.
//!
//! Each family exposes the cdf, density, conditional cdf
//! `C_{2|1}(u2|u1)` and its inverse, and closed-form conversions to
//! Kendall's tau and the tail-dependence coefficients. Densities and
//! conditionals are evaluated in log space so strong-dependence
//! parameters stay finite near the corners.
//!
//! A note on the printed tail formulas: the standard upper-tail
//! coefficient of the Gumbel and BB7 families is `2 - 2^{1/theta}` (a
//! value in [0,1)); the variant `2^{1/theta}` sometimes seen in print
//! exceeds one and is a known erratum.

use crate::copula::{BivariateCopula, ConditionalCopula};
use crate::error::{Error, Result};
use crate::gauss::{self, Correlation, DegreesOfFreedom};
use crate::quad::integrate_adaptive;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;
use std::str::FromStr;

/// Family tags, used for CLI parsing and tau inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Bvn,
    T,
    Frank,
    Clayton,
    Gumbel,
    Bb1,
    Bb7,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Bvn => "bvn",
            FamilyKind::T => "t",
            FamilyKind::Frank => "frank",
            FamilyKind::Clayton => "clayton",
            FamilyKind::Gumbel => "gumbel",
            FamilyKind::Bb1 => "bb1",
            FamilyKind::Bb7 => "bb7",
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bvn" | "gaussian" | "normal" => Ok(FamilyKind::Bvn),
            "t" | "student" | "student-t" => Ok(FamilyKind::T),
            "frank" => Ok(FamilyKind::Frank),
            "clayton" => Ok(FamilyKind::Clayton),
            "gumbel" => Ok(FamilyKind::Gumbel),
            "bb1" => Ok(FamilyKind::Bb1),
            "bb7" => Ok(FamilyKind::Bb7),
            other => Err(Error::input(format!("unknown copula family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Bvn { theta: Correlation },
    T { theta: Correlation, nu: DegreesOfFreedom },
    Frank { theta: f64 },
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Bb1 { theta: f64, delta: f64 },
    Bb7 { theta: f64, delta: f64 },
}

/// A parametric copula, optionally survival-reflected.
#[derive(Debug, Clone, PartialEq)]
pub struct Copula {
    family: Family,
    survival: bool,
}

/// Tail dependence coefficients and tail orders.
///
/// `lambda > 0` forces `kappa = 1`; `kappa = 2` forces `lambda = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSummary {
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub kappa_l: f64,
    pub kappa_u: f64,
}

impl Copula {
    pub fn bvn(theta: f64) -> Result<Self> {
        Ok(Copula {
            family: Family::Bvn {
                theta: Correlation::new(theta)?,
            },
            survival: false,
        })
    }

    pub fn t(theta: f64, nu: f64) -> Result<Self> {
        Ok(Copula {
            family: Family::T {
                theta: Correlation::new(theta)?,
                nu: DegreesOfFreedom::new(nu)?,
            },
            survival: false,
        })
    }

    pub fn frank(theta: f64) -> Result<Self> {
        if theta == 0.0 || !theta.is_finite() {
            return Err(Error::domain("Frank copula requires finite theta != 0"));
        }
        Ok(Copula {
            family: Family::Frank { theta },
            survival: false,
        })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::domain("Clayton copula requires theta > 0"));
        }
        Ok(Copula {
            family: Family::Clayton { theta },
            survival: false,
        })
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        if !(theta >= 1.0) || !theta.is_finite() {
            return Err(Error::domain("Gumbel copula requires theta >= 1"));
        }
        Ok(Copula {
            family: Family::Gumbel { theta },
            survival: false,
        })
    }

    pub fn bb1(theta: f64, delta: f64) -> Result<Self> {
        if !(theta > 0.0 && delta >= 1.0) || !theta.is_finite() || !delta.is_finite() {
            return Err(Error::domain("BB1 copula requires theta > 0 and delta >= 1"));
        }
        Ok(Copula {
            family: Family::Bb1 { theta, delta },
            survival: false,
        })
    }

    pub fn bb7(theta: f64, delta: f64) -> Result<Self> {
        if !(theta >= 1.0 && delta > 0.0) || !theta.is_finite() || !delta.is_finite() {
            return Err(Error::domain("BB7 copula requires theta >= 1 and delta > 0"));
        }
        Ok(Copula {
            family: Family::Bb7 { theta, delta },
            survival: false,
        })
    }

    /// The survival (reflection) copula of `self`.
    pub fn survival(&self) -> Copula {
        Copula {
            family: self.family.clone(),
            survival: !self.survival,
        }
    }

    pub fn is_survival(&self) -> bool {
        self.survival
    }

    pub fn kind(&self) -> FamilyKind {
        match self.family {
            Family::Bvn { .. } => FamilyKind::Bvn,
            Family::T { .. } => FamilyKind::T,
            Family::Frank { .. } => FamilyKind::Frank,
            Family::Clayton { .. } => FamilyKind::Clayton,
            Family::Gumbel { .. } => FamilyKind::Gumbel,
            Family::Bb1 { .. } => FamilyKind::Bb1,
            Family::Bb7 { .. } => FamilyKind::Bb7,
        }
    }

    pub fn theta(&self) -> f64 {
        match &self.family {
            Family::Bvn { theta } | Family::T { theta, .. } => theta.value(),
            Family::Frank { theta }
            | Family::Clayton { theta }
            | Family::Gumbel { theta }
            | Family::Bb1 { theta, .. }
            | Family::Bb7 { theta, .. } => *theta,
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match &self.family {
            Family::Bb1 { delta, .. } | Family::Bb7 { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match &self.family {
            Family::T { nu, .. } => Some(nu.value()),
            _ => None,
        }
    }

    /// Build a one-parameter family (or the t copula, given `nu`) at the
    /// parameter implied by Kendall's tau.
    pub fn from_tau(kind: FamilyKind, tau: f64, nu: Option<f64>) -> Result<Copula> {
        match kind {
            FamilyKind::T => Copula::t(
                theta_for_tau(FamilyKind::T, tau)?,
                nu.ok_or_else(|| Error::domain("t copula needs degrees of freedom"))?,
            ),
            FamilyKind::Bvn => Copula::bvn(theta_for_tau(kind, tau)?),
            FamilyKind::Frank => Copula::frank(theta_for_tau(kind, tau)?),
            FamilyKind::Clayton => Copula::clayton(theta_for_tau(kind, tau)?),
            FamilyKind::Gumbel => Copula::gumbel(theta_for_tau(kind, tau)?),
            FamilyKind::Bb1 | FamilyKind::Bb7 => Err(Error::domain(
                "two-parameter families are not determined by tau alone",
            )),
        }
    }

    /// BB1 copula with the given lower/upper tail-dependence pair.
    pub fn bb1_from_tails(lambda_l: f64, lambda_u: f64) -> Result<Copula> {
        if !(lambda_l > 0.0 && lambda_l < 1.0 && lambda_u > 0.0 && lambda_u < 1.0) {
            return Err(Error::domain(
                "BB1 tail coefficients must lie strictly inside (0, 1)",
            ));
        }
        let ln2 = std::f64::consts::LN_2;
        let delta = ln2 / (2.0 - lambda_u).ln();
        let theta = ln2 / (delta * (1.0 / lambda_l).ln());
        Copula::bb1(theta, delta)
    }

    /// Kendall's tau. Closed form for every family except BB7, which is
    /// integrated numerically.
    pub fn kendall_tau(&self) -> f64 {
        // reflection leaves concordance unchanged
        match &self.family {
            Family::Bvn { theta } | Family::T { theta, .. } => {
                (2.0 / std::f64::consts::PI) * theta.value().asin()
            }
            Family::Frank { theta } => frank_tau(*theta),
            Family::Clayton { theta } => theta / (theta + 2.0),
            Family::Gumbel { theta } => 1.0 - 1.0 / theta,
            Family::Bb1 { theta, delta } => 1.0 - 2.0 / (delta * (theta + 2.0)),
            Family::Bb7 { .. } => {
                let base = Copula {
                    family: self.family.clone(),
                    survival: false,
                };
                crate::dependence::kendall_tau_numeric(&base, 1e-5, 2_000_000)
                    .map(|t| t.tau)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Tail dependence coefficients and tail orders; the survival
    /// transform swaps lower and upper.
    pub fn tail_summary(&self) -> TailSummary {
        let base = match &self.family {
            Family::Bvn { theta } => {
                let k = (2.0 / (1.0 + theta.value())).clamp(1.0, 2.0);
                TailSummary {
                    lambda_l: 0.0,
                    lambda_u: 0.0,
                    kappa_l: k,
                    kappa_u: k,
                }
            }
            Family::T { theta, nu } => {
                let v = nu.value();
                let th = theta.value();
                let arg = -((v + 1.0) * (1.0 - th) / (1.0 + th)).sqrt();
                let lam = 2.0 * gauss::t_cdf(arg, DegreesOfFreedom::new(v + 1.0).unwrap());
                TailSummary {
                    lambda_l: lam,
                    lambda_u: lam,
                    kappa_l: 1.0,
                    kappa_u: 1.0,
                }
            }
            Family::Frank { .. } => TailSummary {
                lambda_l: 0.0,
                lambda_u: 0.0,
                kappa_l: 2.0,
                kappa_u: 2.0,
            },
            Family::Clayton { theta } => TailSummary {
                lambda_l: (-std::f64::consts::LN_2 / theta).exp(),
                lambda_u: 0.0,
                kappa_l: 1.0,
                kappa_u: 2.0,
            },
            Family::Gumbel { theta } => {
                let lam_u = 2.0 - (std::f64::consts::LN_2 / theta).exp();
                TailSummary {
                    lambda_l: 0.0,
                    lambda_u: lam_u,
                    kappa_l: ((std::f64::consts::LN_2 / theta).exp()).clamp(1.0, 2.0),
                    kappa_u: if lam_u > 0.0 { 1.0 } else { 2.0 },
                }
            }
            Family::Bb1 { theta, delta } => {
                let lam_u = 2.0 - (std::f64::consts::LN_2 / delta).exp();
                TailSummary {
                    lambda_l: (-std::f64::consts::LN_2 / (theta * delta)).exp(),
                    lambda_u: lam_u,
                    kappa_l: 1.0,
                    kappa_u: if lam_u > 0.0 { 1.0 } else { 2.0 },
                }
            }
            Family::Bb7 { theta, delta } => {
                let lam_u = 2.0 - (std::f64::consts::LN_2 / theta).exp();
                TailSummary {
                    lambda_l: (-std::f64::consts::LN_2 / delta).exp(),
                    lambda_u: lam_u,
                    kappa_l: 1.0,
                    kappa_u: if lam_u > 0.0 { 1.0 } else { 2.0 },
                }
            }
        };
        if self.survival {
            TailSummary {
                lambda_l: base.lambda_u,
                lambda_u: base.lambda_l,
                kappa_l: base.kappa_u,
                kappa_u: base.kappa_l,
            }
        } else {
            base
        }
    }

    /// Number of free parameters (1, or 2 for t/BB1/BB7).
    pub fn parameter_count(&self) -> usize {
        match self.family {
            Family::T { .. } | Family::Bb1 { .. } | Family::Bb7 { .. } => 2,
            _ => 1,
        }
    }

    pub fn label(&self) -> String {
        if self.survival {
            format!("survival {}", self.kind().name())
        } else {
            self.kind().name().to_string()
        }
    }
}

// ---------- serialization ----------

#[derive(Serialize, Deserialize)]
struct CopulaRepr {
    family: String,
    theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default)]
    survival: bool,
}

impl Serialize for Copula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CopulaRepr {
            family: self.kind().name().to_string(),
            theta: self.theta(),
            delta: self.delta(),
            nu: self.nu(),
            survival: self.survival,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Copula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CopulaRepr::deserialize(d)?;
        Copula::from_parts(
            repr.family.parse().map_err(serde::de::Error::custom)?,
            repr.theta,
            repr.delta,
            repr.nu,
            repr.survival,
        )
        .map_err(serde::de::Error::custom)
    }
}

impl Copula {
    pub fn from_parts(
        kind: FamilyKind,
        theta: f64,
        delta: Option<f64>,
        nu: Option<f64>,
        survival: bool,
    ) -> Result<Copula> {
        let base = match kind {
            FamilyKind::Bvn => Copula::bvn(theta)?,
            FamilyKind::T => Copula::t(
                theta,
                nu.ok_or_else(|| Error::domain("t copula needs nu"))?,
            )?,
            FamilyKind::Frank => Copula::frank(theta)?,
            FamilyKind::Clayton => Copula::clayton(theta)?,
            FamilyKind::Gumbel => Copula::gumbel(theta)?,
            FamilyKind::Bb1 => Copula::bb1(
                theta,
                delta.ok_or_else(|| Error::domain("BB1 needs delta"))?,
            )?,
            FamilyKind::Bb7 => Copula::bb7(
                theta,
                delta.ok_or_else(|| Error::domain("BB7 needs delta"))?,
            )?,
        };
        Ok(if survival { base.survival() } else { base })
    }
}

// ---------- tau conversions ----------

/// First Debye function `D_1(x) = (1/x) \int_0^x t/(e^t - 1) dt`, x > 0.
pub fn debye1(x: f64) -> f64 {
    assert!(x > 0.0);
    let f = |t: f64| {
        if t < 1e-8 {
            1.0 - t / 2.0
        } else {
            t / t.exp_m1()
        }
    };
    integrate_adaptive(f, 0.0, x, 1e-12 * x.max(1.0)) / x
}

fn frank_tau(theta: f64) -> f64 {
    if theta < 0.0 {
        return -frank_tau(-theta);
    }
    1.0 + 4.0 * (debye1(theta) - 1.0) / theta
}

/// Invert the tau relation of a one-parameter family (closed form where
/// it exists, bisection for Frank).
pub fn theta_for_tau(kind: FamilyKind, tau: f64) -> Result<f64> {
    match kind {
        FamilyKind::Bvn | FamilyKind::T => {
            if tau.abs() >= 1.0 {
                return Err(Error::domain(format!("tau = {tau} unattainable")));
            }
            Ok((std::f64::consts::PI * tau / 2.0).sin())
        }
        FamilyKind::Clayton => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::domain(format!(
                    "Clayton requires tau in (0,1), got {tau}"
                )));
            }
            Ok(2.0 * tau / (1.0 - tau))
        }
        FamilyKind::Gumbel => {
            if !(0.0..1.0).contains(&tau) {
                return Err(Error::domain(format!(
                    "Gumbel requires tau in [0,1), got {tau}"
                )));
            }
            Ok(1.0 / (1.0 - tau))
        }
        FamilyKind::Frank => {
            if tau == 0.0 || tau.abs() >= 1.0 {
                return Err(Error::domain(format!(
                    "Frank requires tau in (-1,1) \\ {{0}}, got {tau}"
                )));
            }
            let target = tau.abs();
            let (mut lo, mut hi) = (1e-9, 1e3);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if frank_tau(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            Ok(if tau < 0.0 { -theta } else { theta })
        }
        FamilyKind::Bb1 | FamilyKind::Bb7 => Err(Error::domain(
            "two-parameter families are not determined by tau alone",
        )),
    }
}

// ---------- numeric helpers ----------

#[inline]
fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m.is_infinite() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln(1 + e^x), overflow-safe.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 33.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(e^a - 1) for a > 0.
#[inline]
fn ln_expm1(a: f64) -> f64 {
    if a > 33.0 {
        a
    } else {
        a.exp_m1().ln()
    }
}

fn check_interior(u1: f64, u2: f64) -> Result<()> {
    if u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "copula density requires (u1, u2) in the open unit square, got ({u1}, {u2})"
        )))
    }
}

// ---------- family kernels (no survival handling here) ----------

impl Family {
    fn cdf(&self, u1: f64, u2: f64) -> f64 {
        match self {
            Family::Bvn { theta } => {
                let z1 = gauss::norm_quantile(u1).expect("interior u");
                let z2 = gauss::norm_quantile(u2).expect("interior u");
                gauss::bvn_cdf(z1, z2, *theta)
            }
            Family::T { theta, nu } => {
                let x1 = gauss::t_quantile(u1, *nu).expect("interior u");
                let x2 = gauss::t_quantile(u2, *nu).expect("interior u");
                bvt_cdf(x1, x2, theta.value(), nu.value())
            }
            Family::Frank { theta } => {
                let th = *theta;
                if th < 0.0 {
                    // reflect the first margin onto positive dependence
                    return u2 - Family::Frank { theta: -th }.cdf(1.0 - u1, u2);
                }
                let a = (-th * u1).exp();
                let b = (-th * u2).exp();
                let e = (-th).exp();
                let d = a + b - a * b - e;
                -(d / (1.0 - e)).ln() / th
            }
            Family::Clayton { theta } => {
                let th = *theta;
                let a = -th * u1.ln();
                let b = -th * u2.ln();
                let m = a.max(b);
                let ln_s = m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln();
                (-ln_s / th).exp()
            }
            Family::Gumbel { theta } => {
                let th = *theta;
                let lx = (-u1.ln()).ln();
                let ly = (-u2.ln()).ln();
                let ln_s = logaddexp(th * lx, th * ly) / th;
                (-ln_s.exp()).exp()
            }
            Family::Bb1 { theta, delta } => {
                let (ln_x, _, _) = bb1_lnx(u1, *theta, *delta);
                let (ln_y, _, _) = bb1_lnx(u2, *theta, *delta);
                let ln_s = logaddexp(ln_x, ln_y);
                let ln_w = ln_s / delta;
                // (1 + w)^{-1/theta}
                (-softplus(ln_w) / theta).exp()
            }
            Family::Bb7 { theta, delta } => {
                let (ln_x, _, _) = bb7_lnx(u1, *theta, *delta);
                let (ln_y, _, _) = bb7_lnx(u2, *theta, *delta);
                let ln_s = {
                    let m = ln_x.max(ln_y);
                    m + ((ln_x - m).exp() + (ln_y - m).exp() - (-m).exp()).ln()
                };
                let ln_w = -ln_s / delta;
                let one_m_w = -ln_w.exp_m1();
                // 1 - (1 - w)^{1/theta}
                -(one_m_w.ln() / theta).exp_m1()
            }
        }
    }

    fn ln_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        check_interior(u1, u2)?;
        let v = match self {
            Family::Bvn { theta } => {
                let th = theta.value();
                let z1 = gauss::norm_quantile(u1)?;
                let z2 = gauss::norm_quantile(u2)?;
                let omr2 = (1.0 - th) * (1.0 + th);
                -0.5 * omr2.ln()
                    - (th * th * (z1 * z1 + z2 * z2) - 2.0 * th * z1 * z2) / (2.0 * omr2)
            }
            Family::T { theta, nu } => {
                let th = theta.value();
                let v = nu.value();
                let x1 = gauss::t_quantile(u1, *nu)?;
                let x2 = gauss::t_quantile(u2, *nu)?;
                let omr2 = (1.0 - th) * (1.0 + th);
                let q = x1 * x1 - 2.0 * th * x1 * x2 + x2 * x2;
                let ln_joint = ln_gamma((v + 2.0) / 2.0)
                    - ln_gamma(v / 2.0)
                    - (v * std::f64::consts::PI).ln()
                    - 0.5 * omr2.ln()
                    - 0.5 * (v + 2.0) * (q / (v * omr2)).ln_1p();
                ln_joint
                    - gauss::t_pdf(x1, *nu).ln()
                    - gauss::t_pdf(x2, *nu).ln()
            }
            Family::Frank { theta } => {
                let th = *theta;
                if th < 0.0 {
                    return Family::Frank { theta: -th }.ln_pdf(1.0 - u1, u2);
                }
                let a = (-th * u1).exp();
                let b = (-th * u2).exp();
                let e = (-th).exp();
                let d = a + b - a * b - e;
                th.ln() + (1.0 - e).ln() - th * (u1 + u2) - 2.0 * d.ln()
            }
            Family::Clayton { theta } => {
                let th = *theta;
                let a = -th * u1.ln();
                let b = -th * u2.ln();
                let m = a.max(b);
                let ln_s = m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln();
                (1.0 + th).ln() + (1.0 + th) * (a + b) / th - (1.0 / th + 2.0) * ln_s
            }
            Family::Gumbel { theta } => {
                let th = *theta;
                let x = -u1.ln();
                let y = -u2.ln();
                let ln_s = logaddexp(th * x.ln(), th * y.ln()) / th;
                let s = ln_s.exp();
                -s + (th - 1.0) * (x.ln() + y.ln()) + (s + th - 1.0).ln()
                    + (1.0 - 2.0 * th) * ln_s
                    + x
                    + y
            }
            Family::Bb1 { theta, delta } => {
                let th = *theta;
                let de = *delta;
                let (ln_x, ln_g1, a1) = bb1_lnx(u1, th, de);
                let (ln_y, ln_g2, a2) = bb1_lnx(u2, th, de);
                let ln_s = logaddexp(ln_x, ln_y);
                let ln_w = ln_s / de;
                let ln_1pw = softplus(ln_w);
                // ln[(1+th) w + th (de-1) (1+w)]
                let bracket = if ln_w > 33.0 {
                    ln_w + (1.0 + th + th * (de - 1.0)).ln()
                } else {
                    let w = ln_w.exp();
                    ((1.0 + th) * w + th * (de - 1.0) * (1.0 + w)).ln()
                };
                -(1.0 / th + 2.0) * ln_1pw + (1.0 / de - 2.0) * ln_s + bracket
                    + (de - 1.0) * (ln_g1 + ln_g2)
                    + (th + 1.0) * (a1 + a2) / th
            }
            Family::Bb7 { theta, delta } => {
                let th = *theta;
                let de = *delta;
                let (ln_x, ln_h1, ub) = bb7_lnx(u1, th, de);
                let (ln_y, ln_h2, vb) = bb7_lnx(u2, th, de);
                let ln_s = {
                    let m = ln_x.max(ln_y);
                    m + ((ln_x - m).exp() + (ln_y - m).exp() - (-m).exp()).ln()
                };
                let ln_w = -ln_s / de;
                let w = ln_w.exp();
                let one_m_w = -ln_w.exp_m1(); // 1 - w, stable near w = 1
                (th - 1.0) * (ub.ln() + vb.ln()) - (de + 1.0) * (ln_h1 + ln_h2)
                    + (-1.0 / de - 2.0) * ln_s
                    + (1.0 / th - 2.0) * one_m_w.ln()
                    + (th * (de + 1.0) * one_m_w + (th - 1.0) * w).ln()
            }
        };
        if v.is_nan() {
            return Err(Error::numeric(format!(
                "copula log-density evaluation failed at ({u1}, {u2})"
            )));
        }
        Ok(v)
    }

    fn conditional_cdf(&self, u2: f64, u1: f64) -> Result<f64> {
        check_interior(u1, u2)?;
        let v = match self {
            Family::Bvn { theta } => {
                let th = theta.value();
                let z1 = gauss::norm_quantile(u1)?;
                let z2 = gauss::norm_quantile(u2)?;
                gauss::norm_cdf((z2 - th * z1) / ((1.0 - th) * (1.0 + th)).sqrt())
            }
            Family::T { theta, nu } => {
                let th = theta.value();
                let v = nu.value();
                let x1 = gauss::t_quantile(u1, *nu)?;
                let x2 = gauss::t_quantile(u2, *nu)?;
                let s = ((v + x1 * x1) * (1.0 - th) * (1.0 + th) / (v + 1.0)).sqrt();
                gauss::t_cdf((x2 - th * x1) / s, DegreesOfFreedom::new(v + 1.0)?)
            }
            Family::Frank { theta } => {
                let th = *theta;
                if th < 0.0 {
                    return Family::Frank { theta: -th }.conditional_cdf(u2, 1.0 - u1);
                }
                let a = (-th * u1).exp();
                let b = (-th * u2).exp();
                let e = (-th).exp();
                let d = a + b - a * b - e;
                a * (1.0 - b) / d
            }
            Family::Clayton { theta } => {
                let th = *theta;
                // [1 + u1^th (u2^{-th} - 1)]^{-1 - 1/th}
                let x = -th * (u2.ln() - u1.ln()); // ln of u1^th u2^-th exponent argument
                let y = th * u1.ln(); // ln u1^th
                let ln_arg = if x > 33.0 {
                    x + ((1.0 - y.exp()) * (-x).exp()).ln_1p()
                } else {
                    (x.exp() - y.exp()).ln_1p()
                };
                (-(1.0 + 1.0 / th) * ln_arg).exp()
            }
            Family::Gumbel { theta } => {
                let th = *theta;
                let x = -u1.ln();
                let y = -u2.ln();
                let ln_s = logaddexp(th * x.ln(), th * y.ln()) / th;
                let s = ln_s.exp();
                (-s + (1.0 - th) * (ln_s - x.ln()) + x).exp()
            }
            Family::Bb1 { theta, delta } => {
                let th = *theta;
                let de = *delta;
                let (ln_x, ln_g1, a1) = bb1_lnx(u1, th, de);
                let (ln_y, _, _) = bb1_lnx(u2, th, de);
                let ln_s = logaddexp(ln_x, ln_y);
                let ln_w = ln_s / de;
                (-(1.0 / th + 1.0) * softplus(ln_w)
                    + (1.0 / de - 1.0) * ln_s
                    + (de - 1.0) * ln_g1
                    + (th + 1.0) * a1 / th)
                    .exp()
            }
            Family::Bb7 { theta, delta } => {
                let th = *theta;
                let de = *delta;
                let (ln_x, ln_h1, ub) = bb7_lnx(u1, th, de);
                let (ln_y, _, _) = bb7_lnx(u2, th, de);
                let ln_s = {
                    let m = ln_x.max(ln_y);
                    m + ((ln_x - m).exp() + (ln_y - m).exp() - (-m).exp()).ln()
                };
                let ln_w = -ln_s / de;
                let one_m_w = -ln_w.exp_m1();
                ((1.0 / th - 1.0) * one_m_w.ln()
                    + (-1.0 / de - 1.0) * ln_s
                    + (th - 1.0) * ub.ln()
                    - (de + 1.0) * ln_h1)
                    .exp()
            }
        };
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "conditional cdf evaluation failed at (u2={u2} | u1={u1})"
            )));
        }
        Ok(v.clamp(0.0, 1.0))
    }
}

/// Helpers returning `(ln x, ln g, a)` with `g = u^{-theta} - 1`,
/// `x = g^delta`, `a = -theta ln u` for BB1.
fn bb1_lnx(u: f64, theta: f64, delta: f64) -> (f64, f64, f64) {
    let a = -theta * u.ln();
    let ln_g = ln_expm1(a);
    (delta * ln_g, ln_g, a)
}

/// Helpers returning `(ln x, ln h, ubar)` with `h = 1 - (1-u)^theta`,
/// `x = h^{-delta}` for BB7.
fn bb7_lnx(u: f64, theta: f64, delta: f64) -> (f64, f64, f64) {
    let ubar = 1.0 - u;
    let ln_h = (-(theta * ubar.ln()).exp_m1()).ln();
    (-delta * ln_h, ln_h, ubar)
}

/// Bivariate Student-t cdf through the chi-square scale mixture
/// `E_W[Phi2(x1 sqrt(W/nu), x2 sqrt(W/nu))]`, integrated adaptively over
/// the scale variable.
pub(crate) fn bvt_cdf(x1: f64, x2: f64, rho: f64, nu: f64) -> f64 {
    let chi = ChiSquared::new(nu).expect("valid nu");
    let w_hi = chi.inverse_cdf(1.0 - 1e-13);
    let s_hi = (w_hi / nu).sqrt();
    let corr = Correlation::new(rho).expect("valid rho");
    // density of S = sqrt(W/nu)
    let ln_norm =
        (1.0 - nu / 2.0) * std::f64::consts::LN_2 + (nu / 2.0) * nu.ln() - ln_gamma(nu / 2.0);
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_f = ln_norm + (nu - 1.0) * s.ln() - nu * s * s / 2.0;
        gauss::bvn_cdf(x1 * s, x2 * s, corr) * ln_f.exp()
    };
    let body = integrate_adaptive(integrand, 0.0, s_hi, 1e-11);
    // bounded remainder beyond the cutoff
    let tail = 1e-13 * gauss::bvn_cdf(x1 * s_hi, x2 * s_hi, corr);
    (body + tail).clamp(0.0, 1.0)
}

// ---------- public copula surface (survival-aware) ----------

impl BivariateCopula for Copula {
    fn cdf(&self, u1: f64, u2: f64) -> f64 {
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
        let v = if self.survival {
            u1 + u2 - 1.0 + self.family.cdf(1.0 - u1, 1.0 - u2)
        } else {
            self.family.cdf(u1, u2)
        };
        v.clamp((u1 + u2 - 1.0).max(0.0), u1.min(u2))
    }

    fn pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        Ok(self.ln_pdf(u1, u2)?.exp())
    }

    fn ln_pdf(&self, u1: f64, u2: f64) -> Result<f64> {
        if self.survival {
            self.family.ln_pdf(1.0 - u1, 1.0 - u2)
        } else {
            self.family.ln_pdf(u1, u2)
        }
    }
}

impl ConditionalCopula for Copula {
    fn conditional_cdf(&self, u2: f64, given_u1: f64) -> Result<f64> {
        if self.survival {
            Ok(1.0 - self.family.conditional_cdf(1.0 - u2, 1.0 - given_u1)?)
        } else {
            self.family.conditional_cdf(u2, given_u1)
        }
    }

    fn conditional_inverse(&self, q: f64, given_u1: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0 && given_u1 > 0.0 && given_u1 < 1.0) {
            return Err(Error::domain(format!(
                "conditional inverse requires arguments in (0,1), got (q={q}, u1={given_u1})"
            )));
        }
        if self.survival {
            let base = Copula {
                family: self.family.clone(),
                survival: false,
            };
            return Ok(1.0 - base.conditional_inverse(1.0 - q, 1.0 - given_u1)?);
        }
        match &self.family {
            Family::Bvn { theta } => {
                let th = theta.value();
                let z1 = gauss::norm_quantile(given_u1)?;
                let zq = gauss::norm_quantile(q)?;
                Ok(gauss::norm_cdf(
                    th * z1 + ((1.0 - th) * (1.0 + th)).sqrt() * zq,
                ))
            }
            Family::T { theta, nu } => {
                let th = theta.value();
                let v = nu.value();
                let x1 = gauss::t_quantile(given_u1, *nu)?;
                let s = ((v + x1 * x1) * (1.0 - th) * (1.0 + th) / (v + 1.0)).sqrt();
                let tq = gauss::t_quantile(q, DegreesOfFreedom::new(v + 1.0)?)?;
                Ok(gauss::t_cdf(th * x1 + s * tq, *nu))
            }
            Family::Frank { theta } => {
                let th = *theta;
                if th < 0.0 {
                    let pos = Copula::frank(-th)?;
                    return pos.conditional_inverse(q, 1.0 - given_u1);
                }
                // u2 = -(ln num - ln den)/th computed in log space
                let t1 = -th * given_u1 + (1.0 - q).ln();
                let num = logaddexp(t1, q.ln() - th);
                let den = logaddexp(t1, q.ln());
                Ok((-(num - den) / th).clamp(1e-15, 1.0 - 1e-16))
            }
            Family::Clayton { theta } => {
                let th = *theta;
                // u2 = [(q^{-th/(1+th)} - 1) u1^{-th} + 1]^{-1/th}
                let ln_t = ln_expm1(-th / (1.0 + th) * q.ln()) - th * given_u1.ln();
                Ok((-softplus(ln_t) / th).exp().clamp(1e-300, 1.0 - 1e-16))
            }
            Family::Gumbel { .. } | Family::Bb1 { .. } | Family::Bb7 { .. } => {
                self.newton_conditional_inverse(q, given_u1)
            }
        }
    }
}

impl Copula {
    /// Safeguarded Newton inversion of the conditional cdf in `u2`,
    /// with the copula density as the derivative.
    fn newton_conditional_inverse(&self, q: f64, u1: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = q; // independence start
        let eps = 1e-16;
        x = x.clamp(eps, 1.0 - eps);
        let mut f = self.conditional_cdf(x, u1)? - q;
        for _ in 0..200 {
            if f.abs() <= 1e-13 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(u1, x).unwrap_or(f64::NAN);
            let mut next = if d.is_finite() && d > 0.0 {
                x - f / d
            } else {
                f64::NAN
            };
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next.clamp(eps, 1.0 - eps);
            f = self.conditional_cdf(x, u1)? - q;
            if step <= 1e-15 {
                break;
            }
        }
        if f.abs() > 1e-9 {
            return Err(Error::numeric(format!(
                "conditional inverse failed to converge (family {}, q={q}, u1={u1}, residual={f})",
                self.label()
            )));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_test_copulas() -> Vec<Copula> {
        vec![
            Copula::bvn(0.0).unwrap(),
            Copula::bvn(0.7071067811865476).unwrap(),
            Copula::bvn(-0.6).unwrap(),
            Copula::t(0.7071067811865476, 2.0).unwrap(),
            Copula::t(0.352, 2.159).unwrap(),
            Copula::frank(5.736283).unwrap(),
            Copula::frank(-4.0).unwrap(),
            Copula::frank(38.281).unwrap(),
            Copula::clayton(2.0).unwrap(),
            Copula::clayton(0.885).unwrap(),
            Copula::gumbel(2.0).unwrap(),
            Copula::gumbel(10.0).unwrap(),
            Copula::bb1(0.36721, 2.06004).unwrap(),
            Copula::bb7(1.6, 0.9).unwrap(),
            Copula::clayton(2.0).unwrap().survival(),
            Copula::bb7(1.591, 0.25).unwrap().survival(),
        ]
    }

    #[test]
    fn parameter_domains_enforced() {
        assert!(Copula::bvn(1.0).is_err());
        assert!(Copula::t(0.5, 0.0).is_err());
        assert!(Copula::frank(0.0).is_err());
        assert!(Copula::clayton(0.0).is_err());
        assert!(Copula::clayton(-1.0).is_err());
        assert!(Copula::gumbel(0.99).is_err());
        assert!(Copula::bb1(0.5, 0.99).is_err());
        assert!(Copula::bb1(-0.5, 1.5).is_err());
        assert!(Copula::bb7(0.9, 1.0).is_err());
        assert!(Copula::bb7(1.5, 0.0).is_err());
    }

    #[test]
    fn bvn_zero_theta_is_independence() {
        let c = Copula::bvn(0.0).unwrap();
        for (u1, u2) in [(0.3, 0.7), (0.5, 0.5), (0.91, 0.08)] {
            assert_abs_diff_eq!(c.cdf(u1, u2), u1 * u2, epsilon = 1e-14);
            assert_abs_diff_eq!(c.pdf(u1, u2).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.conditional_inverse(u2, u1).unwrap(), u2, epsilon = 1e-12);
        }
    }

    #[test]
    fn clayton_cdf_formula_value() {
        // (0.5^-0.885 + 0.5^-0.885 - 1)^(-1/0.885), high-precision 0.326408001707
        let c = Copula::clayton(0.885).unwrap();
        assert_abs_diff_eq!(c.cdf(0.5, 0.5), 0.326408001707, epsilon = 1e-10);
    }

    #[test]
    fn bvn_conditional_inverse_closed_form_matches_partial_derivative() {
        let c = Copula::bvn(0.6).unwrap();
        let h = 1e-6;
        for (q, u1) in [(0.3, 0.4), (0.9, 0.2), (0.05, 0.8)] {
            let u2 = c.conditional_inverse(q, u1).unwrap();
            // numeric dC/du1 at (u1, u2) should reproduce q
            let fd = (c.cdf(u1 + h, u2) - c.cdf(u1 - h, u2)) / (2.0 * h);
            assert_abs_diff_eq!(fd, q, epsilon = 1e-6);
        }
    }

    #[test]
    fn conditional_round_trip_all_families() {
        // 9x9 grid, tolerance 1e-10
        for cop in all_test_copulas() {
            for i in 1..=9 {
                for j in 1..=9 {
                    let u1 = i as f64 / 10.0;
                    let q = j as f64 / 10.0;
                    let u2 = cop.conditional_inverse(q, u1).unwrap_or_else(|e| {
                        panic!("inverse failed for {}: {e}", cop.label())
                    });
                    let back = cop.conditional_cdf(u2, u1).unwrap();
                    assert!(
                        (back - q).abs() < 1e-10,
                        "{}: C(C^-1({q}|{u1})|{u1}) = {back}",
                        cop.label()
                    );
                }
            }
        }
    }

    #[test]
    fn conditional_cdf_matches_numeric_partial() {
        let h = 5e-7;
        for cop in all_test_copulas() {
            for (u1, u2) in [(0.3, 0.6), (0.7, 0.2), (0.5, 0.5)] {
                let cc = cop.conditional_cdf(u2, u1).unwrap();
                let fd = (cop.cdf(u1 + h, u2) - cop.cdf(u1 - h, u2)) / (2.0 * h);
                assert!(
                    (cc - fd).abs() < 5e-5,
                    "{}: conditional {cc} vs fd {fd} at ({u1},{u2})",
                    cop.label()
                );
            }
        }
    }

    #[test]
    fn pdf_matches_numeric_mixed_partial() {
        let h = 4e-5;
        for cop in all_test_copulas() {
            for (u1, u2) in [(0.35, 0.6), (0.6, 0.25), (0.5, 0.5)] {
                let pdf = cop.pdf(u1, u2).unwrap();
                let fd = (cop.cdf(u1 + h, u2 + h) - cop.cdf(u1 - h, u2 + h)
                    - cop.cdf(u1 + h, u2 - h)
                    + cop.cdf(u1 - h, u2 - h))
                    / (4.0 * h * h);
                assert!(
                    (pdf - fd).abs() < 2e-4 * pdf.max(1.0),
                    "{}: pdf {pdf} vs fd {fd} at ({u1},{u2})",
                    cop.label()
                );
            }
        }
    }

    #[test]
    fn survival_identities() {
        let base = Copula::clayton(2.0).unwrap();
        let surv = base.survival();
        assert!(surv.is_survival());
        let round = surv.survival();
        for (u1, u2) in [(0.2, 0.8), (0.5, 0.3), (0.9, 0.9)] {
            // involution
            assert_eq!(round.pdf(u1, u2).unwrap(), base.pdf(u1, u2).unwrap());
            // reflection identities
            assert_abs_diff_eq!(
                surv.pdf(u1, u2).unwrap(),
                base.pdf(1.0 - u1, 1.0 - u2).unwrap(),
                epsilon = 1e-14
            );
            let want = u1 + u2 - 1.0 + base.cdf(1.0 - u1, 1.0 - u2);
            assert_abs_diff_eq!(surv.cdf(u1, u2), want, epsilon = 1e-14);
        }
        // tails swap
        let t = base.tail_summary();
        let ts = surv.tail_summary();
        assert_eq!(t.lambda_l, ts.lambda_u);
        assert_eq!(t.kappa_l, ts.kappa_u);
        // survival Clayton theta=0.651 has lambda_U = 2^(-1/0.651)
        let sc = Copula::clayton(0.651).unwrap().survival();
        assert_abs_diff_eq!(sc.tail_summary().lambda_u, 0.345, epsilon = 5e-4);
    }

    #[test]
    fn tau_and_tail_values() {
        let g = Copula::gumbel(2.0).unwrap();
        assert_abs_diff_eq!(g.kendall_tau(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.tail_summary().lambda_u, 2.0 - 2.0f64.sqrt(), epsilon = 1e-14);

        let c = Copula::clayton(2.0).unwrap();
        assert_abs_diff_eq!(c.kendall_tau(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(
            c.tail_summary().lambda_l,
            0.5f64.sqrt(),
            epsilon = 1e-14
        );

        // t nu=2 tau=0.5: lambda = 2 T_3(-sqrt(3(1-th)/(1+th))) = 0.524920921
        let th = (std::f64::consts::PI / 4.0).sin();
        let t = Copula::t(th, 2.0).unwrap();
        assert_abs_diff_eq!(t.kendall_tau(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.tail_summary().lambda_l, 0.524920921, epsilon = 1e-8);

        // frank tau via Debye
        assert_abs_diff_eq!(
            Copula::frank(5.736283).unwrap().kendall_tau(),
            0.5,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            Copula::frank(-5.736283).unwrap().kendall_tau(),
            -0.5,
            epsilon = 1e-6
        );

        // BB1 from tails (0.4, 0.6) has tau ~ 0.59
        let bb1 = Copula::bb1_from_tails(0.4, 0.6).unwrap();
        assert_abs_diff_eq!(bb1.theta(), 0.36721, epsilon = 1e-5);
        assert_abs_diff_eq!(bb1.delta().unwrap(), 2.06004, epsilon = 1e-5);
        assert_abs_diff_eq!(bb1.kendall_tau(), 0.5899, epsilon = 1e-4);
        let ts = bb1.tail_summary();
        assert_abs_diff_eq!(ts.lambda_l, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(ts.lambda_u, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn theta_for_tau_inverts_tau() {
        assert_abs_diff_eq!(
            theta_for_tau(FamilyKind::Bvn, 0.5).unwrap(),
            (std::f64::consts::PI / 4.0).sin(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            theta_for_tau(FamilyKind::Clayton, 0.3).unwrap(),
            0.857142857142857,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(theta_for_tau(FamilyKind::Gumbel, 0.9).unwrap(), 10.0, epsilon = 1e-12);
        for kind in [
            FamilyKind::Bvn,
            FamilyKind::Frank,
            FamilyKind::Clayton,
            FamilyKind::Gumbel,
        ] {
            for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let th = theta_for_tau(kind, tau).unwrap();
                let cop = Copula::from_parts(kind, th, None, Some(4.0), false)
                    .or_else(|_| Copula::from_parts(kind, th, None, None, false))
                    .unwrap();
                assert!(
                    (cop.kendall_tau() - tau).abs() < 1e-8,
                    "{kind:?} tau {tau}"
                );
            }
        }
        assert!(theta_for_tau(FamilyKind::Clayton, -0.2).is_err());
        assert!(theta_for_tau(FamilyKind::Bb1, 0.5).is_err());
    }

    #[test]
    fn t_copula_cdf_reference_values() {
        // 30-digit references from integrating the closed-form conditional
        let cases = [
            (0.5, -0.3, 0.6, 2.0, 0.341719468258306),
            (1.2, 0.7, 0.352, 2.159, 0.64040594434984),
            (-1.0, -1.0, 0.0, 5.0, 0.0386805314738642),
        ];
        for (x1, x2, r, nu, want) in cases {
            let got = bvt_cdf(x1, x2, r, nu);
            assert!(
                (got - want).abs() < 1e-9,
                "bvt({x1},{x2},{r},{nu}) = {got}, want {want}"
            );
        }
        // copula-level grounding
        let t = Copula::t(0.6, 3.0).unwrap();
        assert_eq!(t.cdf(0.0, 0.5), 0.0);
        assert_eq!(t.cdf(0.5, 1.0), 0.5);
        assert_abs_diff_eq!(t.cdf(0.5, 0.5), 0.25 + 0.6f64.asin() / (2.0 * std::f64::consts::PI), epsilon = 1e-7);
    }

    #[test]
    fn serde_round_trip_and_case_insensitive_names() {
        let c = Copula::bb1(0.7, 1.4).unwrap().survival();
        let js = serde_json::to_string(&c).unwrap();
        assert!(js.contains("\"family\":\"bb1\""));
        assert!(js.contains("\"survival\":true"));
        let back: Copula = serde_json::from_str(&js).unwrap();
        assert_eq!(c, back);

        assert_eq!("GUMBEL".parse::<FamilyKind>().unwrap(), FamilyKind::Gumbel);
        assert_eq!("Bvn".parse::<FamilyKind>().unwrap(), FamilyKind::Bvn);
        assert!("nope".parse::<FamilyKind>().is_err());
    }

    #[test]
    fn frank_strong_dependence_stays_finite() {
        let c = Copula::frank(38.281).unwrap();
        let v = c.pdf(0.99, 0.99).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let v = c.pdf(0.994, 0.006).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        let u2 = c.conditional_inverse(0.994, 0.994).unwrap();
        assert!(u2 > 0.0 && u2 < 1.0);
    }
}
