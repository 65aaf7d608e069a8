//! Bivariate finite normal mixture (K-FNM) copulas.
//!
//! Construction, evaluation and sampling of the K-FNM copula, a
//! comparison suite of classical parametric copula families, rank-based
//! maximum-likelihood fitting with AIC model comparison, and
//! Kullback-Leibler machinery measuring how closely the mixture copula
//! can approximate each family.

#[cfg(doctest)]
mod book;
pub mod copula;
pub mod dependence;
pub mod discrete;
pub mod error;
pub mod estimate;
pub mod families;
mod erf;
pub mod fnm;
pub mod gauss;
pub mod kl;
pub mod optim;
pub mod quad;

pub use copula::{BivariateCopula, ConditionalCopula, Independence};
pub use error::{Error, Result};
