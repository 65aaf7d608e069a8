//! Runs every code snippet in the book as a doctest, so the guide and
//! the library cannot drift apart.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/copulas.md")]
mod copulas {}
#[doc = include_str!("../../../book/src/mixture-copula.md")]
mod mixture_copula {}
#[doc = include_str!("../../../book/src/families.md")]
mod families {}
#[doc = include_str!("../../../book/src/kl.md")]
mod kl {}
#[doc = include_str!("../../../book/src/discrete.md")]
mod discrete {}
#[doc = include_str!("../../../book/src/fitting.md")]
mod fitting {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
