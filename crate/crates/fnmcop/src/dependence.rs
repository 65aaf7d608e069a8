//! Model-based and empirical dependence summaries: Kendall's tau by
//! adaptive bivariate integration, the tau-b sample version, and
//! finite-level tail-dependence probes.

use crate::copula::BivariateCopula;
use crate::error::{Error, Result};
use crate::quad::cubature_adaptive;
use serde::Serialize;

/// Kendall's tau computed by integration, with its achieved error bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// Kendall's tau of a copula, `tau = -1 + 4 * int int C dC`, by adaptive
/// rectangle cubature of `C * c` over the unit square.
///
/// Integration runs over `[eps, 1-eps]^2` with `eps = 1e-8`; the excluded
/// strips carry copula mass below `4 * eps`, which is folded into the
/// error bound.
pub fn kendall_tau_numeric(
    cop: &impl BivariateCopula,
    tol: f64,
    max_evaluations: usize,
) -> Result<TauEstimate> {
    let eps = 1e-8;
    let r = cubature_adaptive(
        |u, v| match cop.pdf(u, v) {
            Ok(d) => cop.cdf(u, v) * d,
            Err(_) => 0.0,
        },
        (eps, 1.0 - eps),
        (eps, 1.0 - eps),
        tol / 4.0,
        max_evaluations,
    );
    let boundary_mass = 4.0 * eps; // C*c <= c and the strips hold < 4 eps mass
    let err = 4.0 * (r.error_estimate + boundary_mass);
    if err > tol.max(1e-4) {
        return Err(Error::numeric(format!(
            "Kendall tau cubature stopped at error {err:.2e} after {} evaluations",
            r.evaluations
        )));
    }
    Ok(TauEstimate {
        tau: 4.0 * r.value - 1.0,
        abs_error_estimate: err,
        evaluations: r.evaluations,
    })
}

/// Sample Kendall's tau-b (tie-corrected) in O(n log n) via Knight's
/// merge-sort inversion count.
pub fn kendall_tau_empirical(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    assert!(n >= 2, "Kendall's tau needs at least two observations");
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite observations"));

    let n0 = n as f64 * (n as f64 - 1.0) / 2.0;
    let mut n1 = 0.0; // ties in x
    let mut n3 = 0.0; // ties in both
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        n1 += t * (t - 1.0) / 2.0;
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && sorted[l].1 == sorted[k].1 {
                l += 1;
            }
            let tt = (l - k) as f64;
            n3 += tt * (tt - 1.0) / 2.0;
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);

    let mut n2 = 0.0; // ties in y
    let mut ysorted = sorted.iter().map(|p| p.1).collect::<Vec<_>>();
    ysorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ysorted[j] == ysorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        n2 += t * (t - 1.0) / 2.0;
        i = j;
    }

    let num = n0 - n1 - n2 + n3 - 2.0 * swaps as f64;
    let den = ((n0 - n1) * (n0 - n2)).sqrt();
    num / den
}

/// Count inversions (strictly decreasing pairs) while merge-sorting.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (a, b) = v.split_at_mut(mid);
        merge_count(a) + merge_count(b)
    };
    let merged: Vec<f64> = {
        let (a, b) = v.split_at(mid);
        let mut out = Vec::with_capacity(n);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if b[j] < a[i] {
                swaps += (a.len() - i) as u64;
                out.push(b[j]);
                j += 1;
            } else {
                out.push(a[i]);
                i += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        out
    };
    v.copy_from_slice(&merged);
    swaps
}

/// Which joint tail a probe examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    Lower,
    Upper,
}

/// Finite-level conditional tail ratios: `C(u,u)/u` for the lower tail
/// and the survival analogue for the upper, at each requested level.
pub fn tail_probe(cop: &impl BivariateCopula, side: TailSide, u_levels: &[f64]) -> Vec<f64> {
    u_levels
        .iter()
        .map(|&u| match side {
            TailSide::Lower => cop.cdf(u, u) / u,
            TailSide::Upper => {
                let v = 1.0 - u;
                (2.0 * u - 1.0 + cop.cdf(v, v)) / u
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::Independence;
    use crate::families::Copula;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tau_numeric_independence_and_gaussian() {
        let t = kendall_tau_numeric(&Independence, 1e-5, 500_000).unwrap();
        assert_abs_diff_eq!(t.tau, 0.0, epsilon = 1e-5);

        let c = Copula::bvn(0.5).unwrap();
        let t = kendall_tau_numeric(&c, 1e-5, 2_000_000).unwrap();
        let want = (2.0 / std::f64::consts::PI) * 0.5f64.asin();
        assert_abs_diff_eq!(t.tau, want, epsilon = 1e-4);
    }

    #[test]
    fn empirical_tau_perfect_and_ties() {
        assert_eq!(
            kendall_tau_empirical(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]),
            1.0
        );
        assert_eq!(
            kendall_tau_empirical(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]),
            -1.0
        );
        // one tied pair in y
        let tau = kendall_tau_empirical(&[(1.0, 0.375), (2.0, 0.375), (3.0, 0.75)]);
        assert_abs_diff_eq!(tau, 2.0 / 6.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn empirical_tau_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, f64)> = (0..300)
            .map(|_| {
                // coarse grid to force ties
                let x = (rng.gen::<f64>() * 10.0).round();
                let y = (rng.gen::<f64>() * 10.0).round() + 0.3 * x;
                (x, y)
            })
            .collect();
        // O(n^2) oracle
        let n = pairs.len();
        let (mut conc, mut disc, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                let dx = pairs[i].0 - pairs[j].0;
                let dy = pairs[i].1 - pairs[j].1;
                if dx == 0.0 && dy == 0.0 {
                    tx += 1.0;
                    ty += 1.0;
                } else if dx == 0.0 {
                    tx += 1.0;
                } else if dy == 0.0 {
                    ty += 1.0;
                } else if dx * dy > 0.0 {
                    conc += 1.0;
                } else {
                    disc += 1.0;
                }
            }
        }
        let n0 = n as f64 * (n as f64 - 1.0) / 2.0;
        let want = (conc - disc) / ((n0 - tx) * (n0 - ty)).sqrt();
        assert_abs_diff_eq!(kendall_tau_empirical(&pairs), want, epsilon = 1e-12);
    }

    #[test]
    fn tail_probe_behaviour() {
        let levels = [1e-4, 1e-3, 1e-2];
        let ind = tail_probe(&Independence, TailSide::Lower, &levels);
        for (r, &u) in ind.iter().zip(&levels) {
            assert_abs_diff_eq!(*r, u, epsilon = 1e-12);
        }
        // ratios always within the Frechet bound
        let g = Copula::gumbel(3.0).unwrap();
        for side in [TailSide::Lower, TailSide::Upper] {
            for r in tail_probe(&g, side, &levels) {
                assert!((0.0..=1.0 + 1e-12).contains(&r));
            }
        }
        // Clayton theta=2 lower ratio approaches 2^-1/2
        let c = Copula::clayton(2.0).unwrap();
        let r = tail_probe(&c, TailSide::Lower, &[1e-4]);
        assert!((r[0] - 0.5f64.sqrt()).abs() < 0.02);
        // upper probe of the survival copula equals lower probe of the base
        let s = c.survival();
        let ru = tail_probe(&s, TailSide::Upper, &levels);
        let rl = tail_probe(&c, TailSide::Lower, &levels);
        for (a, b) in ru.iter().zip(&rl) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }
}
