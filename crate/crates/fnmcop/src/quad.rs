//! Numerical integration: Gauss-Legendre rules on (0,1), adaptive
//! Gauss-Kronrod quadrature on an interval, and adaptive rectangle
//! cubature on the plane.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights rescaled to the unit interval.
///
/// Weights sum to one; nodes are strictly increasing in (0,1). The rule
/// integrates polynomials up to degree `2*nq - 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Build the `nq`-point Gauss-Legendre rule on (0,1).
    pub fn gauss_legendre(nq: usize) -> Result<Self> {
        if nq < 2 {
            return Err(Error::domain(format!(
                "quadrature rule needs at least 2 points, got {nq}"
            )));
        }
        let (x, w) = legendre_nodes(nq);
        let nodes: Vec<f64> = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
        let weights: Vec<f64> = w.iter().map(|&v| 0.5 * v).collect();
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over (0,1) with this rule.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes/weights of the nq-point Gauss-Legendre rule on (-1,1), by Newton
/// iteration on the Legendre polynomial recurrence.
fn legendre_nodes(nq: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nq;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let eval = |z: f64| {
            // Recurrence for P_n(z) and its derivative.
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
        };
        for _ in 0..100 {
            let (p1, d) = eval(z);
            let dz = p1 / d;
            z -= dz;
            if dz.abs() <= f64::EPSILON * (1.0 + z.abs()) {
                break;
            }
        }
        let (_, pp) = eval(z);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

// Gauss-Kronrod 7-15 pair (positive half; Kronrod nodes in decreasing order).
const XGK: [f64; 8] = [
    0.9914553711208126,
    0.9491079123427585,
    0.8648644233597691,
    0.7415311855993944,
    0.5860872354676911,
    0.4058451513773972,
    0.2077849550078985,
    0.0,
];
const WGK: [f64; 8] = [
    0.02293532201052922,
    0.06309209262997855,
    0.1047900103222502,
    0.1406532597155259,
    0.1690047266392679,
    0.1903505780647854,
    0.2044329400752989,
    0.2094821410847278,
];
const WG: [f64; 4] = [
    0.1294849661688697,
    0.2797053914892767,
    0.3818300505051189,
    0.4179591836734694,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let hl = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let mut ik = WGK[7] * fc;
    let mut ig = WG[3] * fc;
    for (j, &xj) in XGK.iter().enumerate().take(7) {
        let x = hl * xj;
        let f1 = f(c - x);
        let f2 = f(c + x);
        ik += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            ig += WG[j / 2] * (f1 + f2);
        }
    }
    (ik * hl, ((ik - ig) * hl).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth >= 52 || !value.is_finite() {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }
    recurse(&mut f, a, b, tol, 0)
}

/// Result of an adaptive cubature run.
#[derive(Debug, Clone, Copy)]
pub struct CubatureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct Cell {
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    value: f64,
    err: f64,
    seq: usize,
}

fn cell_nodes() -> ([f64; 15], [f64; 15], [f64; 15]) {
    // 15 nodes per axis: indices 0..15 map to -xgk[0..7], 0, +xgk[6..0].
    let mut xs = [0.0; 15];
    let mut wk = [0.0; 15];
    let mut wg = [0.0; 15];
    for j in 0..7 {
        xs[j] = -XGK[j];
        xs[14 - j] = XGK[j];
        wk[j] = WGK[j];
        wk[14 - j] = WGK[j];
        if j % 2 == 1 {
            wg[j] = WG[j / 2];
            wg[14 - j] = WG[j / 2];
        }
    }
    xs[7] = 0.0;
    wk[7] = WGK[7];
    wg[7] = WG[3];
    (xs, wk, wg)
}

fn eval_cell(
    f: &mut impl FnMut(&[f64], &[f64]) -> Vec<f64>,
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
) -> (f64, f64) {
    // Tensor K15xK15 with the embedded G7xG7 sharing the same grid.
    let h1 = 0.5 * (b1 - a1);
    let c1 = 0.5 * (a1 + b1);
    let h2 = 0.5 * (b2 - a2);
    let c2 = 0.5 * (a2 + b2);
    let (xs, wk, wg) = cell_nodes();
    let us: Vec<f64> = xs.iter().map(|&x| c1 + h1 * x).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| c2 + h2 * x).collect();
    let values = f(&us, &vs);
    debug_assert_eq!(values.len(), 225);
    let mut ik = 0.0;
    let mut ig = 0.0;
    for i in 0..15 {
        let mut row_k = 0.0;
        let mut row_g = 0.0;
        for j in 0..15 {
            let fv = values[i * 15 + j];
            row_k += wk[j] * fv;
            if wg[j] > 0.0 && wg[i] > 0.0 {
                row_g += wg[j] * fv;
            }
        }
        ik += wk[i] * row_k;
        ig += wg[i] * row_g;
    }
    let scale = h1 * h2;
    (ik * scale, ((ik - ig) * scale).abs())
}

/// Adaptive cubature of `f` over the rectangle `[a1,b1] x [a2,b2]`.
///
/// Repeatedly bisects the cell with the largest error estimate along its
/// longer side until the summed estimate drops below `tol` or the
/// evaluation budget is exhausted. Deterministic for a given integrand.
pub fn cubature_adaptive(
    mut f: impl FnMut(f64, f64) -> f64,
    bounds1: (f64, f64),
    bounds2: (f64, f64),
    tol: f64,
    max_evaluations: usize,
) -> CubatureResult {
    cubature_adaptive_grid(
        |us: &[f64], vs: &[f64]| {
            let mut out = Vec::with_capacity(us.len() * vs.len());
            for &u in us {
                for &v in vs {
                    out.push(f(u, v));
                }
            }
            out
        },
        bounds1,
        bounds2,
        tol,
        max_evaluations,
    )
}

/// Grid-aware variant of [`cubature_adaptive`]: the integrand receives
/// the per-axis node lists of each cell at once (row-major result), so
/// implementations can hoist per-axis work such as quantile inversions.
pub fn cubature_adaptive_grid(
    mut f: impl FnMut(&[f64], &[f64]) -> Vec<f64>,
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    tol: f64,
    max_evaluations: usize,
) -> CubatureResult {
    let mut cells: Vec<Cell> = Vec::new();
    let mut evals = 0usize;
    let mut seq = 0usize;
    let (v, e) = eval_cell(&mut f, a1, b1, a2, b2);
    evals += 225;
    cells.push(Cell {
        a1,
        b1,
        a2,
        b2,
        value: v,
        err: e,
        seq,
    });

    loop {
        let total_err: f64 = cells.iter().map(|c| c.err).sum();
        if total_err <= tol || evals + 450 > max_evaluations {
            let value = cells.iter().map(|c| c.value).sum();
            return CubatureResult {
                value,
                error_estimate: total_err,
                evaluations: evals,
            };
        }
        // Split the worst cell (ties broken by insertion order).
        let worst = cells
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.err
                    .partial_cmp(&b.err)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.seq.cmp(&a.seq))
            })
            .map(|(i, _)| i)
            .expect("cell list never empty");
        let cell = cells.swap_remove(worst);
        let (w1, w2) = (cell.b1 - cell.a1, cell.b2 - cell.a2);
        let halves = if w1 >= w2 {
            let m = 0.5 * (cell.a1 + cell.b1);
            [
                (cell.a1, m, cell.a2, cell.b2),
                (m, cell.b1, cell.a2, cell.b2),
            ]
        } else {
            let m = 0.5 * (cell.a2 + cell.b2);
            [
                (cell.a1, cell.b1, cell.a2, m),
                (cell.a1, cell.b1, m, cell.b2),
            ]
        };
        for (a1, b1, a2, b2) in halves {
            let (v, e) = eval_cell(&mut f, a1, b1, a2, b2);
            evals += 225;
            seq += 1;
            cells.push(Cell {
                a1,
                b1,
                a2,
                b2,
                value: v,
                err: e,
                seq,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_rule_is_classical() {
        let rule = QuadratureRule::gauss_legendre(2).unwrap();
        let d = 1.0 / (2.0 * 3.0f64.sqrt());
        assert_abs_diff_eq!(rule.nodes()[0], 0.5 - d, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.nodes()[1], 0.5 + d, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weights_normalized_and_first_moment() {
        for nq in [2, 3, 5, 15, 31, 64] {
            let rule = QuadratureRule::gauss_legendre(nq).unwrap();
            let sw: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(sw, 1.0, epsilon = 1e-14);
            let m1: f64 = rule.integrate(|x| x);
            assert_abs_diff_eq!(m1, 0.5, epsilon = 1e-15);
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn polynomial_exactness() {
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        // degree 4 exact at nq = 3 (2nq - 1 = 5)
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(4)), 0.2, epsilon = 1e-15);
        let rule15 = QuadratureRule::gauss_legendre(15).unwrap();
        assert_abs_diff_eq!(
            rule15.integrate(|x| x.powi(29)),
            1.0 / 30.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_degenerate_rule() {
        assert!(QuadratureRule::gauss_legendre(1).is_err());
    }

    #[test]
    fn adaptive_1d() {
        let v = integrate_adaptive(|x| x.exp(), 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(v, std::f64::consts::E - 1.0, epsilon = 1e-11);
        // integrable endpoint singularity
        let v = integrate_adaptive(|x| x.powf(-0.5), 1e-300, 1.0, 1e-9);
        assert!((v - 2.0).abs() < 1e-5);
    }

    #[test]
    fn adaptive_cubature_smooth_and_peaked() {
        let r = cubature_adaptive(|x, y| x * y, (0.0, 1.0), (0.0, 1.0), 1e-12, 100_000);
        assert_abs_diff_eq!(r.value, 0.25, epsilon = 1e-12);
        // sharply peaked Gaussian bump integrates to ~2*pi*s^2
        let s = 0.01;
        let r = cubature_adaptive(
            |x, y| (-((x - 0.3) * (x - 0.3) + (y - 0.7) * (y - 0.7)) / (2.0 * s * s)).exp(),
            (0.0, 1.0),
            (0.0, 1.0),
            1e-10,
            2_000_000,
        );
        let want = 2.0 * std::f64::consts::PI * s * s;
        assert!((r.value - want).abs() < 1e-8, "{} vs {want}", r.value);
    }
}
