//! Small numerical helpers: Gauss-Legendre rules, monomial bases and dense
//! least squares.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with the `m`-point Gauss rule.
pub fn gauss_integrate(m: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(m);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    x.iter()
        .zip(&w)
        .map(|(&t, &wt)| wt * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// Monomials `x^i y^j` with `i + j <= degree` (only `x^i` when `n = 1`).
/// With `even` set, only terms even in every variable are kept.
pub fn monomials(p: [f64; 2], n: usize, degree: usize, even: bool) -> Vec<f64> {
    let mut out = Vec::new();
    let step = if even { 2 } else { 1 };
    if n == 1 {
        for i in (0..=degree).step_by(step) {
            out.push(p[0].powi(i as i32));
        }
    } else {
        for i in (0..=degree).step_by(step) {
            for j in (0..=degree - i).step_by(step) {
                out.push(p[0].powi(i as i32) * p[1].powi(j as i32));
            }
        }
    }
    out
}

/// Least-squares solution of `rows · c ≈ rhs`; returns the coefficients and
/// the residual vector.
pub fn lstsq(rows: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    // Column scaling keeps the SVD well conditioned for mixed-scale bases.
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = a.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for j in 0..k {
        scaled.column_mut(j).scale_mut(1.0 / scales[j]);
    }
    let b = DVector::from_column_slice(rhs);
    let svd = scaled.svd(true, true);
    let c = svd
        .solve(&b, 1e-13)
        .expect("svd computed with both factors");
    let coef: Vec<f64> = (0..k).map(|j| c[j] / scales[j]).collect();
    let fit = &a * DVector::from_column_slice(&coef);
    let resid = (0..m).map(|i| rhs[i] - fit[i]).collect();
    (coef, resid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((i30 - 2.0 / 31.0).abs() < 1e-14);
        let g = gauss_integrate(16, 0.0, 1.0, |t| t.exp());
        assert!((g - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn lstsq_recovers_polynomial() {
        let pts: Vec<[f64; 2]> = (0..40)
            .map(|i| [i as f64 * 0.1 - 2.0, (i as f64 * 0.37).sin()])
            .collect();
        let rows: Vec<Vec<f64>> = pts.iter().map(|&p| monomials(p, 2, 2, false)).collect();
        let rhs: Vec<f64> = pts
            .iter()
            .map(|p| 1.0 - 2.0 * p[0] + 0.5 * p[0] * p[1] + 3.0 * p[1] * p[1])
            .collect();
        let (_, r) = lstsq(&rows, &rhs);
        assert!(r.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn even_basis_sizes() {
        assert_eq!(monomials([1.0, 1.0], 1, 4, true).len(), 3);
        assert_eq!(monomials([1.0, 1.0], 2, 4, true).len(), 6);
        assert_eq!(monomials([1.0, 1.0], 2, 4, false).len(), 15);
    }
}
