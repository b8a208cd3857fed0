//! Exhaustive active-set enumeration for tiny obstacle problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::solver::{ObstacleProblem, Variant};

pub const MAX_NODES: usize = 18;

/// Dense matrix of the operator, column `j` being its action on the `j`-th unit field.
pub fn dense_operator(p: &ObstacleProblem) -> DMatrix<f64> {
    let g = p.grid;
    let m = g.size();
    let op = p.operator();
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = Field::zeros(g);
        e.values[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..m {
            a[(i, j)] = col.values[i];
        }
    }
    // Symmetrize away roundoff.
    (&a + a.transpose()) * 0.5
}

/// The KKT-consistent candidate over all `2^|Ω|` active sets.
pub fn brute_force_qp(p: &ObstacleProblem) -> Result<Field> {
    let nodes = p.omega_nodes();
    let k = nodes.len();
    if k > MAX_NODES {
        return Err(Error::TooManyNodes {
            nodes: k,
            limit: MAX_NODES,
        });
    }
    let g = p.grid;
    let m = g.size();
    let a = dense_operator(p);
    let psi = &p.psi.values;
    let f = &p.f.values;
    let global = p.variant == Variant::Global;
    let tol = 1e-9 * p.scale();

    let mut found: Option<Field> = None;
    for mask in 0u32..(1u32 << k) {
        let active: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| nodes[b]).collect();
        let inactive: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 0).map(|b| nodes[b]).collect();
        let mut u = vec![0.0; m];
        for &i in &active {
            u[i] = psi[i];
        }
        let ni = inactive.len();
        let dim = ni + usize::from(global);
        let mut lambda = 0.0;
        if dim > 0 {
            let mut lhs = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (r, &i) in inactive.iter().enumerate() {
                for (c, &j) in inactive.iter().enumerate() {
                    lhs[(r, c)] = a[(i, j)];
                }
                rhs[r] = f[i] - active.iter().map(|&j| a[(i, j)] * psi[j]).sum::<f64>();
                if global {
                    lhs[(r, ni)] = 1.0;
                    lhs[(ni, r)] = 1.0;
                }
            }
            if global {
                rhs[ni] = -active.iter().map(|&j| psi[j]).sum::<f64>();
            }
            let Some(sol) = lhs.lu().solve(&rhs) else {
                continue;
            };
            for (r, &i) in inactive.iter().enumerate() {
                u[i] = sol[r];
            }
            if global {
                lambda = sol[ni];
            }
        }
        let uv = DVector::from_column_slice(&u);
        let au = &a * &uv;
        let feasible = inactive.iter().all(|&i| u[i] >= psi[i] - tol);
        let nonneg = active.iter().all(|&i| au[i] - f[i] + lambda >= -tol);
        if !(feasible && nonneg) {
            continue;
        }
        let cand = Field { grid: g, values: u };
        match &found {
            None => found = Some(cand),
            Some(prev) => {
                let gap = prev.sub(&cand).max_abs();
                if gap > 1e-8 * p.scale() {
                    return Err(Error::AmbiguousKkt(format!("candidates differ by {gap:e}")));
                }
            }
        }
    }
    found.ok_or(Error::NoKktSet)
}
