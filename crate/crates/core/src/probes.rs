//! Refinement-pair probes for the regularity of solved instances.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::grid::Field;
use crate::representation::{discrete_laplacian, local_remainder, second_difference};
use crate::solver::ObstacleProblem;
use crate::spectral::h_sigma_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub grids: [usize; 2],
    pub values: [f64; 2],
    /// `values[1] / values[0]`, or `None` unless both are finite and the
    /// coarse value is nonzero.
    pub ratio: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub vacuous: bool,
}

/// How a probe's threshold is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    /// `ratio ≤ threshold`.
    Bounded,
    /// `ratio > threshold`.
    Growing,
}

impl ProbeReport {
    pub fn from_pair(
        probe: &str,
        grids: [usize; 2],
        values: [f64; 2],
        threshold: f64,
        expect: Expect,
    ) -> Self {
        let ratio = if values.iter().all(|v| v.is_finite()) && values[0] != 0.0 {
            Some(values[1] / values[0])
        } else {
            None
        };
        let vacuous = values == [0.0, 0.0];
        let pass = vacuous
            || match (ratio, expect) {
                (Some(r), Expect::Bounded) => r <= threshold,
                (Some(r), Expect::Growing) => r > threshold,
                (None, _) => false,
            };
        Self {
            probe: probe.to_string(),
            grids,
            values,
            ratio,
            threshold,
            pass,
            vacuous,
        }
    }

    /// Single-grid check `value ≤ threshold` (or `≥` with `at_least`).
    pub fn single(probe: &str, grid: usize, value: f64, threshold: f64, at_least: bool) -> Self {
        let pass = value.is_finite()
            && if at_least {
                value >= threshold
            } else {
                value <= threshold
            };
        Self {
            probe: probe.to_string(),
            grids: [grid, grid],
            values: [value, value],
            ratio: None,
            threshold,
            pass,
            vacuous: false,
        }
    }

    pub fn vacuous(probe: &str, grid: usize, threshold: f64) -> Self {
        Self {
            probe: probe.to_string(),
            grids: [grid, grid],
            values: [0.0, 0.0],
            ratio: None,
            threshold,
            pass: true,
            vacuous: true,
        }
    }
}

fn check_pair(coarse: &Field, fine: &Field) -> Result<()> {
    let (a, b) = (coarse.grid, fine.grid);
    if a.n == b.n && a.len == b.len && b.nodes == 2 * a.nodes {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "not a refinement pair: {a:?} and {b:?}"
        )))
    }
}

/// Largest centered second difference over `B_radius`.
pub fn c11_value(u: &Field, radius: f64) -> f64 {
    let g = u.grid;
    let mut m = 0.0f64;
    for idx in 0..g.size() {
        if g.radius(idx) >= radius {
            continue;
        }
        for i in 0..g.n {
            for j in 0..g.n {
                m = m.max(second_difference(u, idx, i, j).abs());
            }
        }
    }
    m
}

pub fn c11_probe(coarse: &Field, fine: &Field, radius: f64, threshold: f64) -> Result<ProbeReport> {
    check_pair(coarse, fine)?;
    Ok(ProbeReport::from_pair(
        "c11",
        [coarse.grid.nodes, fine.grid.nodes],
        [c11_value(coarse, radius), c11_value(fine, radius)],
        threshold,
        Expect::Bounded,
    ))
}

/// `u` times the `C^∞` bump of the given radius about the origin.
pub fn localize(u: &Field, radius: f64) -> Field {
    let g = u.grid;
    let mut out = u.clone();
    for i in 0..g.size() {
        let q = (g.radius(i) / radius).powi(2);
        out.values[i] *= if q < 1.0 { (1.0 - 1.0 / (1.0 - q)).exp() } else { 0.0 };
    }
    out
}

/// Bessel-potential norms of the localized field: order `1 + s` (bounded)
/// and order `2s` (contrast column).
pub fn h1plus_s_probe(
    coarse: &Field,
    fine: &Field,
    s: f64,
    radius: f64,
    threshold: f64,
) -> Result<(ProbeReport, ProbeReport)> {
    check_pair(coarse, fine)?;
    let grids = [coarse.grid.nodes, fine.grid.nodes];
    let (lc, lf) = (localize(coarse, radius), localize(fine, radius));
    let main = ProbeReport::from_pair(
        "h1plus_s",
        grids,
        [h_sigma_norm(&lc, 1.0 + s)?, h_sigma_norm(&lf, 1.0 + s)?],
        threshold,
        Expect::Bounded,
    );
    let contrast = ProbeReport::from_pair(
        "h2s_contrast",
        grids,
        [h_sigma_norm(&lc, 2.0 * s)?, h_sigma_norm(&lf, 2.0 * s)?],
        1.0,
        Expect::Growing,
    );
    Ok((main, contrast))
}

/// Nodes of `Ω` with `u - ψ ≤ ctol`.
pub fn contact_set(u: &Field, p: &ObstacleProblem, ctol: f64) -> Result<Vec<usize>> {
    p.grid.check_same(&u.grid)?;
    Ok((0..u.values.len())
        .filter(|&i| p.omega[i] && u.values[i] - p.psi.values[i] <= ctol)
        .collect())
}

/// Lattice-normalized standard mollifier `ω_ε`, applied periodically.
pub fn mollify(u: &Field, eps: f64) -> Result<Field> {
    let g = u.grid;
    let h = g.h();
    check_range("eps", eps, eps >= 2.0 * h && eps < g.len / 2.0, "[2h, L/2)")?;
    let reach = (eps / h).ceil() as i64;
    let span: Vec<i64> = (-reach..=reach).collect();
    let mut stencil = Vec::new();
    for &a in &span {
        let bs: &[i64] = if g.n == 1 { &[0] } else { &span };
        for &b in bs {
            let r2 = ((a * a + b * b) as f64) * h * h / (eps * eps);
            if r2 < 1.0 {
                stencil.push(([a, b], (1.0 / (r2 - 1.0)).exp()));
            }
        }
    }
    let total: f64 = stencil.iter().map(|s| s.1).sum();
    let values = (0..g.size())
        .map(|i| {
            stencil
                .iter()
                .map(|(d, w)| w * u.values[g.shift(i, *d)])
                .sum::<f64>()
                / total
        })
        .collect();
    Ok(Field { grid: g, values })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacianBounds {
    /// `min_{B_ρ} (-Δu) + ‖ΔR_ρ‖∞`; expected `≥ -tol`.
    pub lower: f64,
    /// `max_{contact} (-Δu) - (-Δψ)`; `None` on an empty contact set.
    pub contact_gap: Option<f64>,
    pub lower_report: ProbeReport,
    pub gap_report: ProbeReport,
}

pub fn laplacian_bounds_probe(
    u: &Field,
    p: &ObstacleProblem,
    rho: f64,
    ctol: f64,
    tol: f64,
    tol_gap: f64,
) -> Result<LaplacianBounds> {
    let g = p.grid;
    let lr = local_remainder(u, p, rho, 0, 0)?;
    let ball: Vec<usize> = (0..g.size()).filter(|&i| g.radius(i) < rho).collect();
    let rem_norm = ball
        .iter()
        .map(|&i| discrete_laplacian(&lr.remainder, i).abs())
        .fold(0.0, f64::max);
    let lower = ball
        .iter()
        .map(|&i| -discrete_laplacian(u, i))
        .fold(f64::INFINITY, f64::min)
        + rem_norm;
    let contact: Vec<usize> = contact_set(u, p, ctol)?
        .into_iter()
        .filter(|&i| g.radius(i) < rho)
        .collect();
    let contact_gap = contact
        .iter()
        .map(|&i| discrete_laplacian(&p.psi, i) - discrete_laplacian(u, i))
        .reduce(f64::max);
    let lower_report = ProbeReport::single("laplacian_lower", g.nodes, lower, -tol, true);
    let gap_report = match contact_gap {
        Some(v) => ProbeReport::single("laplacian_contact_gap", g.nodes, v, tol_gap, false),
        None => ProbeReport::vacuous("laplacian_contact_gap", g.nodes, tol_gap),
    };
    Ok(LaplacianBounds {
        lower,
        contact_gap,
        lower_report,
        gap_report,
    })
}
