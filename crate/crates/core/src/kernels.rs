//! Closed-form kernels and their singular convolution with discrete measures.
//!
//! [`eval_phi_s`] returns the raw profile: `|x|^{2s-n}` in the generic case,
//! `-log|x|` (n=3), `-|x|` (n=2) and `|x|²(log|x| - (3+n)/(2n+2))` (n=1) at
//! `s = 3/2`. The fundamental solution of `(-Δ)^s` is `kappa(n, s)` times that
//! profile, up to the polynomial null space.

use rayon::prelude::*;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::error::{check_order, check_range, Error, Result};
use crate::grid::{Field, GridSpec};
use crate::linalg::gauss_integrate;
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    PhiS { n: usize, s: f64 },
    Es { n: usize, s: f64 },
    PoissonPs { n: usize, s: f64 },
    RieszQ { n: usize, beta: f64 },
    LaplacianPhiS { n: usize, s: f64 },
    HessianPhiS { n: usize, s: f64, i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Generic,
    LogN1,
    LogN2,
    LogN3,
}

pub fn branch(n: usize, s: f64) -> Branch {
    if s == 1.5 {
        match n {
            1 => Branch::LogN1,
            2 => Branch::LogN2,
            3 => Branch::LogN3,
            _ => Branch::Generic,
        }
    } else {
        Branch::Generic
    }
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            range: "{1, 2, 3}",
        })
    }
}

impl KernelKind {
    pub fn dim(&self) -> usize {
        match *self {
            KernelKind::PhiS { n, .. }
            | KernelKind::Es { n, .. }
            | KernelKind::PoissonPs { n, .. }
            | KernelKind::RieszQ { n, .. }
            | KernelKind::LaplacianPhiS { n, .. }
            | KernelKind::HessianPhiS { n, .. } => n,
        }
    }

    pub fn needs_height(&self) -> bool {
        matches!(self, KernelKind::Es { .. } | KernelKind::PoissonPs { .. })
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim())?;
        match *self {
            KernelKind::RieszQ { n, beta } => {
                check_range("beta", beta, beta > 0.0 && beta < n as f64, "(0, n)")
            }
            KernelKind::HessianPhiS { n, s, i, j } => {
                check_order(s)?;
                if i < n && j < n {
                    Ok(())
                } else {
                    Err(Error::OutOfRange {
                        name: "hessian index",
                        value: i.max(j) as f64,
                        range: "[0, n)",
                    })
                }
            }
            KernelKind::PhiS { s, .. }
            | KernelKind::Es { s, .. }
            | KernelKind::PoissonPs { s, .. }
            | KernelKind::LaplacianPhiS { s, .. } => check_order(s),
        }
    }

    /// Pointwise value at `x` (length `n`) and height `y` (ignored unless the
    /// kernel lives in the half space).
    pub fn eval(&self, x: &[f64], y: f64) -> Result<f64> {
        match *self {
            KernelKind::PhiS { n, s } => eval_phi_s(x, n, s),
            KernelKind::Es { n, s } => eval_e_s(x, y, n, s),
            KernelKind::PoissonPs { n, s } => eval_poisson(x, y, n, s, false),
            KernelKind::RieszQ { beta, .. } => eval_riesz_q(x, beta),
            KernelKind::LaplacianPhiS { n, s } => Ok(eval_phi_s_derivatives(x, n, s)?.0),
            KernelKind::HessianPhiS { n, s, i, j } => {
                Ok(eval_phi_s_derivatives(x, n, s)?.1[i * n + j])
            }
        }
    }
}

/// `Γ(n/2 - s) / (4^s π^{n/2} Γ(s))` in the generic case, and the matching
/// constants of the logarithmic branches.
pub fn kappa(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    match branch(n, s) {
        Branch::Generic => gamma(nf / 2.0 - s) / (4f64.powf(s) * PI.powf(nf / 2.0) * gamma(s)),
        Branch::LogN1 | Branch::LogN2 => 1.0 / (2.0 * PI),
        Branch::LogN3 => 1.0 / (2.0 * PI * PI),
    }
}

fn log_shift(n: usize) -> f64 {
    (3.0 + n as f64) / (2.0 * n as f64 + 2.0)
}

fn profile(br: Branch, n: usize, s: f64, r: f64) -> f64 {
    match br {
        Branch::Generic => r.powf(2.0 * s - n as f64),
        Branch::LogN3 => -r.ln(),
        Branch::LogN2 => -r,
        Branch::LogN1 => r * r * (r.ln() - log_shift(1)),
    }
}

fn laplacian_profile(br: Branch, n: usize, s: f64, r: f64) -> f64 {
    let nf = n as f64;
    match br {
        Branch::Generic => {
            let a = 2.0 * s - nf;
            a * (a + nf - 2.0) * r.powf(a - 2.0)
        }
        Branch::LogN3 => -1.0 / (r * r),
        Branch::LogN2 => -1.0 / r,
        Branch::LogN1 => 2.0 * (r.ln() - log_shift(1)) + 3.0,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_point(x: &[f64], n: usize) -> Result<f64> {
    if x.len() != n {
        return Err(Error::Inconsistent(format!(
            "point of length {} in dimension {n}",
            x.len()
        )));
    }
    let r = norm(x);
    if r == 0.0 {
        Err(Error::KernelSingularity)
    } else {
        Ok(r)
    }
}

pub fn eval_phi_s(x: &[f64], n: usize, s: f64) -> Result<f64> {
    check_dim(n)?;
    check_order(s)?;
    let r = check_point(x, n)?;
    Ok(profile(branch(n, s), n, s, r))
}

/// The same radial profile as [`eval_phi_s`] at `(|x|² + y²)^{1/2}`.
pub fn eval_e_s(x: &[f64], y: f64, n: usize, s: f64) -> Result<f64> {
    check_dim(n)?;
    check_order(s)?;
    if x.len() != n {
        return Err(Error::Inconsistent(format!(
            "point of length {} in dimension {n}",
            x.len()
        )));
    }
    let r = (x.iter().map(|v| v * v).sum::<f64>() + y * y).sqrt();
    if r == 0.0 {
        return Err(Error::KernelSingularity);
    }
    Ok(profile(branch(n, s), n, s, r))
}

/// `∫_{ℝ^n} y^{2s} (|x|²+y²)^{-(n+2s)/2} dx`, independent of `y`.
pub fn poisson_mass(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    PI.powf(nf / 2.0) * gamma(s) / gamma(nf / 2.0 + s)
}

/// `y^{2s} / (|x|²+y²)^{(n+2s)/2}`; divided by [`poisson_mass`] when `normalized`.
pub fn eval_poisson(x: &[f64], y: f64, n: usize, s: f64, normalized: bool) -> Result<f64> {
    check_dim(n)?;
    check_order(s)?;
    check_range("y", y, y > 0.0, "(0, inf)")?;
    if x.len() != n {
        return Err(Error::Inconsistent(format!(
            "point of length {} in dimension {n}",
            x.len()
        )));
    }
    let nf = n as f64;
    let r2 = x.iter().map(|v| v * v).sum::<f64>() + y * y;
    let raw = y.powf(2.0 * s) / r2.powf((nf + 2.0 * s) / 2.0);
    Ok(if normalized { raw / poisson_mass(n, s) } else { raw })
}

/// `|x|^{β-n}`.
pub fn eval_riesz_q(x: &[f64], beta: f64) -> Result<f64> {
    let n = x.len();
    check_dim(n)?;
    check_range("beta", beta, beta > 0.0 && beta < n as f64, "(0, n)")?;
    let r = check_point(x, n)?;
    Ok(r.powf(beta - n as f64))
}

/// Analytic `Δφ_s(x)` and the row-major Hessian `∂_i∂_j φ_s(x)`.
pub fn eval_phi_s_derivatives(x: &[f64], n: usize, s: f64) -> Result<(f64, Vec<f64>)> {
    check_dim(n)?;
    check_order(s)?;
    let r = check_point(x, n)?;
    let br = branch(n, s);
    let lap = laplacian_profile(br, n, s, r);
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { 1.0 } else { 0.0 };
            let q = x[i] * x[j] / (r * r);
            hess[i * n + j] = match br {
                Branch::Generic => {
                    let a = 2.0 * s - n as f64;
                    a * r.powf(a - 2.0) * (d + (a - 2.0) * q)
                }
                Branch::LogN3 => -(d - 2.0 * q) / (r * r),
                Branch::LogN2 => -(d - q) / r,
                Branch::LogN1 => d * (2.0 * (r.ln() - log_shift(1)) + 1.0) + 2.0 * q,
            };
        }
    }
    Ok((lap, hess))
}

/// Mean of `r^p` over the cell `[-h/2, h/2]^n`, for `p > -n`.
pub fn power_cell_average(n: usize, p: f64, h: f64) -> f64 {
    let half = h / 2.0;
    match n {
        1 => half.powf(p) / (p + 1.0),
        _ => {
            let ang = gauss_integrate(16, 0.0, PI / 4.0, |t| (1.0 / t.cos()).powf(p + 2.0));
            8.0 * half.powf(p + 2.0) / ((p + 2.0) * h * h) * ang
        }
    }
}

/// Mean of a radial function over the square cell by a 16 x 16 product Gauss
/// rule in polar coordinates over its eight triangles.
fn radial_cell_average_2d(h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = h / 2.0;
    let total = gauss_integrate(16, 0.0, PI / 4.0, |t| {
        let rmax = half / t.cos();
        gauss_integrate(16, 0.0, rmax, |r| f(r) * r)
    });
    8.0 * total / (h * h)
}

/// Mean of the kernel over the lattice cell centered at the origin.
pub fn self_cell_average(kind: &KernelKind, h: f64) -> Result<f64> {
    kind.validate()?;
    let n = kind.dim();
    if n > 2 {
        return Err(Error::Inconsistent("cell averages exist for n <= 2 only".into()));
    }
    let half = h / 2.0;
    let lap_avg = |s: f64| -> f64 {
        match branch(n, s) {
            Branch::Generic => {
                let a = 2.0 * s - n as f64;
                a * (a + n as f64 - 2.0) * power_cell_average(n, a - 2.0, h)
            }
            Branch::LogN1 => 2.0 * (half.ln() - 1.0 - log_shift(1)) + 3.0,
            Branch::LogN2 => radial_cell_average_2d(h, |r| -1.0 / r),
            Branch::LogN3 => unreachable!("n <= 2"),
        }
    };
    Ok(match *kind {
        KernelKind::PhiS { s, .. } | KernelKind::Es { s, .. } => match branch(n, s) {
            Branch::Generic => power_cell_average(n, 2.0 * s - n as f64, h),
            Branch::LogN1 => {
                let h2 = half * half;
                h2 * (half.ln() / 3.0 - 1.0 / 9.0) - log_shift(1) * h2 / 3.0
            }
            Branch::LogN2 => radial_cell_average_2d(h, |r| -r),
            Branch::LogN3 => unreachable!("n <= 2"),
        },
        KernelKind::RieszQ { beta, .. } => power_cell_average(n, beta - n as f64, h),
        KernelKind::LaplacianPhiS { s, .. } => lap_avg(s),
        KernelKind::HessianPhiS { s, i, j, .. } => {
            if i == j {
                lap_avg(s) / n as f64
            } else {
                0.0
            }
        }
        KernelKind::PoissonPs { .. } => {
            return Err(Error::Inconsistent("Poisson kernel needs y > 0".into()))
        }
    })
}

/// Kernel sampled at every lattice offset `d ∈ [-(N-1), N-1]^n`, with the
/// analytic cell average at `d = 0` when the kernel is singular there.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: GridSpec,
    width: usize,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(kind: &KernelKind, grid: GridSpec, y: Option<f64>) -> Result<Self> {
        kind.validate()?;
        if kind.dim() != grid.n {
            return Err(Error::GridMismatch(format!(
                "kernel in dimension {} on a grid of dimension {}",
                kind.dim(),
                grid.n
            )));
        }
        let yv = match (kind.needs_height(), y) {
            (true, Some(y)) => y,
            (false, None) => 0.0,
            (true, None) => return Err(Error::Inconsistent("kernel needs a height y".into())),
            (false, Some(_)) => {
                return Err(Error::Inconsistent("kernel takes no height y".into()))
            }
        };
        if matches!(kind, KernelKind::PoissonPs { .. }) && yv <= 0.0 {
            return Err(Error::OutOfRange {
                name: "y",
                value: yv,
                range: "(0, inf)",
            });
        }
        let h = grid.h();
        let span = grid.nodes as i64 - 1;
        let width = 2 * grid.nodes - 1;
        let count = width.pow(grid.n as u32);
        let center = if yv == 0.0 {
            self_cell_average(kind, h)?
        } else {
            f64::NAN
        };
        let values = (0..count)
            .into_par_iter()
            .map(|k| {
                let d = if grid.n == 1 {
                    [k as i64 - span, 0]
                } else {
                    [(k / width) as i64 - span, (k % width) as i64 - span]
                };
                if d == [0, 0] && yv == 0.0 {
                    return Ok(center);
                }
                let x = [d[0] as f64 * h, d[1] as f64 * h];
                kind.eval(&x[..grid.n], yv)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            grid,
            width,
            values,
        })
    }

    /// Value at lattice offset `d`; both components must lie in `[-(N-1), N-1]`.
    pub fn at(&self, d: [i64; 2]) -> f64 {
        let span = self.grid.nodes as i64 - 1;
        let a = (d[0] + span) as usize;
        if self.grid.n == 1 {
            self.values[a]
        } else {
            self.values[a * self.width + (d[1] + span) as usize]
        }
    }

    /// The table restricted to offsets representable on the grid itself,
    /// placed so that offset 0 sits at the center node.
    pub fn column(&self) -> Field {
        let g = self.grid;
        Field {
            grid: g,
            values: (0..g.size()).map(|i| self.at(g.lattice(i))).collect(),
        }
    }

    /// `Σ_ξ K(x - ξ) w(ξ) h^n` over the nonzero weights, by direct summation.
    pub fn convolve(&self, weights: &[f64]) -> Field {
        let g = self.grid;
        let support: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        let cell = g.cell();
        let values = (0..g.size())
            .into_par_iter()
            .map(|i| {
                let xi = g.lattice(i);
                support
                    .iter()
                    .map(|&(j, w)| {
                        let xj = g.lattice(j);
                        self.at([xi[0] - xj[0], xi[1] - xj[1]]) * w
                    })
                    .sum::<f64>()
                    * cell
            })
            .collect();
        Field { grid: g, values }
    }
}

/// Kernel column on a grid, exported with kind tag `kernel-column`.
pub fn kernel_column(kind: &KernelKind, grid: GridSpec, y: Option<f64>) -> Result<Field> {
    Ok(KernelTable::new(kind, grid, y)?.column())
}

/// Convolution against arbitrary (possibly signed) node weights.
pub fn convolve_weights(
    kind: &KernelKind,
    grid: GridSpec,
    weights: &[f64],
    y: Option<f64>,
) -> Result<Field> {
    if weights.len() != grid.size() {
        return Err(Error::GridMismatch(format!(
            "{} weights on a grid of {} nodes",
            weights.len(),
            grid.size()
        )));
    }
    let total: f64 = weights.iter().map(|w| w.abs()).sum::<f64>() * grid.cell();
    if !total.is_finite() {
        return Err(Error::NonFinite("measure mass"));
    }
    Ok(KernelTable::new(kind, grid, y)?.convolve(weights))
}

pub fn convolve_measure(
    kind: &KernelKind,
    mu: &DiscreteMeasure,
    out_grid: GridSpec,
    y: Option<f64>,
) -> Result<Field> {
    mu.grid.check_same(&out_grid)?;
    convolve_weights(kind, out_grid, &mu.weights, y)
}

/// Periodic sum of raw Poisson kernel images `Σ_m P(x + mL, y)` on the grid.
pub fn periodized_poisson(grid: GridSpec, s: f64, y: f64) -> Result<Field> {
    check_order(s)?;
    check_range("y", y, y > 0.0, "(0, inf)")?;
    let images: i64 = if grid.n == 1 { 64 } else { 12 };
    let len = grid.len;
    let n = grid.n;
    let values = (0..grid.size())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let mut acc = 0.0;
            for a in -images..=images {
                if n == 1 {
                    acc += eval_poisson(&[p[0] + a as f64 * len], y, 1, s, false)?;
                } else {
                    for b in -images..=images {
                        let x = [p[0] + a as f64 * len, p[1] + b as f64 * len];
                        acc += eval_poisson(&x, y, 2, s, false)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Field { grid, values })
}

/// Periodized Poisson column scaled so that `Σ P̃ h^n = 1`.
pub fn normalized_poisson(grid: GridSpec, s: f64, y: f64) -> Result<Field> {
    let p = periodized_poisson(grid, s, y)?;
    let mass = p.sum();
    Ok(p.scaled(1.0 / mass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_selection() {
        assert_eq!(branch(1, 1.5), Branch::LogN1);
        assert_eq!(branch(2, 1.5), Branch::LogN2);
        assert_eq!(branch(3, 1.5), Branch::LogN3);
        assert_eq!(branch(2, 1.5000001), Branch::Generic);
        assert_eq!(branch(1, 1.25), Branch::Generic);
    }

    #[test]
    fn singularity_is_an_error() {
        assert!(matches!(eval_phi_s(&[0.0, 0.0], 2, 1.2), Err(Error::KernelSingularity)));
        assert!(matches!(eval_e_s(&[0.0], 0.0, 1, 1.2), Err(Error::KernelSingularity)));
        assert!(eval_poisson(&[1.0], 0.0, 1, 1.2, false).is_err());
        assert!(eval_riesz_q(&[1.0, 0.0], 2.0).is_err());
    }

    #[test]
    fn power_cell_average_matches_quadrature() {
        let h = 0.3;
        for &p in &[-1.0, 1.0, 2.0] {
            let want = radial_cell_average_2d(h, |r| r.powf(p));
            let got = power_cell_average(2, p, h);
            assert!((got - want).abs() / want.abs() < 1e-12, "{p} {got} {want}");
        }
        // Midpoint sums over a fine sub-lattice converge to the singular average.
        let m = 2000;
        let p = -1.5;
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let x = -h / 2.0 + (a as f64 + 0.5) * h / m as f64;
                let y = -h / 2.0 + (b as f64 + 0.5) * h / m as f64;
                acc += (x * x + y * y).sqrt().powf(p);
            }
        }
        let brute = acc / (m * m) as f64;
        let got = power_cell_average(2, p, h);
        assert!((got - brute).abs() / got < 2e-2, "{got} {brute}");
        assert!((power_cell_average(2, 0.0, h) - 1.0).abs() < 1e-13);
        assert!((power_cell_average(1, 2.0, 1.0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn log_branch_cell_average_1d() {
        let h = 0.2;
        let k = KernelKind::PhiS { n: 1, s: 1.5 };
        let m = 200_000;
        let brute: f64 = (0..m)
            .map(|i| {
                let x = -h / 2.0 + (i as f64 + 0.5) * h / m as f64;
                profile(Branch::LogN1, 1, 1.5, x.abs())
            })
            .sum::<f64>()
            / m as f64;
        let got = self_cell_average(&k, h).unwrap();
        assert!((got - brute).abs() < 1e-9 * brute.abs().max(1e-3), "{got} {brute}");
    }

    #[test]
    fn table_column_has_center_cell() {
        let g = GridSpec::new(1, 4.0, 16).unwrap();
        let k = KernelKind::PhiS { n: 1, s: 1.25 };
        let col = kernel_column(&k, g, None).unwrap();
        assert_eq!(col.values[8], power_cell_average(1, 1.5, g.h()));
        assert!((col.values[9] - g.h().powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn height_argument_is_checked() {
        let g = GridSpec::new(1, 4.0, 16).unwrap();
        assert!(KernelTable::new(&KernelKind::Es { n: 1, s: 1.2 }, g, None).is_err());
        assert!(KernelTable::new(&KernelKind::PhiS { n: 1, s: 1.2 }, g, Some(1.0)).is_err());
        assert!(KernelTable::new(&KernelKind::PhiS { n: 2, s: 1.2 }, g, None).is_err());
    }
}
