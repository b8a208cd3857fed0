//! Localized measures, Riesz-potential reconstructions and the energy identity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{check_range, Error, Result};
use crate::grid::{Field, GridSpec};
use crate::kernels::{convolve_weights, kappa, KernelKind, KernelTable};
use crate::linalg::{gauss_integrate, lstsq, monomials};
use crate::measure::DiscreteMeasure;
use crate::solver::{extract_measure, random_smooth, ObstacleProblem};
use crate::spectral::{hs_seminorm, Multiplier};
use statrs::function::gamma::gamma;

/// Width of the smooth ramps at either end of the cutoff transition, as a
/// fraction of `ρ`.
const RAMP: f64 = 0.04;

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

fn smoothstep_integral(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(6) - 3.0 * x.powi(5) + 2.5 * x.powi(4)
}

/// Radial cutoff `η(r)`: 1 for `r ≤ ρ`, 0 for `r ≥ 2ρ`, and in between the
/// primitive of a plateau built from quintic smoothsteps, so that `η` is `C³`
/// with `|η'| ≤ 1/((1 - RAMP)ρ)`.
pub fn cutoff_profile(r: f64, rho: f64) -> f64 {
    let t = (r - rho) / rho;
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let total = 1.0 - RAMP;
    let g = if t < RAMP {
        RAMP * smoothstep_integral(t / RAMP)
    } else if t <= 1.0 - RAMP {
        RAMP / 2.0 + (t - RAMP)
    } else {
        total - RAMP * smoothstep_integral((1.0 - t) / RAMP)
    };
    1.0 - g / total
}

pub fn cutoff_slope(r: f64, rho: f64) -> f64 {
    let t = (r - rho) / rho;
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let g = if t < RAMP {
        smoothstep(t / RAMP)
    } else if t <= 1.0 - RAMP {
        1.0
    } else {
        smoothstep((1.0 - t) / RAMP)
    };
    -g / ((1.0 - RAMP) * rho)
}

#[derive(Debug, Clone)]
pub struct Cutoff {
    pub rho: f64,
    pub values: Field,
}

impl Cutoff {
    pub fn new(grid: GridSpec, rho: f64) -> Result<Self> {
        check_range("rho", rho, rho > 0.0 && 2.0 * rho < grid.len / 2.0, "(0, L/4)")?;
        let values = Field::from_fn(grid, |p| cutoff_profile((p[0] * p[0] + p[1] * p[1]).sqrt(), rho));
        Ok(Self { rho, values })
    }

    /// Largest `|∇η|` over the grid nodes.
    pub fn max_gradient(&self) -> f64 {
        let g = self.values.grid;
        (0..g.size())
            .map(|i| cutoff_slope(g.radius(i), self.rho).abs())
            .fold(0.0, f64::max)
    }
}

pub fn localize_measure(mu: &DiscreteMeasure, rho: f64) -> Result<DiscreteMeasure> {
    let eta = Cutoff::new(mu.grid, rho)?;
    DiscreteMeasure::new(
        mu.grid,
        mu.weights
            .iter()
            .zip(&eta.values.values)
            .map(|(w, e)| w * e)
            .collect(),
    )
}

fn central_nodes(grid: GridSpec, half_width: f64) -> Vec<usize> {
    (0..grid.size())
        .filter(|&i| {
            let p = grid.point(i);
            p[0].abs() <= half_width && (grid.n == 1 || p[1].abs() <= half_width)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GlobalCheck {
    pub rel_error: f64,
    /// Fitted multiple of the raw potential; compare with `kappa(n, s)`.
    pub constant: f64,
    pub kappa: f64,
}

/// Fits `u0 ≈ C (φ_s ∗ μ⁰) + p` on the central quarter, `p` a polynomial of
/// degree ≤ 4 standing in for the periodic harmonic remainder, and reports
/// the relative max-norm misfit.
pub fn global_representation_check(u0: &Field, mu0: &DiscreteMeasure, s: f64) -> Result<GlobalCheck> {
    let g = u0.grid;
    g.check_same(&mu0.grid)?;
    let k = kappa(g.n, s);
    let umax = u0.max_abs();
    if mu0.mass() == 0.0 {
        if umax == 0.0 {
            return Ok(GlobalCheck {
                rel_error: 0.0,
                constant: k,
                kappa: k,
            });
        }
    } else if umax == 0.0 {
        return Err(Error::Inconsistent("zero solution with nonzero measure".into()));
    }
    let pot = convolve_weights(&KernelKind::PhiS { n: g.n, s }, g, &mu0.weights, None)?;
    let nodes = central_nodes(g, g.len / 8.0);
    let rows: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&i| {
            let mut r = vec![pot.values[i]];
            r.extend(monomials(g.point(i), g.n, 4, false));
            r
        })
        .collect();
    let rhs: Vec<f64> = nodes.iter().map(|&i| u0.values[i]).collect();
    let (coef, resid) = lstsq(&rows, &rhs);
    let window_max = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(GlobalCheck {
        rel_error: if window_max == 0.0 { 0.0 } else { err / window_max },
        constant: coef[0],
        kappa: k,
    })
}

/// `C^∞` bump supported in the open ball of radius `rho`.
fn window(p: [f64; 2], rho: f64) -> f64 {
    let q = (p[0] * p[0] + p[1] * p[1]) / (rho * rho);
    if q < 1.0 {
        (1.0 - 1.0 / (1.0 - q)).exp()
    } else {
        0.0
    }
}

/// Random test field supported in `B_ρ`, with vanishing moments up to degree 4
/// and unit `H^s` seminorm.
pub fn test_function(grid: GridSpec, rho: f64, s: f64, rng: &mut impl Rng) -> Result<Field> {
    let kmax = ((grid.len / rho) as i64).max(2);
    let base = random_smooth(grid, rng, 8, kmax);
    let support: Vec<usize> = (0..grid.size())
        .filter(|&i| window(grid.point(i), rho) > 0.0)
        .collect();
    let w: Vec<f64> = support.iter().map(|&i| window(grid.point(i), rho)).collect();
    let mons: Vec<Vec<f64>> = support
        .iter()
        .map(|&i| {
            let p = grid.point(i);
            monomials([p[0] / rho, p[1] / rho], grid.n, 4, false)
        })
        .collect();
    let k = mons[0].len();
    // Solve (Mᵀ W M) c = Mᵀ (w g) so that ζ = w (g - M c) has zero moments.
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (j, &i) in support.iter().enumerate() {
        for a in 0..k {
            rhs[a] += mons[j][a] * w[j] * base.values[i];
            for b in 0..k {
                gram[(a, b)] += mons[j][a] * w[j] * mons[j][b];
            }
        }
    }
    let c = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Geometry("test ball too small for moment removal".into()))?;
    let mut zeta = Field::zeros(grid);
    for (j, &i) in support.iter().enumerate() {
        let corr: f64 = (0..k).map(|a| mons[j][a] * c[a]).sum();
        zeta.values[i] = w[j] * (base.values[i] - corr);
    }
    let norm = hs_seminorm(&zeta, s)?;
    Ok(zeta.scaled(1.0 / norm))
}

#[derive(Debug, Clone)]
pub struct LocalRemainder {
    pub remainder: Field,
    pub localized: DiscreteMeasure,
    /// `κ φ_s ∗ μ_ρ`.
    pub potential: Field,
    pub residual: f64,
}

fn check_local_geometry(p: &ObstacleProblem, rho: f64) -> Result<()> {
    check_range("rho", rho, rho > 0.0, "(0, inf)")?;
    let g = p.grid;
    for i in 0..g.size() {
        if g.radius(i) < 2.0 * rho && !p.omega[i] {
            return Err(Error::Geometry(format!(
                "B_2ρ with ρ = {rho} leaves the domain at {:?}",
                g.point(i)
            )));
        }
    }
    if 2.0 * rho >= g.len / 4.0 {
        return Err(Error::Geometry(format!("B_2ρ with ρ = {rho} exceeds the central region")));
    }
    Ok(())
}

/// `R = u - κ φ_s ∗ μ_ρ` and the weak residual of `(-Δ)^s R = f` in `B_ρ`
/// over `trials` random test fields.
pub fn local_remainder(
    u: &Field,
    p: &ObstacleProblem,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<LocalRemainder> {
    check_local_geometry(p, rho)?;
    let g = p.grid;
    let mu = extract_measure(u, p)?;
    let local = localize_measure(&mu, rho)?;
    let k = kappa(g.n, p.s);
    let potential =
        convolve_weights(&KernelKind::PhiS { n: g.n, s: p.s }, g, &local.weights, None)?.scaled(k);
    let remainder = u.sub(&potential);
    let op = Multiplier::power(g, p.s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual = 0.0f64;
    for _ in 0..trials {
        let zeta = test_function(g, rho, p.s, &mut rng)?;
        let r = remainder.dot(&op.apply(&zeta)) - p.f.dot(&zeta);
        residual = residual.max(r.abs());
    }
    Ok(LocalRemainder {
        remainder,
        localized: local,
        potential,
        residual,
    })
}

/// Centered second difference along axes `i, j` at node `idx`.
pub fn second_difference(u: &Field, idx: usize, i: usize, j: usize) -> f64 {
    let g = u.grid;
    let h = g.h();
    let e = |a: usize| -> [i64; 2] {
        let mut v = [0, 0];
        v[a] = 1;
        v
    };
    let at = |d: [i64; 2]| u.values[g.shift(idx, d)];
    if i == j {
        let d = e(i);
        (at(d) - 2.0 * at([0, 0]) + at([-d[0], -d[1]])) / (h * h)
    } else {
        let (a, b) = (e(i), e(j));
        let pp = at([a[0] + b[0], a[1] + b[1]]);
        let mm = at([-a[0] - b[0], -a[1] - b[1]]);
        let pm = at([a[0] - b[0], a[1] - b[1]]);
        let mp = at([-a[0] + b[0], -a[1] + b[1]]);
        (pp - pm - mp + mm) / (4.0 * h * h)
    }
}

pub fn discrete_laplacian(u: &Field, idx: usize) -> f64 {
    (0..u.grid.n).map(|a| second_difference(u, idx, a, a)).sum()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SecondDerivativeGap {
    /// Max over `B_{ρ/2}` and all `(i, j)` of the Hessian gap.
    pub hessian: f64,
    /// Max over `B_{ρ/2}` of the Laplacian gap.
    pub laplacian: f64,
}

/// Compares second differences of `u` with `κ (∂²φ_s) ∗ μ_ρ + D²R` on `B_{ρ/2}`.
pub fn second_derivative_representation_check(
    u: &Field,
    p: &ObstacleProblem,
    rho: f64,
) -> Result<SecondDerivativeGap> {
    let lr = local_remainder(u, p, rho, 0, 0)?;
    let g = p.grid;
    let n = g.n;
    let k = kappa(n, p.s);
    let inner: Vec<usize> = (0..g.size()).filter(|&i| g.radius(i) < rho / 2.0).collect();
    let mut hess_gap = 0.0f64;
    for a in 0..n {
        for b in a..n {
            let kern = KernelTable::new(&KernelKind::HessianPhiS { n, s: p.s, i: a, j: b }, g, None)?;
            let conv = kern.convolve(&lr.localized.weights);
            for &i in &inner {
                let lhs = second_difference(u, i, a, b);
                let rhs = k * conv.values[i] + second_difference(&lr.remainder, i, a, b);
                hess_gap = hess_gap.max((lhs - rhs).abs());
            }
        }
    }
    let lap = KernelTable::new(&KernelKind::LaplacianPhiS { n, s: p.s }, g, None)?
        .convolve(&lr.localized.weights);
    let mut lap_gap = 0.0f64;
    for &i in &inner {
        let lhs = discrete_laplacian(u, i);
        let rhs = k * lap.values[i] + discrete_laplacian(&lr.remainder, i);
        lap_gap = lap_gap.max((lhs - rhs).abs());
    }
    Ok(SecondDerivativeGap {
        hessian: hess_gap,
        laplacian: lap_gap,
    })
}

/// Fourier constant of `|x|^{α-n}`: its transform is `c |ξ|^{-α}`.
pub fn riesz_fourier_constant(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    PI.powf(nf / 2.0) * 2f64.powf(alpha) * gamma(alpha / 2.0) / gamma((nf - alpha) / 2.0)
}

/// `C(n, β)` of the continuum identity, from the Fourier constants.
pub fn riesz_identity_constant(n: usize, beta: f64) -> f64 {
    let c = riesz_fourier_constant(n, beta / 2.0);
    c * c / riesz_fourier_constant(n, beta)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RieszEnergy {
    pub lhs: f64,
    pub rhs: f64,
}

/// `∫|Q_{β/2} ∗ ν|²` (on a box `pad` times larger, plus the far-field tail of
/// the total mass) and `∫ Q_β ∗ ν dν`, for signed node weights.
pub fn riesz_energy(grid: GridSpec, weights: &[f64], beta: f64, pad: usize) -> Result<RieszEnergy> {
    let n = grid.n;
    check_range("beta", beta, beta > 0.0 && beta < n as f64 / 2.0, "(0, n/2)")?;
    if !pad.is_power_of_two() {
        return Err(Error::Inconsistent("pad factor must be a power of two".into()));
    }
    let rhs_pot = convolve_weights(&KernelKind::RieszQ { n, beta }, grid, weights, None)?;
    let rhs: f64 = rhs_pot
        .values
        .iter()
        .zip(weights)
        .map(|(a, w)| a * w)
        .sum::<f64>()
        * grid.cell();

    let big = GridSpec::new(n, grid.len * pad as f64, grid.nodes * pad)?;
    let mut wbig = vec![0.0; big.size()];
    for i in 0..grid.size() {
        let l = grid.lattice(i);
        let ij = [
            (l[0] + (big.nodes / 2) as i64) as usize,
            (l[1] + if n == 2 { (big.nodes / 2) as i64 } else { 0 }) as usize,
        ];
        wbig[big.flatten(ij)] = weights[i];
    }
    let pot = convolve_weights(&KernelKind::RieszQ { n, beta: beta / 2.0 }, big, &wbig, None)?;
    let mut lhs = pot.dot(&pot);
    // Far field: |Q_{β/2} ∗ ν|² ≈ M² |x|^{β-2n} outside the padded box.
    let mass: f64 = weights.iter().sum::<f64>() * grid.cell();
    let half = big.len / 2.0;
    let p = beta - 2.0 * n as f64;
    let tail = if n == 1 {
        2.0 * half.powf(p + 1.0) / -(p + 1.0)
    } else {
        8.0 * gauss_integrate(32, 0.0, PI / 4.0, |t| (half / t.cos()).powf(p + 2.0))
            / -(p + 2.0)
    };
    lhs += mass * mass * tail;
    Ok(RieszEnergy { lhs, rhs })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRow {
    pub center: [f64; 2],
    pub radius: f64,
    pub mass: f64,
    pub ratio: f64,
}

/// `μ(B_r(x)) / r^{n - 2(s-1)}` for every center and radius.
pub fn measure_density_probe(
    mu: &DiscreteMeasure,
    s: f64,
    centers: &[[f64; 2]],
    radii: &[f64],
) -> Result<Vec<DensityRow>> {
    let g = mu.grid;
    let exponent = g.n as f64 - 2.0 * (s - 1.0);
    let mut rows = Vec::new();
    for &c in centers {
        for &r in radii {
            if r < 2.0 * g.h() * (1.0 - 1e-12) {
                return Err(Error::OutOfRange {
                    name: "radius",
                    value: r,
                    range: "[2h, inf)",
                });
            }
            let mass = mu.ball_mass(c, r);
            rows.push(DensityRow {
                center: c,
                radius: r,
                mass,
                ratio: mass / r.powf(exponent),
            });
        }
    }
    Ok(rows)
}
