//! Constrained minimization of `I[v] = ½[v]²_s - ⟨f, v⟩` over `v ≥ ψ`.
//!
//! Two admissible sets are supported. `Bounded` fixes `v = 0` off a domain
//! mask. `Global` has no domain; since the symbol vanishes at `ξ = 0`, the
//! periodic problem is only well posed modulo constants, so the admissible set
//! additionally carries the normalization `Σ v = 0`. Its multiplier `λ` shifts
//! the reaction: `μ = (-Δ)^s u - f + λ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{check_order, check_range, Error, Result};
use crate::grid::{Field, GridSpec};
use crate::measure::DiscreteMeasure;
use crate::spectral::{require_same, Multiplier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Global,
    Bounded,
}

/// Built-in obstacle profiles, radial about `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Obstacle {
    /// `max(height - curvature |x - x0|², floor)`.
    Paraboloid {
        height: f64,
        curvature: f64,
        floor: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Paraboloid up to `|x - x0| = knee`, continued by its tangent cone;
    /// `C^{1,1}` but not `C²`.
    Wedge {
        height: f64,
        curvature: f64,
        knee: f64,
        floor: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `floor + (height - floor) exp(1 - 1/(1 - |x - x0|²/radius²))` inside the radius.
    Bump {
        height: f64,
        radius: f64,
        floor: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `max(height - slope |x - x0|, floor)`.
    Hat {
        height: f64,
        slope: f64,
        floor: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Constant { value: f64 },
}

impl Obstacle {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        let dist = |c: [f64; 2]| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        match *self {
            Obstacle::Paraboloid {
                height,
                curvature,
                floor,
                center,
            } => {
                let r = dist(center);
                (height - curvature * r * r).max(floor)
            }
            Obstacle::Wedge {
                height,
                curvature,
                knee,
                floor,
                center,
            } => {
                let r = dist(center);
                let v = if r <= knee {
                    height - curvature * r * r
                } else {
                    height - curvature * knee * knee - 2.0 * curvature * knee * (r - knee)
                };
                v.max(floor)
            }
            Obstacle::Bump {
                height,
                radius,
                floor,
                center,
            } => {
                let q = dist(center) / radius;
                if q < 1.0 {
                    floor + (height - floor) * (1.0 - 1.0 / (1.0 - q * q)).exp()
                } else {
                    floor
                }
            }
            Obstacle::Hat {
                height,
                slope,
                floor,
                center,
            } => (height - slope * dist(center)).max(floor),
            Obstacle::Constant { value } => value,
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |p| self.value(p))
    }
}

/// Built-in forcing terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Forcing {
    Zero,
    /// `amplitude exp(-|x|²/width²)`.
    Gaussian { amplitude: f64, width: f64 },
}

impl Forcing {
    pub fn sample(&self, grid: GridSpec) -> Field {
        match *self {
            Forcing::Zero => Field::zeros(grid),
            Forcing::Gaussian { amplitude, width } => Field::from_fn(grid, |p| {
                amplitude * (-(p[0] * p[0] + p[1] * p[1]) / (width * width)).exp()
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub s: f64,
    pub grid: GridSpec,
    pub psi: Field,
    pub f: Field,
    pub omega: Vec<bool>,
    pub variant: Variant,
}

impl ObstacleProblem {
    pub fn new(
        s: f64,
        psi: Field,
        f: Field,
        omega: Vec<bool>,
        variant: Variant,
    ) -> Result<Self> {
        check_order(s)?;
        let grid = psi.grid;
        require_same(&psi, &f)?;
        psi.check_finite("obstacle")?;
        f.check_finite("forcing")?;
        if omega.len() != grid.size() {
            return Err(Error::GridMismatch("domain mask length".into()));
        }
        // ψ must be negative outside the central half of the box.
        let quarter = grid.len / 4.0;
        for i in 0..grid.size() {
            let p = grid.point(i);
            let outer = p[0].abs() >= quarter || p[1].abs() >= quarter;
            if outer && psi.values[i] >= 0.0 {
                return Err(Error::Geometry(format!(
                    "obstacle is nonnegative at {p:?}, outside the central region"
                )));
            }
        }
        match variant {
            Variant::Global => {
                if omega.iter().any(|&o| !o) {
                    return Err(Error::Geometry("global variant uses the full grid".into()));
                }
                if f.max_abs() != 0.0 {
                    return Err(Error::Inconsistent("global variant has f = 0".into()));
                }
                if psi.values.iter().sum::<f64>() >= 0.0 {
                    return Err(Error::Geometry(
                        "global variant needs Σψ < 0 for a mean-free admissible field".into(),
                    ));
                }
            }
            Variant::Bounded => {
                if omega.iter().all(|&o| o) {
                    return Err(Error::Geometry("domain complement is empty".into()));
                }
                if let Some(i) = (0..grid.size()).find(|&i| !omega[i] && psi.values[i] > 0.0) {
                    return Err(Error::Geometry(format!(
                        "obstacle positive off the domain at {:?}",
                        grid.point(i)
                    )));
                }
            }
        }
        Ok(Self {
            s,
            grid,
            psi,
            f,
            omega,
            variant,
        })
    }

    pub fn global(s: f64, psi: Field) -> Result<Self> {
        let g = psi.grid;
        Self::new(s, psi, Field::zeros(g), vec![true; g.size()], Variant::Global)
    }

    /// Bounded variant with `Ω` the open ball of the given radius about the center.
    pub fn bounded(s: f64, psi: Field, f: Field, radius: f64) -> Result<Self> {
        let omega = ball_mask(psi.grid, [0.0, 0.0], radius);
        Self::new(s, psi, f, omega, Variant::Bounded)
    }

    /// `max(1, ‖f‖∞, ‖ψ‖∞)`.
    pub fn scale(&self) -> f64 {
        1f64.max(self.f.max_abs()).max(self.psi.max_abs())
    }

    pub fn operator(&self) -> Multiplier {
        Multiplier::power(self.grid, self.s)
    }

    pub fn omega_nodes(&self) -> Vec<usize> {
        (0..self.grid.size()).filter(|&i| self.omega[i]).collect()
    }

    /// The same problem translated by a lattice vector.
    pub fn shifted(&self, by: [i64; 2]) -> Result<Self> {
        let mut omega = vec![false; self.omega.len()];
        for (i, &o) in self.omega.iter().enumerate() {
            omega[self.grid.shift(i, by)] = o;
        }
        Self::new(
            self.s,
            self.psi.shifted(by),
            self.f.shifted(by),
            omega,
            self.variant,
        )
    }
}

pub fn ball_mask(grid: GridSpec, center: [f64; 2], radius: f64) -> Vec<bool> {
    (0..grid.size())
        .map(|i| {
            let p = grid.point(i);
            ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() < radius
        })
        .collect()
}

/// Shift `τ` with `Σ max(v + τ, ψ) = 0`; requires `Σ ψ < 0`.
fn mean_free_shift(v: &[f64], psi: &[f64]) -> f64 {
    let mut bp: Vec<(f64, usize)> = v
        .iter()
        .zip(psi)
        .enumerate()
        .map(|(i, (a, b))| (b - a, i))
        .collect();
    bp.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sum_v = 0.0;
    let mut sum_psi: f64 = psi.iter().sum();
    for (k, &(t, i)) in bp.iter().enumerate() {
        if k > 0 && sum_v + k as f64 * t + sum_psi >= 0.0 {
            return -(sum_v + sum_psi) / k as f64;
        }
        sum_v += v[i];
        sum_psi -= psi[i];
    }
    -sum_v / v.len() as f64
}

/// Euclidean projection onto the admissible set.
pub fn project_admissible(v: &Field, p: &ObstacleProblem) -> Result<Field> {
    p.grid.check_same(&v.grid)?;
    let psi = &p.psi.values;
    let values = match p.variant {
        Variant::Bounded => v
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| if p.omega[i] { x.max(psi[i]) } else { 0.0 })
            .collect(),
        Variant::Global => {
            let tau = mean_free_shift(&v.values, psi);
            v.values
                .iter()
                .zip(psi)
                .map(|(&x, &q)| (x + tau).max(q))
                .collect()
        }
    };
    Ok(Field { grid: v.grid, values })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub rejected_steps: usize,
    pub final_energy: f64,
    pub energy_history: Vec<f64>,
    pub pg_residual: f64,
    pub complementarity_residual: f64,
    pub wall_time_s: f64,
}

struct Iterate {
    x: Field,
    ax: Field,
    energy: f64,
}

fn energy_of(x: &Field, ax: &Field, f: &Field) -> f64 {
    0.5 * x.dot(ax) - x.dot(f)
}

fn pg_residual(p: &ObstacleProblem, x: &Field, ax: &Field, t: f64) -> Result<f64> {
    let g = ax.sub(&p.f);
    let step = project_admissible(&x.zip_map(&g, |a, b| a - t * b), p)?;
    Ok(x.sub(&step).l2() / t)
}

/// Minimizes from `project_admissible(0)`.
pub fn solve(p: &ObstacleProblem, tol: f64, max_iter: usize) -> Result<(Field, SolveReport)> {
    solve_from(p, &Field::zeros(p.grid), tol, max_iter)
}

/// Accelerated projected gradient with gradient restart and a monotone
/// safeguard; the start is projected first.
pub fn solve_from(
    p: &ObstacleProblem,
    start: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, SolveReport)> {
    check_range("tol", tol, tol > 0.0, "(0, inf)")?;
    p.grid.check_same(&start.grid)?;
    let clock = Instant::now();
    let op = p.operator();
    let t = 1.0 / op.max();

    let x0 = project_admissible(start, p)?;
    let ax0 = op.apply(&x0);
    let mut cur = Iterate {
        energy: energy_of(&x0, &ax0, &p.f),
        x: x0,
        ax: ax0,
    };
    let mut y = cur.x.clone();
    let mut ay = cur.ax.clone();
    let mut theta = 1.0f64;
    let mut history = vec![cur.energy];
    let mut restarts = 0;
    let mut rejected = 0;
    let mut iterations = 0;
    let mut res = pg_residual(p, &cur.x, &cur.ax, t)?;

    while res > tol && iterations < max_iter {
        iterations += 1;
        let g = ay.sub(&p.f);
        let mut x = project_admissible(&y.zip_map(&g, |a, b| a - t * b), p)?;
        let mut ax = op.apply(&x);
        let mut energy = energy_of(&x, &ax, &p.f);

        let slack = 1e-14 * cur.energy.abs().max(1e-300);
        if energy > cur.energy + slack {
            rejected += 1;
            let g = cur.ax.sub(&p.f);
            x = project_admissible(&cur.x.zip_map(&g, |a, b| a - t * b), p)?;
            ax = op.apply(&x);
            energy = energy_of(&x, &ax, &p.f);
            theta = 1.0;
        } else {
            let mut along = 0.0;
            for i in 0..x.values.len() {
                along += (y.values[i] - x.values[i]) * (x.values[i] - cur.x.values[i]);
            }
            if along > 0.0 {
                restarts += 1;
                theta = 1.0;
            }
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        theta = theta_next;
        y = x.zip_map(&cur.x, |a, b| a + beta * (a - b));
        ay = ax.zip_map(&cur.ax, |a, b| a + beta * (a - b));
        cur = Iterate { x, ax, energy };
        history.push(energy);
        res = pg_residual(p, &cur.x, &cur.ax, t)?;
    }

    let comp = complementarity_with(p, &cur.x, &cur.ax);
    let report = SolveReport {
        converged: res <= tol,
        iterations,
        restarts,
        rejected_steps: rejected,
        final_energy: cur.energy,
        energy_history: history,
        pg_residual: res,
        complementarity_residual: comp,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok((cur.x, report))
}

/// Multiplier of the mean constraint, recovered as the negated median of
/// `(-Δ)^s u - f` over nodes strictly above the obstacle.
fn mean_multiplier(p: &ObstacleProblem, u: &Field, g: &Field) -> f64 {
    if p.variant == Variant::Bounded {
        return 0.0;
    }
    let ctol = 1e-6 * p.scale();
    let mut free: Vec<f64> = (0..u.values.len())
        .filter(|&i| u.values[i] - p.psi.values[i] > ctol)
        .map(|i| g.values[i])
        .collect();
    if free.is_empty() {
        return 0.0;
    }
    free.sort_by(|a, b| a.total_cmp(b));
    let m = free.len();
    let med = if m % 2 == 1 {
        free[m / 2]
    } else {
        0.5 * (free[m / 2 - 1] + free[m / 2])
    };
    -med
}

/// `(-Δ)^s u - f + λ` together with `λ` (zero for the bounded variant).
pub fn reaction(u: &Field, p: &ObstacleProblem) -> Result<(Field, f64)> {
    p.grid.check_same(&u.grid)?;
    let g = p.operator().apply(u).sub(&p.f);
    let lambda = mean_multiplier(p, u, &g);
    Ok((g.map(|v| v + lambda), lambda))
}

fn complementarity_with(p: &ObstacleProblem, u: &Field, au: &Field) -> f64 {
    let g = au.sub(&p.f);
    let lambda = mean_multiplier(p, u, &g);
    (0..u.values.len())
        .filter(|&i| p.omega[i])
        .map(|i| (u.values[i] - p.psi.values[i]).min(g.values[i] + lambda).abs())
        .fold(0.0, f64::max)
}

/// `max_Ω |min(u - ψ, (-Δ)^s u - f + λ)|`.
pub fn complementarity_residual(u: &Field, p: &ObstacleProblem) -> Result<f64> {
    p.grid.check_same(&u.grid)?;
    Ok(complementarity_with(p, u, &p.operator().apply(u)))
}

#[derive(Debug, Clone)]
pub struct MeasureExtraction {
    pub measure: DiscreteMeasure,
    /// Largest clamped-away negative value of the reaction on `Ω`.
    pub negative_part: f64,
    pub lambda: f64,
}

pub fn extract(u: &Field, p: &ObstacleProblem) -> Result<MeasureExtraction> {
    let (r, lambda) = reaction(u, p)?;
    let mut negative = 0.0f64;
    let weights = r
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !p.omega[i] {
                0.0
            } else {
                negative = negative.max(-v);
                v.max(0.0)
            }
        })
        .collect();
    Ok(MeasureExtraction {
        measure: DiscreteMeasure::new(p.grid, weights)?,
        negative_part: negative,
        lambda,
    })
}

/// `μ = ((-Δ)^s u - f + λ)⁺` on `Ω`; fails when the negative part exceeds
/// `1e-6 · scale`.
pub fn extract_measure(u: &Field, p: &ObstacleProblem) -> Result<DiscreteMeasure> {
    let e = extract(u, p)?;
    let tolerance = 1e-6 * p.scale();
    if e.negative_part > tolerance {
        return Err(Error::UnconvergedMeasure {
            negative: e.negative_part,
            tolerance,
        });
    }
    Ok(e.measure)
}

/// Band-limited random field: a handful of random Fourier modes.
pub fn random_smooth(grid: GridSpec, rng: &mut impl Rng, modes: usize, kmax: i64) -> Field {
    let l = grid.len;
    let terms: Vec<([f64; 2], f64, f64)> = (0..modes)
        .map(|_| {
            let k0 = rng.gen_range(-kmax..=kmax) as f64;
            let k1 = if grid.n == 2 {
                rng.gen_range(-kmax..=kmax) as f64
            } else {
                0.0
            };
            let w = 2.0 * std::f64::consts::PI / l;
            ([k0 * w, k1 * w], rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.3))
        })
        .collect();
    Field::from_fn(grid, |p| {
        terms
            .iter()
            .map(|(k, a, ph)| a * (k[0] * p[0] + k[1] * p[1] + ph).cos())
            .sum()
    })
}

/// A random admissible competitor `project_admissible(u + δ)` with a random
/// smooth, spiky or one-signed perturbation `δ`.
pub fn random_admissible(u: &Field, p: &ObstacleProblem, rng: &mut impl Rng) -> Result<Field> {
    let g = p.grid;
    let amp = p.scale() * 10f64.powf(rng.gen_range(-4.0..0.0));
    let delta = match rng.gen_range(0..3) {
        0 => random_smooth(g, rng, 6, 8).scaled(amp),
        1 => Field {
            grid: g,
            values: (0..g.size()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(),
        },
        _ => random_smooth(g, rng, 4, 4).map(|v| amp * v.abs()),
    };
    project_admissible(&u.add(&delta), p)
}

/// Smallest `⟨(-Δ)^s u - f, v - u⟩` over `trials` random admissible `v`.
pub fn variational_inequality_check(
    u: &Field,
    p: &ObstacleProblem,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let g = p.operator().apply(u).sub(&p.f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let v = random_admissible(u, p, &mut rng)?;
        worst = worst.min(g.dot(&v.sub(u)));
    }
    Ok(if trials == 0 { 0.0 } else { worst })
}
