//! Half-space fields over a thin periodic grid: the Poisson extension, the
//! weighted operator `Δ_b = Δ_x + ∂_yy + (b/y)∂_y`, its square, the trace
//! `y^b ∂_y Δ_b U` at `y → 0`, and weighted Sobolev quadratures.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{check_order, check_range, Error, Result};
use crate::grid::{Field, GridSpec};
use crate::io::{self, FieldKind, Sidecar};
use crate::kernels::{eval_e_s, normalized_poisson, periodized_poisson};
use crate::linalg::{lstsq, monomials};
use crate::spectral::{dft, idft, Multiplier};

/// Values on `grid × {y_j}`, level-major: `(node, j)` at `j * N^n + node`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceField {
    pub grid: GridSpec,
    pub ylevels: Vec<f64>,
    pub values: Vec<f64>,
    pub b: f64,
}

impl HalfSpaceField {
    pub fn new(grid: GridSpec, ylevels: Vec<f64>, values: Vec<f64>, s: f64) -> Result<Self> {
        check_order(s)?;
        check_levels(&ylevels)?;
        if values.len() != grid.size() * ylevels.len() {
            return Err(Error::Inconsistent(format!(
                "{} values for {} nodes on {} levels",
                values.len(),
                grid.size(),
                ylevels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("half-space field"));
        }
        Ok(Self {
            grid,
            ylevels,
            values,
            b: 3.0 - 2.0 * s,
        })
    }

    pub fn from_levels(grid: GridSpec, ylevels: Vec<f64>, levels: Vec<Field>, s: f64) -> Result<Self> {
        if levels.iter().any(|f| f.grid != grid) {
            return Err(Error::GridMismatch("level grid differs".into()));
        }
        let values = levels.into_iter().flat_map(|f| f.values).collect();
        Self::new(grid, ylevels, values, s)
    }

    /// Samples `f(x, y)` on every node and level.
    pub fn from_fn(grid: GridSpec, ylevels: Vec<f64>, s: f64, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        let values = ylevels
            .iter()
            .flat_map(|&y| (0..grid.size()).map(move |i| (i, y)))
            .map(|(i, y)| f(grid.point(i), y))
            .collect();
        Self::new(grid, ylevels, values, s)
    }

    pub fn s(&self) -> f64 {
        (3.0 - self.b) / 2.0
    }

    pub fn levels(&self) -> usize {
        self.ylevels.len()
    }

    pub fn level(&self, j: usize) -> Field {
        let m = self.grid.size();
        Field {
            grid: self.grid,
            values: self.values[j * m..(j + 1) * m].to_vec(),
        }
    }

    fn level_slice(&self, j: usize) -> &[f64] {
        let m = self.grid.size();
        &self.values[j * m..(j + 1) * m]
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            ..self.clone()
        }
    }

    fn map_levels(&self, f: impl Fn(Field) -> Field + Sync) -> Self {
        let values = (0..self.levels())
            .into_par_iter()
            .flat_map_iter(|j| f(self.level(j)).values)
            .collect();
        self.with_values(values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|U|` over levels with `lo <= y_j <= hi`.
    pub fn max_abs_between(&self, lo: f64, hi: f64) -> f64 {
        (0..self.levels())
            .filter(|&j| self.ylevels[j] >= lo && self.ylevels[j] <= hi)
            .flat_map(|j| self.level_slice(j).iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Keeps levels `range`.
    pub fn restrict(&self, range: std::ops::Range<usize>) -> Self {
        let m = self.grid.size();
        Self {
            grid: self.grid,
            ylevels: self.ylevels[range.clone()].to_vec(),
            values: self.values[range.start * m..range.end * m].to_vec(),
            b: self.b,
        }
    }

    pub fn write(&self, stem: &Path) -> Result<[PathBuf; 2]> {
        let meta = Sidecar {
            ylevels: self.ylevels.clone(),
            ..Sidecar::thin(&self.grid, FieldKind::Halfspace)
        };
        io::write_values(stem, &meta, &self.values)
    }

    pub fn read(stem: &Path, s: f64) -> Result<Self> {
        let (meta, values) = io::read_values(stem)?;
        if meta.kind != FieldKind::Halfspace {
            return Err(Error::Format("expected a half-space field".into()));
        }
        Self::new(meta.grid()?, meta.ylevels, values, s)
    }
}

fn check_levels(ylevels: &[f64]) -> Result<()> {
    if ylevels.is_empty() {
        return Err(Error::Inconsistent("no y-levels".into()));
    }
    if ylevels.iter().any(|&y| !(y.is_finite() && y > 0.0)) {
        return Err(Error::Inconsistent("y-levels must be positive".into()));
    }
    if ylevels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Inconsistent("y-levels must increase strictly".into()));
    }
    Ok(())
}

fn require_levels(u: &HalfSpaceField, min: usize) -> Result<()> {
    if u.levels() < min {
        Err(Error::Inconsistent(format!(
            "{} y-levels, need at least {min}",
            u.levels()
        )))
    } else {
        Ok(())
    }
}

/// `y_j = y0 · ratio^j`.
pub fn geometric_levels(y0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| y0 * ratio.powi(j as i32)).collect()
}

/// Cell-centered `y_j = (j + ½) top / count`.
pub fn uniform_levels(top: f64, count: usize) -> Vec<f64> {
    let hy = top / count as f64;
    (0..count).map(|j| (j as f64 + 0.5) * hy).collect()
}

/// Geometric levels from `4h` with ratio 1.15, 24 of them.
pub fn trace_levels(grid: &GridSpec) -> Vec<f64> {
    geometric_levels(4.0 * grid.h(), 1.15, 24)
}

/// Fornberg weights at `z` for derivatives `0..=m` on the nodes `xs`.
fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let np = xs.len();
    let mut c = vec![vec![0.0; np]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..np {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] *= c4 / c3;
        }
        c1 = c2;
    }
    c
}

type Stencil = Vec<(usize, f64)>;

/// Per-level stencils for `∂_y` and `∂_yy`. With `reflect`, the bottom level
/// uses the even ghost `U(-y_0) = U(y_0)`; otherwise it is one-sided.
fn y_stencils(ys: &[f64], reflect: bool) -> (Vec<Stencil>, Vec<Stencil>) {
    let m = ys.len();
    let build = |idx: &[usize], j: usize, deriv: usize| -> Stencil {
        let xs: Vec<f64> = idx.iter().map(|&k| ys[k]).collect();
        let w = fd_weights(ys[j], &xs, deriv);
        idx.iter().copied().zip(w[deriv].iter().copied()).collect()
    };
    let mut d1 = Vec::with_capacity(m);
    let mut d2 = Vec::with_capacity(m);
    for j in 0..m {
        if j == 0 && reflect {
            let xs = [-ys[0], ys[0], ys[1]];
            let w = fd_weights(ys[0], &xs, 2);
            let fold = |k: usize| vec![(0, w[k][0] + w[k][1]), (1, w[k][2])];
            d1.push(fold(1));
            d2.push(fold(2));
        } else if j == 0 {
            let i3: Vec<usize> = (0..3.min(m)).collect();
            let i4: Vec<usize> = (0..4.min(m)).collect();
            d1.push(build(&i3, j, 1));
            d2.push(build(&i4, j, 2));
        } else if j == m - 1 {
            let i3: Vec<usize> = (m.saturating_sub(3)..m).collect();
            let i4: Vec<usize> = (m.saturating_sub(4)..m).collect();
            d1.push(build(&i3, j, 1));
            d2.push(build(&i4, j, 2));
        } else {
            let i3 = [j - 1, j, j + 1];
            d1.push(build(&i3, j, 1));
            d2.push(build(&i3, j, 2));
        }
    }
    (d1, d2)
}

fn apply_stencils(u: &HalfSpaceField, st: &[Stencil]) -> HalfSpaceField {
    let m = u.grid.size();
    let values = (0..u.levels())
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut row = vec![0.0; m];
            for &(k, w) in &st[j] {
                for (r, v) in row.iter_mut().zip(u.level_slice(k)) {
                    *r += w * v;
                }
            }
            row
        })
        .collect();
    u.with_values(values)
}

/// Spectral `∂/∂x_axis` of a thin field; the Nyquist bin is dropped.
fn spectral_partial(f: Field, axis: usize) -> Field {
    let g = f.grid;
    let mut spec = dft(&f);
    for (idx, c) in spec.iter_mut().enumerate() {
        let k = g.unflatten(idx)[axis];
        let xi = if 2 * k == g.nodes { 0.0 } else { g.wavenumber(k) };
        *c *= Complex64::new(0.0, xi);
    }
    idft(&g, spec)
}

/// Poisson extension `U(·, y_j) = P̃(·, y_j) ∗ u`, computed as a periodic
/// convolution with the lattice-normalized kernel column.
pub fn poisson_extend(u: &Field, s: f64, ylevels: &[f64]) -> Result<HalfSpaceField> {
    check_order(s)?;
    check_levels(ylevels)?;
    let g = u.grid;
    let half = (g.nodes / 2) as i64;
    let spec_u = dft(u);
    let cell = g.cell();
    let levels = ylevels
        .par_iter()
        .map(|&y| {
            let col = normalized_poisson(g, s, y)?.shifted([-half, -half]);
            let spec: Vec<Complex64> = dft(&col)
                .into_iter()
                .zip(&spec_u)
                .map(|(a, b)| a * b * cell)
                .collect();
            Ok(idft(&g, spec))
        })
        .collect::<Result<Vec<Field>>>()?;
    HalfSpaceField::from_levels(g, ylevels.to_vec(), levels, s)
}

/// `Δ_b U` with spectral `Δ_x` and even reflection at the bottom level.
pub fn delta_b_apply(u: &HalfSpaceField) -> Result<HalfSpaceField> {
    require_levels(u, 3)?;
    let lap = Multiplier::from_xi2(u.grid, |x2| -x2);
    let lx = u.map_levels(|f| lap.apply(&f));
    let (d1, d2) = y_stencils(&u.ylevels, true);
    let uy = apply_stencils(u, &d1);
    let uyy = apply_stencils(u, &d2);
    let m = u.grid.size();
    let values = lx
        .values
        .iter()
        .enumerate()
        .map(|(k, &a)| a + uyy.values[k] + u.b / u.ylevels[k / m] * uy.values[k])
        .collect();
    Ok(u.with_values(values))
}

/// `Δ_b² U` on the interior levels, two boundary layers dropped at each end.
pub fn bilap_b_residual(u: &HalfSpaceField) -> Result<HalfSpaceField> {
    require_levels(u, 5)?;
    let r = delta_b_apply(&delta_b_apply(u)?)?;
    Ok(r.restrict(2..u.levels() - 2))
}

/// Centered nonuniform `∂_y` at an interior level.
fn centered_dy(u: &HalfSpaceField, j: usize) -> Vec<f64> {
    let ys = &u.ylevels;
    let w = fd_weights(ys[j], &ys[j - 1..=j + 1], 1);
    let (a, b, c) = (u.level_slice(j - 1), u.level_slice(j), u.level_slice(j + 1));
    (0..a.len())
        .map(|i| w[1][0] * a[i] + w[1][1] * b[i] + w[1][2] * c[i])
        .collect()
}

/// Removes the `y^{1+b}`, `y²` and `y^{3+b}` terms from values at four levels
/// and returns the constant term per node.
fn extrapolate(ys: [f64; 4], vals: [Vec<f64>; 4], b: f64) -> Result<Vec<f64>> {
    let exps = [0.0, 1.0 + b, 2.0, 3.0 + b];
    let a = Matrix4::from_fn(|r, c| ys[r].powf(exps[c]));
    let inv = a
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Extrapolation("singular extrapolation basis".into()))?;
    let row = inv.row(0).into_owned();
    Ok((0..vals[0].len())
        .map(|i| (0..4).map(|r| row[r] * vals[r][i]).sum())
        .collect())
}

fn ratio_test(u: &HalfSpaceField, upto: usize) -> Result<()> {
    for j in 1..=upto {
        let q = u.ylevels[j] / u.ylevels[j - 1];
        if !(q > 1.0 && q <= 4.0) {
            return Err(Error::Extrapolation(format!(
                "level ratio {q} at level {j} outside (1, 4]"
            )));
        }
    }
    if u.ylevels[upto] > u.grid.len / 4.0 {
        return Err(Error::Extrapolation(format!(
            "level {upto} at y = {} is not small against L = {}",
            u.ylevels[upto], u.grid.len
        )));
    }
    Ok(())
}

/// `lim_{y→0} y^b ∂_y Δ_b U`, extrapolated from levels 2 to 5.
pub fn dirichlet_to_neumann(u: &HalfSpaceField) -> Result<Field> {
    require_levels(u, 7)?;
    ratio_test(u, 6)?;
    let db = delta_b_apply(u)?;
    let at = |j: usize| -> Vec<f64> {
        let yb = u.ylevels[j].powf(u.b);
        centered_dy(&db, j).into_iter().map(|v| yb * v).collect()
    };
    let ys = [u.ylevels[2], u.ylevels[3], u.ylevels[4], u.ylevels[5]];
    let values = extrapolate(ys, [at(2), at(3), at(4), at(5)], u.b)?;
    Ok(Field {
        grid: u.grid,
        values,
    })
}

/// Extrapolated `max |y^b ∂_y U|` at `y → 0`, from levels 1 to 4.
pub fn neumann_trace_check(u: &HalfSpaceField) -> Result<f64> {
    require_levels(u, 6)?;
    let at = |j: usize| -> Vec<f64> {
        let yb = u.ylevels[j].powf(u.b);
        centered_dy(u, j).into_iter().map(|v| yb * v).collect()
    };
    let ys = [u.ylevels[1], u.ylevels[2], u.ylevels[3], u.ylevels[4]];
    let trace = extrapolate(ys, [at(1), at(2), at(3), at(4)], u.b)?;
    Ok(trace.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// `⟨T u, u⟩ / (⟨u, u⟩ |ξ|^{2s})` for `u = cos(ξ x_1)`, `ξ = 2πk/L`, where
/// `T` is [`dirichlet_to_neumann`] of the Poisson extension.
pub fn mode_constant(grid: GridSpec, s: f64, ylevels: &[f64], k: usize) -> Result<f64> {
    let xi = 2.0 * std::f64::consts::PI * k as f64 / grid.len;
    let u = Field::from_fn(grid, |p| (xi * p[0]).cos());
    let t = dirichlet_to_neumann(&poisson_extend(&u, s, ylevels)?)?;
    Ok(t.dot(&u) / u.dot(&u) / xi.powf(2.0 * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorms {
    /// `(∫ y^b (U² + |∇U|² + |D²U|²))^{1/2}`.
    pub h2: f64,
    /// `(∫ y^b |∇Δ_b U|²)^{1/2}`.
    pub h1_delta_b: f64,
    /// `(∫ y^b |D³U|²)^{1/2}`.
    pub h3: f64,
}

/// `∂U/∂z_axis` with `z = (x, y)`; `axis == n` is the `y` direction, using
/// one-sided stencils at both ends.
fn partial(u: &HalfSpaceField, axis: usize) -> HalfSpaceField {
    if axis < u.grid.n {
        u.map_levels(|f| spectral_partial(f, axis))
    } else {
        apply_stencils(u, &y_stencils(&u.ylevels, false).0)
    }
}

/// Level widths for the `y` quadrature: midpoint cells, the lowest reaching 0.
fn level_widths(ys: &[f64]) -> Vec<f64> {
    let m = ys.len();
    (0..m)
        .map(|j| {
            let lo = if j == 0 { 0.0 } else { 0.5 * (ys[j - 1] + ys[j]) };
            let hi = if j + 1 < m {
                0.5 * (ys[j] + ys[j + 1])
            } else if m > 1 {
                ys[j] + 0.5 * (ys[j] - ys[j - 1])
            } else {
                2.0 * ys[j]
            };
            hi - lo
        })
        .collect()
}

/// `Σ y^b w_j h^n Σ_k f_k²` over the half-ball `|x|² + y² < r²`.
fn half_ball_sum(fields: &[&HalfSpaceField], radius: f64) -> f64 {
    let u = fields[0];
    let g = u.grid;
    let widths = level_widths(&u.ylevels);
    let m = g.size();
    let mut total = 0.0;
    for (j, &y) in u.ylevels.iter().enumerate() {
        if y >= radius {
            break;
        }
        let wj = y.powf(u.b) * widths[j] * g.cell();
        for i in 0..m {
            let p = g.point(i);
            if p[0] * p[0] + p[1] * p[1] + y * y < radius * radius {
                total += wj * fields.iter().map(|f| f.values[j * m + i].powi(2)).sum::<f64>();
            }
        }
    }
    total
}

/// Weighted quadratures of `U`, `∇Δ_b U` and `D³U` over the half-ball of
/// the given radius about the origin.
pub fn weighted_norms(u: &HalfSpaceField, radius: f64) -> Result<WeightedNorms> {
    require_levels(u, 4)?;
    let g = u.grid;
    check_range("radius", radius, radius > 2.0 * g.h() && radius < g.len / 2.0, "(2h, L/2)")?;
    if radius > *u.ylevels.last().unwrap() {
        return Err(Error::Geometry(format!(
            "half-ball of radius {radius} above the top level {}",
            u.ylevels.last().unwrap()
        )));
    }
    let axes = g.n + 1;
    let mut h2 = half_ball_sum(&[u], radius);
    let mut h3 = 0.0;
    for a in 0..axes {
        let ua = partial(u, a);
        h2 += half_ball_sum(&[&ua], radius);
        for b in 0..axes {
            let uab = partial(&ua, b);
            h2 += half_ball_sum(&[&uab], radius);
            for c in 0..axes {
                h3 += half_ball_sum(&[&partial(&uab, c)], radius);
            }
        }
    }
    let db = delta_b_apply(u)?;
    let mut h1 = 0.0;
    for a in 0..axes {
        h1 += half_ball_sum(&[&partial(&db, a)], radius);
    }
    Ok(WeightedNorms {
        h2: h2.sqrt(),
        h1_delta_b: h1.sqrt(),
        h3: h3.sqrt(),
    })
}

/// Weighted volume `Σ y_j^b w_j h^n #{|x|² + y_j² < r²}` of the discrete half-ball.
pub fn weighted_half_ball_volume(grid: GridSpec, ylevels: &[f64], b: f64, radius: f64) -> f64 {
    let widths = level_widths(ylevels);
    ylevels
        .iter()
        .zip(&widths)
        .filter(|(&y, _)| y < radius)
        .map(|(&y, &w)| {
            let count = (0..grid.size())
                .filter(|&i| {
                    let p = grid.point(i);
                    p[0] * p[0] + p[1] * p[1] + y * y < radius * radius
                })
                .count();
            y.powf(b) * w * grid.cell() * count as f64
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonToFundamental {
    pub y: f64,
    /// `C` in `(-Δ)^{-s} P(·, y) ≈ C E(·, y) + even polynomial`.
    pub constant: f64,
    /// Max fit residual over the variation of `C E` on the fit window.
    pub rel_residual: f64,
}

/// Applies `|ξ|^{-2s}` to the periodized raw Poisson column at height `y` and
/// fits `C E_s(·, y)` plus even polynomials of degree ≤ 4 on `|x_i| ≤ L/4`.
pub fn poisson_to_fundamental(grid: GridSpec, s: f64, y: f64) -> Result<PoissonToFundamental> {
    let p = periodized_poisson(grid, s, y)?;
    let et = Multiplier::inverse_power(grid, s).apply(&p);
    let n = grid.n;
    let window: Vec<usize> = (0..grid.size())
        .filter(|&i| grid.point(i)[..n].iter().all(|c| c.abs() <= grid.len / 4.0))
        .collect();
    let mut rows = Vec::with_capacity(window.len());
    let mut es = Vec::with_capacity(window.len());
    for &i in &window {
        let x = grid.point(i);
        let e = eval_e_s(&x[..n], y, n, s)?;
        let mut row = vec![e];
        row.extend(monomials(x, n, 4, true));
        rows.push(row);
        es.push(e);
    }
    let rhs: Vec<f64> = window.iter().map(|&i| et.values[i]).collect();
    let (coef, resid) = lstsq(&rows, &rhs);
    let c = coef[0];
    let (lo, hi) = es
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let spread = (c * (hi - lo)).abs();
    let worst = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(PoissonToFundamental {
        y,
        constant: c,
        rel_residual: worst / spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_matches_centered_differences() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn y_stencils_exact_on_quadratics() {
        let ys = geometric_levels(0.1, 1.3, 8);
        for reflect in [false, true] {
            let (d1, d2) = y_stencils(&ys, reflect);
            for j in 0..ys.len() {
                let a: f64 = d1[j].iter().map(|&(k, w)| w * ys[k] * ys[k]).sum();
                let c: f64 = d2[j].iter().map(|&(k, w)| w * ys[k] * ys[k]).sum();
                assert!((a - 2.0 * ys[j]).abs() < 1e-10, "{reflect} {j}");
                assert!((c - 2.0).abs() < 1e-9, "{reflect} {j}");
            }
        }
    }

    #[test]
    fn widths_tile_the_column() {
        let ys = uniform_levels(2.0, 16);
        let w = level_widths(&ys);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
