//! Fourier multipliers on periodic lattices.
//!
//! Transforms follow the convention `û(ξ) = h^n Σ_x u(x) e^{-i ξ·x}`, so that
//! `Σ u v h^n = L^{-n} Σ_ξ û conj(v̂)`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{check_order, check_range, Error, Result};
use crate::grid::{Field, GridSpec};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((len, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

fn transform(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let m = grid.nodes;
    let p = plan(m, inverse);
    if grid.n == 1 {
        p.process(data);
        return;
    }
    p.process(data);
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = data[i * m + j];
        }
        p.process(&mut col);
        for i in 0..m {
            data[i * m + j] = col[i];
        }
    }
}

/// Unscaled forward DFT of a real field.
pub fn dft(u: &Field) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&u.grid, &mut data, false);
    data
}

/// Inverse of [`dft`], returning the real part.
///
/// Panics in debug builds if the imaginary residue exceeds `1e-10` relative,
/// which would mean the spectrum was not conjugate symmetric.
pub fn idft(grid: &GridSpec, mut data: Vec<Complex64>) -> Field {
    transform(grid, &mut data, true);
    let scale = 1.0 / grid.size() as f64;
    let mut re_max = 0.0f64;
    let mut im_max = 0.0f64;
    let values = data
        .iter()
        .map(|c| {
            re_max = re_max.max(c.re.abs());
            im_max = im_max.max(c.im.abs());
            c.re * scale
        })
        .collect();
    debug_assert!(
        im_max <= 1e-10 * re_max.max(f64::MIN_POSITIVE),
        "imaginary residue {im_max:e} vs {re_max:e}"
    );
    Field {
        grid: *grid,
        values,
    }
}

/// A real, even symbol sampled on the frequency lattice of a grid.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Multiplier {
    pub fn from_xi2(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.xi_squared().into_iter().map(f).collect();
        Self { grid, values }
    }

    /// `|ξ|^{2σ}` with value 0 at `ξ = 0`.
    pub fn power(grid: GridSpec, sigma: f64) -> Self {
        Self::from_xi2(grid, |x2| if x2 == 0.0 { 0.0 } else { x2.powf(sigma) })
    }

    /// `|ξ|^{-2σ}` with value 0 at `ξ = 0`.
    pub fn inverse_power(grid: GridSpec, sigma: f64) -> Self {
        Self::from_xi2(grid, |x2| if x2 == 0.0 { 0.0 } else { x2.powf(-sigma) })
    }

    /// `(1 + |ξ|²)^{order}`.
    pub fn bessel(grid: GridSpec, order: f64) -> Self {
        Self::from_xi2(grid, |x2| (1.0 + x2).powf(order))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn apply(&self, u: &Field) -> Field {
        debug_assert_eq!(self.grid, u.grid);
        let mut spec = dft(u);
        for (c, &m) in spec.iter_mut().zip(&self.values) {
            *c *= m;
        }
        idft(&u.grid, spec)
    }

    /// `L^{-n} Σ m |û|²`, the quadratic form of the symbol.
    pub fn quadratic(&self, u: &Field) -> f64 {
        let spec = dft(u);
        let cell = u.grid.cell();
        let total: f64 = spec
            .iter()
            .zip(&self.values)
            .map(|(c, &m)| m * c.norm_sqr())
            .sum();
        total * cell * cell / u.grid.len.powi(u.grid.n as i32)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    check_range("sigma", sigma, sigma > 0.0 && sigma <= 2.0, "(0, 2]")
}

/// `(-Δ)^σ u` as the multiplier `|ξ|^{2σ}`.
pub fn frac_laplacian(u: &Field, sigma: f64) -> Result<Field> {
    check_sigma(sigma)?;
    u.check_finite("frac_laplacian input")?;
    Ok(Multiplier::power(u.grid, sigma).apply(u))
}

pub fn hs_seminorm(u: &Field, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    u.check_finite("hs_seminorm input")?;
    Ok(Multiplier::power(u.grid, sigma).quadratic(u).max(0.0).sqrt())
}

pub fn energy_i0(u: &Field, s: f64) -> Result<f64> {
    check_order(s)?;
    let v = hs_seminorm(u, s)?;
    Ok(v * v)
}

/// `½ [u]²_s - Σ f u h^n`.
pub fn energy_i(u: &Field, f: &Field, s: f64) -> Result<f64> {
    u.grid.check_same(&f.grid)?;
    Ok(0.5 * energy_i0(u, s)? - u.dot(f))
}

/// `(Σ (1+|ξ|²)^{order} |û|² / L^n)^{1/2}`.
pub fn h_sigma_norm(u: &Field, order: f64) -> Result<f64> {
    check_range("order", order, order >= 0.0, "[0, inf)")?;
    u.check_finite("h_sigma_norm input")?;
    Ok(Multiplier::bessel(u.grid, order).quadratic(u).max(0.0).sqrt())
}

/// Gradient of [`energy_i`]: `(-Δ)^s u - f`.
pub fn energy_gradient(u: &Field, f: &Field, s: f64) -> Result<Field> {
    check_order(s)?;
    u.grid.check_same(&f.grid)?;
    Ok(frac_laplacian(u, s)?.sub(f))
}

pub(crate) fn require_same(a: &Field, b: &Field) -> Result<()> {
    if a.grid == b.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)))
    }
}
