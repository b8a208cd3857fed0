use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform periodic lattice on the box `[-L/2, L/2)^n`.
///
/// Node `i` along an axis sits at `(i - N/2) h`, so the box center is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub len: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(n: usize, len: f64, nodes: usize) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{1, 2}}")));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::InvalidGrid(format!("side length {len} must be positive")));
        }
        if nodes < 4 || !nodes.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "node count {nodes} must be a power of two >= 4"
            )));
        }
        Ok(Self { n, len, nodes })
    }

    pub fn h(&self) -> f64 {
        self.len / self.nodes as f64
    }

    /// Volume of one lattice cell, `h^n`.
    pub fn cell(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    pub fn size(&self) -> usize {
        self.nodes.pow(self.n as u32)
    }

    /// Same box with twice as many nodes per axis.
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes,
            ..*self
        }
    }

    /// Signed lattice offset of index `i` from the center node.
    pub fn offset(&self, i: usize) -> i64 {
        i as i64 - (self.nodes / 2) as i64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.offset(i) as f64 * self.h()
    }

    /// Per-axis indices of a flat row-major index.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx / self.nodes, idx % self.nodes]
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        if self.n == 1 {
            ij[0]
        } else {
            ij[0] * self.nodes + ij[1]
        }
    }

    /// Physical position of a node. The unused second slot is 0 when `n = 1`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let ij = self.unflatten(idx);
        if self.n == 1 {
            [self.coord(ij[0]), 0.0]
        } else {
            [self.coord(ij[0]), self.coord(ij[1])]
        }
    }

    /// Lattice offset of a node relative to the center.
    pub fn lattice(&self, idx: usize) -> [i64; 2] {
        let ij = self.unflatten(idx);
        if self.n == 1 {
            [self.offset(ij[0]), 0]
        } else {
            [self.offset(ij[0]), self.offset(ij[1])]
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// Wavenumber of FFT bin `k` (standard ordering) along one axis.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let n = self.nodes;
        let signed = if k < n / 2 { k as i64 } else { k as i64 - n as i64 };
        2.0 * PI * signed as f64 / self.len
    }

    /// `|ξ|²` for every bin, in the same row-major layout as the field.
    pub fn xi_squared(&self) -> Vec<f64> {
        (0..self.size())
            .map(|idx| {
                let ij = self.unflatten(idx);
                let a = self.wavenumber(ij[0]);
                if self.n == 1 {
                    a * a
                } else {
                    let b = self.wavenumber(ij[1]);
                    a * a + b * b
                }
            })
            .collect()
    }

    /// Index of the node obtained by shifting `idx` by a lattice vector, wrapping periodically.
    pub fn shift(&self, idx: usize, by: [i64; 2]) -> usize {
        let m = self.nodes as i64;
        let ij = self.unflatten(idx);
        let a = (ij[0] as i64 + by[0]).rem_euclid(m) as usize;
        if self.n == 1 {
            a
        } else {
            let b = (ij[1] as i64 + by[1]).rem_euclid(m) as usize;
            self.flatten([a, b])
        }
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Real values on the nodes of a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.size()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.size()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.size()],
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.size()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete inner product `Σ u v h^n`.
    pub fn dot(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell()
    }

    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// Translates the field by a lattice vector with periodic wrap.
    pub fn shifted(&self, by: [i64; 2]) -> Field {
        let mut out = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            out[self.grid.shift(i, by)] = v;
        }
        Field {
            grid: self.grid,
            values: out,
        }
    }

    /// Restriction to the coarse grid with half as many nodes per axis.
    pub fn subsample(&self) -> Field {
        let g = self.grid;
        let coarse = GridSpec {
            nodes: g.nodes / 2,
            ..g
        };
        let values = (0..coarse.size())
            .map(|i| {
                let ij = coarse.unflatten(i);
                self.values[g.flatten([2 * ij[0], 2 * ij[1]])]
            })
            .collect();
        Field {
            grid: coarse,
            values,
        }
    }
}
