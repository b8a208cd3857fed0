use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Nonnegative node weights; the mass carried by node `i` is `weights[i] h^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: GridSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.size() {
            return Err(Error::InvalidGrid(format!(
                "measure has {} weights, grid expects {}",
                weights.len(),
                grid.size()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("measure"));
        }
        if let Some(w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(Error::OutOfRange {
                name: "measure weight",
                value: *w,
                range: "[0, inf)",
            });
        }
        Ok(Self { grid, weights })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            weights: vec![0.0; grid.size()],
        }
    }

    /// A single node carrying total mass `mass`.
    pub fn point(grid: GridSpec, node: usize, mass: f64) -> Result<Self> {
        let mut w = vec![0.0; grid.size()];
        w[node] = mass / grid.cell();
        Self::new(grid, w)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.grid.cell()
    }

    /// Nodes whose weight exceeds `tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > tol)
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.grid, self.weights.iter().map(|w| c * w).collect())
    }

    pub fn as_field(&self) -> Field {
        Field {
            grid: self.grid,
            values: self.weights.clone(),
        }
    }

    /// Mass inside the closed ball of radius `r` around `center`, with node
    /// positions compared as plain (non-periodic) coordinates.
    pub fn ball_mass(&self, center: [f64; 2], r: f64) -> f64 {
        let g = self.grid;
        (0..self.weights.len())
            .filter(|&i| {
                let p = g.point(i);
                let d = [p[0] - center[0], p[1] - center[1]];
                (d[0] * d[0] + d[1] * d[1]).sqrt() <= r + 1e-12 * g.h()
            })
            .map(|i| self.weights[i])
            .sum::<f64>()
            * g.cell()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_weights() {
        let g = GridSpec::new(1, 1.0, 8).unwrap();
        let mut w = vec![0.0; 8];
        w[3] = -1e-3;
        assert!(DiscreteMeasure::new(g, w).is_err());
    }

    #[test]
    fn point_mass_and_ball() {
        let g = GridSpec::new(2, 4.0, 16).unwrap();
        let c = g.flatten([8, 8]);
        let m = DiscreteMeasure::point(g, c, 2.5).unwrap();
        assert!((m.mass() - 2.5).abs() < 1e-14);
        assert!((m.ball_mass([0.0, 0.0], 0.1) - 2.5).abs() < 1e-14);
        assert_eq!(m.ball_mass([1.0, 1.0], 0.5), 0.0);
        assert_eq!(m.support(0.0), vec![c]);
    }
}
