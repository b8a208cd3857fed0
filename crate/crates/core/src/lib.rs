//! Obstacle problems for the fractional Laplacian of order `1 < s < 2`.
//!
//! The crate works on uniform periodic lattices in one or two dimensions.
//! `(-Δ)^s` is realized exactly as the Fourier multiplier `|ξ|^{2s}`; the
//! constrained energies are minimized by an accelerated projected gradient
//! method, and the reaction measure `μ = (-Δ)^s u - f` is then used to
//! reconstruct the solution from Riesz potentials, to build the
//! `b`-biharmonic half-space extension (`b = 3 - 2s`), and to probe the
//! regularity of the minimizer under grid refinement.
//!
//! Module map:
//!
//! * [`grid`], [`spectral`], [`io`]: lattices, fields, multipliers, norms
//!   and the on-disk field format.
//! * [`kernels`], [`measure`]: closed-form kernels and singular convolution
//!   against discrete measures.
//! * [`solver`], [`oracle`]: the constrained minimization and its brute-force
//!   active-set oracle.
//! * [`representation`], [`extension`], [`probes`]: the verification layer.

pub mod error;
pub mod extension;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod measure;
pub mod oracle;
pub mod probes;
pub mod representation;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec};
pub use kernels::KernelKind;
pub use measure::DiscreteMeasure;
pub use solver::{ObstacleProblem, SolveReport, Variant};
pub use spectral::Multiplier;
