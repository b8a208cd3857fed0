//! Experiment configuration, read from TOML with every key checked.

use std::path::{Path, PathBuf};

use fracobs::grid::{Field, GridSpec};
use fracobs::solver::{Forcing, Obstacle, ObstacleProblem, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub extension: ExtensionConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub length: f64,
    pub s: f64,
    pub variant: Variant,
    /// Radius of the ball `Ω`; bounded variant only.
    #[serde(default)]
    pub domain_radius: Option<f64>,
    /// Grid sizes, ascending.
    pub grids: Vec<usize>,
    pub obstacle: Obstacle,
    #[serde(default = "zero_forcing")]
    pub forcing: Forcing,
    /// Replace the solution by a synthetic field.
    #[serde(default)]
    pub control: Option<Control>,
}

fn zero_forcing() -> Forcing {
    Forcing::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// `|x|^{3/2}`, which is not `C^{1,1}` at the origin.
    ThreeHalvesPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionConfig {
    /// Height of the uniform level stack used for the weighted norms.
    pub top: f64,
    /// Modes `k = 1..=dtn_modes` in the Dirichlet-to-Neumann calibration.
    pub dtn_modes: usize,
    /// Smallest grid on which the mode spread is gated.
    #[serde(default = "dtn_min_nodes")]
    pub dtn_min_nodes: usize,
}

fn dtn_min_nodes() -> usize {
    256
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            top: 2.0,
            dtn_modes: 5,
            dtn_min_nodes: dtn_min_nodes(),
        }
    }
}

/// Thresholds; tolerances marked `·scale` are multiplied by the problem scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub seed: u64,
    /// Largest allowed fine/coarse ratio of a bounded probe.
    pub ratio: f64,
    /// Required coarse/fine decrease of the representation errors.
    pub decrease: f64,
    /// Ball for `c11`, `h1plus_s` and the weighted norms.
    pub radius: f64,
    /// Localization radius `ρ`.
    pub rho: f64,
    /// Contact tolerance (·scale).
    pub ctol: f64,
    /// Complementarity residual bound (·scale).
    pub complementarity_tol: f64,
    pub vi_trials: usize,
    /// Variational inequality bound (·scale).
    pub vi_tol: f64,
    pub remainder_trials: usize,
    /// Local remainder residual bound (·scale).
    pub remainder_tol: f64,
    /// Laplacian lower bound tolerance (·scale).
    pub lower_tol: f64,
    /// Contact Laplacian gap tolerance (·scale).
    pub gap_tol: f64,
    pub dtn_spread: f64,
    /// Gate on growth of the order-2s norm.
    pub expect_contrast_growth: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            ratio: 1.25,
            decrease: 1.5,
            radius: 1.0,
            rho: 0.74,
            ctol: 1e-6,
            complementarity_tol: 1e-6,
            vi_trials: 200,
            vi_tol: 1e-8,
            remainder_trials: 20,
            remainder_tol: 5e-3,
            lower_tol: 1e-3,
            gap_tol: 1e-2,
            dtn_spread: 2e-2,
            expect_contrast_growth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner().message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need more than the types, including building every problem.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(CliError::Config(format!("at `{key}`: {why}")));
        let p = &self.problem;
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad("name", "use letters, digits, '-' and '_'".into());
        }
        if p.grids.is_empty() {
            return bad("problem.grids", "empty".into());
        }
        if p.grids.windows(2).any(|w| w[1] <= w[0]) {
            return bad("problem.grids", "must be strictly ascending".into());
        }
        match (p.variant, p.domain_radius) {
            (Variant::Bounded, None) => return bad("problem.domain_radius", "required for the bounded variant".into()),
            (Variant::Global, Some(_)) => return bad("problem.domain_radius", "not used by the global variant".into()),
            _ => {}
        }
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 {
            return bad("solver.tol", "must be positive".into());
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter", "must be positive".into());
        }
        if self.extension.top.is_nan() || self.extension.top <= 0.0 {
            return bad("extension.top", "must be positive".into());
        }
        if self.extension.top < self.probes.radius {
            return bad("extension.top", "must be at least probes.radius".into());
        }
        if self.extension.dtn_modes < 2 {
            return bad("extension.dtn_modes", "need at least two modes".into());
        }
        let q = &self.probes;
        for (key, v) in [
            ("probes.ratio", q.ratio),
            ("probes.decrease", q.decrease),
            ("probes.radius", q.radius),
            ("probes.rho", q.rho),
            ("probes.ctol", q.ctol),
            ("probes.complementarity_tol", q.complementarity_tol),
            ("probes.vi_tol", q.vi_tol),
            ("probes.remainder_tol", q.remainder_tol),
            ("probes.lower_tol", q.lower_tol),
            ("probes.gap_tol", q.gap_tol),
            ("probes.dtn_spread", q.dtn_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("{v} is not a positive number"));
            }
        }
        for &nodes in &p.grids {
            self.problem(nodes)
                .map_err(|e| CliError::Config(format!("problem at N = {nodes}: {e}")))?;
        }
        Ok(())
    }

    pub fn grid(&self, nodes: usize) -> Result<GridSpec> {
        Ok(GridSpec::new(self.problem.dimension, self.problem.length, nodes)?)
    }

    pub fn problem(&self, nodes: usize) -> Result<ObstacleProblem> {
        let g = self.grid(nodes)?;
        let p = &self.problem;
        let psi = p.obstacle.sample(g);
        Ok(match p.variant {
            Variant::Global => {
                if p.forcing != Forcing::Zero {
                    return Err(CliError::Config("at `problem.forcing`: the global variant is unforced".into()));
                }
                ObstacleProblem::global(p.s, psi)?
            }
            Variant::Bounded => {
                ObstacleProblem::bounded(p.s, psi, p.forcing.sample(g), p.domain_radius.unwrap_or_default())?
            }
        })
    }

    /// The synthetic control field, if one is configured.
    pub fn control_field(&self, nodes: usize) -> Result<Option<Field>> {
        let g = self.grid(nodes)?;
        Ok(self.problem.control.map(|c| match c {
            Control::ThreeHalvesPower => Field::from_fn(g, |x| (x[0] * x[0] + x[1] * x[1]).powf(0.75)),
        }))
    }

    /// Digest of the blocks that determine the artifacts of one stage.
    pub fn fingerprint(&self, stage: Stage) -> String {
        let value = match stage {
            Stage::Solve => serde_json::json!({ "problem": self.problem, "solver": self.solver }),
            Stage::Extend => serde_json::json!({
                "problem": self.problem,
                "solver": self.solver,
                "extension": self.extension,
            }),
        };
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Solve,
    Extend,
}
