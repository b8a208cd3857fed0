//! The `solve`, `extend`, `verify` and `study` subcommands.

use std::path::{Path, PathBuf};

use fracobs::extension::{
    mode_constant, poisson_extend, trace_levels, uniform_levels, weighted_norms, HalfSpaceField, WeightedNorms,
};
use fracobs::io::{read_field, write_field, FieldKind};
use fracobs::measure::DiscreteMeasure;
use fracobs::probes::{c11_probe, contact_set, h1plus_s_probe, laplacian_bounds_probe, Expect, ProbeReport};
use fracobs::representation::{
    global_representation_check, local_remainder, second_derivative_representation_check,
};
use fracobs::solver::{complementarity_residual, extract_measure, solve, variational_inequality_check, Variant};
use fracobs::{Field, ObstacleProblem};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifacts::{grid_dir, rows_csv, write_atomic, Lock, Manifest, Row};
use crate::config::{ExperimentConfig, Stage};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub nodes: usize,
    pub converged: bool,
    pub synthetic: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub rejected_steps: usize,
    pub final_energy: f64,
    pub pg_residual: f64,
    pub complementarity_residual: f64,
    pub measure_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtnSummary {
    pub modes: Vec<f64>,
    pub spread: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn require_stage(cfg: &ExperimentConfig, dir: &Path, stage: Stage) -> Result<()> {
    if Manifest::complete(dir, stage, &cfg.fingerprint(stage))? {
        Ok(())
    } else {
        let what = match stage {
            Stage::Solve => "solve",
            Stage::Extend => "extend",
        };
        Err(CliError::Artifact(format!(
            "{} has no current `{what}` output; run `{what}` first",
            dir.display()
        )))
    }
}

/// Solves at one grid size and records the artifacts.
pub fn solve_grid(cfg: &ExperimentConfig, out: &Path, nodes: usize) -> Result<SolveSummary> {
    let p = cfg.problem(nodes)?;
    let dir = grid_dir(out, cfg, nodes);
    std::fs::create_dir_all(&dir)?;
    Manifest::forget(&dir, Stage::Solve)?;
    let (u, summary, mu) = match cfg.control_field(nodes)? {
        Some(u) => {
            let summary = SolveSummary {
                nodes,
                converged: true,
                synthetic: true,
                iterations: 0,
                restarts: 0,
                rejected_steps: 0,
                final_energy: f64::NAN,
                pg_residual: f64::NAN,
                complementarity_residual: complementarity_residual(&u, &p)?,
                measure_mass: 0.0,
            };
            (u, summary, DiscreteMeasure::zero(p.grid))
        }
        None => {
            let (u, rep) = solve(&p, cfg.solver.tol, cfg.solver.max_iter)?;
            info!(
                "N = {nodes}: {} iterations, {} restarts, {:.2} s",
                rep.iterations, rep.restarts, rep.wall_time_s
            );
            let mu = if rep.converged {
                extract_measure(&u, &p)?
            } else {
                DiscreteMeasure::zero(p.grid)
            };
            let summary = SolveSummary {
                nodes,
                converged: rep.converged,
                synthetic: false,
                iterations: rep.iterations,
                restarts: rep.restarts,
                rejected_steps: rep.rejected_steps,
                final_energy: rep.final_energy,
                pg_residual: rep.pg_residual,
                complementarity_residual: rep.complementarity_residual,
                measure_mass: mu.mass(),
            };
            (u, summary, mu)
        }
    };
    let mut files: Vec<PathBuf> = Vec::new();
    files.extend(write_field(&dir.join("u"), &u, FieldKind::Thin)?);
    files.extend(write_field(&dir.join("psi"), &p.psi, FieldKind::Thin)?);
    files.extend(write_field(&dir.join("mu"), &mu.as_field(), FieldKind::Thin)?);
    let report = dir.join("solve_report.json");
    write_json(&report, &summary)?;
    files.push(report);
    if !summary.converged {
        return Err(CliError::NotConverged(nodes));
    }
    Manifest::record(&dir, Stage::Solve, cfg.fingerprint(Stage::Solve), &files)?;
    Ok(summary)
}

fn uniform_stack(cfg: &ExperimentConfig, u: &Field) -> Vec<f64> {
    let count = (cfg.extension.top / u.grid.h()).round().max(4.0) as usize;
    uniform_levels(cfg.extension.top, count)
}

/// Poisson extension and Dirichlet-to-Neumann calibration at one grid size.
pub fn extend_grid(cfg: &ExperimentConfig, out: &Path, nodes: usize) -> Result<DtnSummary> {
    let dir = grid_dir(out, cfg, nodes);
    require_stage(cfg, &dir, Stage::Solve)?;
    Manifest::forget(&dir, Stage::Extend)?;
    let s = cfg.problem.s;
    let u = read_field(&dir.join("u"))?;
    let ext = poisson_extend(&u, s, &uniform_stack(cfg, &u))?;
    let levels = trace_levels(&u.grid);
    let modes = (1..=cfg.extension.dtn_modes)
        .map(|k| mode_constant(u.grid, s, &levels, k))
        .collect::<fracobs::Result<Vec<f64>>>()?;
    let mean = modes.iter().sum::<f64>() / modes.len() as f64;
    let spread = modes.iter().fold(0.0f64, |m, c| m.max((c - mean).abs())) / mean.abs();
    let summary = DtnSummary { modes, spread };
    let mut files: Vec<PathBuf> = ext.write(&dir.join("ext"))?.to_vec();
    let path = dir.join("dtn.json");
    write_json(&path, &summary)?;
    files.push(path);
    Manifest::record(&dir, Stage::Extend, cfg.fingerprint(Stage::Extend), &files)?;
    Ok(summary)
}

/// Per-grid quantities shared by the single-grid and pair rows.
struct GridState {
    nodes: usize,
    problem: ObstacleProblem,
    u: Field,
    remainder: Option<f64>,
    second_gap: Option<f64>,
    global_error: Option<f64>,
    norms: WeightedNorms,
}

fn grid_rows(cfg: &ExperimentConfig, out: &Path, nodes: usize, rows: &mut Vec<Row>) -> Result<GridState> {
    let dir = grid_dir(out, cfg, nodes);
    require_stage(cfg, &dir, Stage::Solve)?;
    require_stage(cfg, &dir, Stage::Extend)?;
    let q = &cfg.probes;
    let p = cfg.problem(nodes)?;
    let u = read_field(&dir.join("u"))?;
    let mu = DiscreteMeasure::new(p.grid, read_field(&dir.join("mu"))?.values)?;
    let ext = HalfSpaceField::read(&dir.join("ext"), p.s)?;
    let dtn: DtnSummary = read_json(&dir.join("dtn.json"))?;
    let scale = p.scale();

    rows.push(Row::gating(ProbeReport::single(
        "complementarity",
        nodes,
        complementarity_residual(&u, &p)? / scale,
        q.complementarity_tol,
        false,
    )));
    let contact = contact_set(&u, &p, q.ctol * scale)?;
    let stray = mu.support(q.ctol * scale).iter().filter(|i| !contact.contains(i)).count();
    rows.push(Row::gating(ProbeReport::single(
        "support_outside_contact",
        nodes,
        stray as f64,
        0.0,
        false,
    )));
    let vi = variational_inequality_check(&u, &p, q.vi_trials, q.seed)?;
    rows.push(Row::gating(ProbeReport::single(
        "variational_inequality",
        nodes,
        vi / scale,
        -q.vi_tol,
        true,
    )));
    let spread = ProbeReport::single("dtn_spread", nodes, dtn.spread, q.dtn_spread, false);
    rows.push(if nodes >= cfg.extension.dtn_min_nodes {
        Row::gating(spread)
    } else {
        Row::info(spread)
    });

    let (mut remainder, mut second_gap, mut global_error) = (None, None, None);
    let synthetic = cfg.problem.control.is_some();
    if synthetic {
        info!("N = {nodes}: synthetic field, representation checks skipped");
    }
    match p.variant {
        _ if synthetic => {}
        Variant::Bounded => {
            let lr = local_remainder(&u, &p, q.rho, q.remainder_trials, q.seed)?;
            rows.push(Row::gating(ProbeReport::single(
                "local_remainder",
                nodes,
                lr.residual / scale,
                q.remainder_tol,
                false,
            )));
            remainder = Some(lr.residual);
            let b = laplacian_bounds_probe(&u, &p, q.rho, q.ctol * scale, q.lower_tol * scale, q.gap_tol * scale)?;
            rows.push(Row::gating(b.lower_report));
            rows.push(Row::gating(b.gap_report));
            second_gap = Some(second_derivative_representation_check(&u, &p, q.rho)?.laplacian);
        }
        Variant::Global => {
            let g = global_representation_check(&u, &mu, p.s)?;
            rows.push(Row::info(ProbeReport::single(
                "global_representation",
                nodes,
                g.rel_error,
                f64::INFINITY,
                false,
            )));
            global_error = Some(g.rel_error);
        }
    }
    let norms = weighted_norms(&ext, q.radius)?;
    Ok(GridState {
        nodes,
        problem: p,
        u,
        remainder,
        second_gap,
        global_error,
        norms,
    })
}

fn pair_rows(cfg: &ExperimentConfig, a: &GridState, b: &GridState, rows: &mut Vec<Row>) -> Result<()> {
    let q = &cfg.probes;
    let grids = [a.nodes, b.nodes];
    rows.push(Row::gating(c11_probe(&a.u, &b.u, q.radius, q.ratio)?));
    let (main, contrast) = h1plus_s_probe(&a.u, &b.u, a.problem.s, q.radius, q.ratio)?;
    rows.push(Row::gating(main));
    rows.push(if q.expect_contrast_growth {
        Row::gating(contrast)
    } else {
        Row::info(contrast)
    });
    let decrease = 1.0 / q.decrease;
    let mut pair = |name: &str, va: Option<f64>, vb: Option<f64>, threshold: f64| {
        if let (Some(x), Some(y)) = (va, vb) {
            rows.push(Row::gating(ProbeReport::from_pair(name, grids, [x, y], threshold, Expect::Bounded)));
        }
    };
    pair("local_remainder_refinement", a.remainder, b.remainder, 1.0);
    pair("second_derivative_gap", a.second_gap, b.second_gap, decrease);
    pair("global_representation_refinement", a.global_error, b.global_error, decrease);
    let (na, nb) = (a.norms, b.norms);
    pair("weighted_h2", Some(na.h2), Some(nb.h2), q.ratio);
    pair("weighted_h1_delta_b", Some(na.h1_delta_b), Some(nb.h1_delta_b), q.ratio);
    pair("weighted_h3", Some(na.h3), Some(nb.h3), q.ratio);
    Ok(())
}

/// All rows for the configured grids; pair rows for every consecutive
/// refinement pair.
pub fn verify_rows(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut states: Vec<GridState> = Vec::new();
    for &nodes in &cfg.problem.grids {
        states.push(grid_rows(cfg, out, nodes, &mut rows)?);
    }
    for w in states.windows(2) {
        if w[1].nodes == 2 * w[0].nodes {
            pair_rows(cfg, &w[0], &w[1], &mut rows)?;
        } else {
            warn!("grids {} and {} are not a refinement pair", w[0].nodes, w[1].nodes);
        }
    }
    Ok(rows)
}

fn write_rows(out: &Path, stem: &str, rows: &[Row]) -> Result<()> {
    write_atomic(&out.join(format!("{stem}.csv")), rows_csv(rows).as_bytes())?;
    write_json(&out.join(format!("{stem}.json")), &rows)
}

fn finish(rows: &[Row]) -> Result<()> {
    let failed = rows.iter().filter(|r| r.failed()).count();
    for r in rows.iter().filter(|r| r.failed()) {
        warn!("failed: {} on {:?}: {:?}", r.report.probe, r.report.grids, r.report.values);
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let _lock = Lock::acquire(out)?;
    for &nodes in &cfg.problem.grids {
        solve_grid(cfg, out, nodes)?;
    }
    Ok(())
}

pub fn cmd_extend(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let _lock = Lock::acquire(out)?;
    for &nodes in &cfg.problem.grids {
        extend_grid(cfg, out, nodes)?;
    }
    Ok(())
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    for &nodes in &cfg.problem.grids {
        require_stage(cfg, &grid_dir(out, cfg, nodes), Stage::Solve)?;
    }
    let _lock = Lock::acquire(out)?;
    let rows = verify_rows(cfg, out)?;
    write_rows(out, "verify", &rows)?;
    finish(&rows)
}

/// Solve and extend every grid not already complete, then verify and write
/// the refinement tables.
pub fn cmd_study(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let _lock = Lock::acquire(out)?;
    for &nodes in &cfg.problem.grids {
        let dir = grid_dir(out, cfg, nodes);
        if Manifest::complete(&dir, Stage::Solve, &cfg.fingerprint(Stage::Solve))? {
            info!("N = {nodes}: solve output is current, skipping");
        } else {
            solve_grid(cfg, out, nodes)?;
        }
        if Manifest::complete(&dir, Stage::Extend, &cfg.fingerprint(Stage::Extend))? {
            info!("N = {nodes}: extension output is current, skipping");
        } else {
            extend_grid(cfg, out, nodes)?;
        }
    }
    let rows = verify_rows(cfg, out)?;
    write_rows(out, "verify", &rows)?;
    let table: Vec<Row> = rows.iter().filter(|r| r.report.grids[0] != r.report.grids[1]).cloned().collect();
    write_rows(out, "study", &table)?;
    finish(&rows)
}
