use fracobs::extension::{poisson_extend, uniform_levels, weighted_norms};
use fracobs::grid::{Field, GridSpec};
use fracobs::probes::*;
use fracobs::solver::{solve, Obstacle, ObstacleProblem};

fn preset(obstacle: Obstacle, s: f64, nodes: usize) -> (ObstacleProblem, Field) {
    let g = GridSpec::new(1, 16.0, nodes).unwrap();
    let p = ObstacleProblem::bounded(s, obstacle.sample(g), Field::zeros(g), 2.0).unwrap();
    let (u, rep) = solve(&p, 1e-10, 200_000).unwrap();
    assert!(rep.converged);
    (p, u)
}

fn paraboloid() -> Obstacle {
    Obstacle::Paraboloid { height: 1.0, curvature: 0.4, floor: -1.0, center: [0.0, 0.0] }
}

fn wedge() -> Obstacle {
    Obstacle::Wedge { height: 1.0, curvature: 0.4, knee: 1.0, floor: -1.0, center: [0.0, 0.0] }
}

#[test]
fn presets_are_c11_and_h1plus_s_stable() {
    for (obstacle, s) in [(paraboloid(), 1.25), (wedge(), 1.75)] {
        let (_, a) = preset(obstacle.clone(), s, 128);
        let (_, b) = preset(obstacle, s, 256);
        let c = c11_probe(&a, &b, 1.0, 1.25).unwrap();
        assert!(c.pass && !c.vacuous, "{c:?}");
        let (main, contrast) = h1plus_s_probe(&a, &b, s, 1.0, 1.25).unwrap();
        assert!(main.pass, "{main:?}");
        if s > 1.5 {
            assert!(contrast.pass, "{contrast:?}");
        }
    }
}

#[test]
fn three_halves_power_fails_the_c11_probe() {
    let g = GridSpec::new(1, 16.0, 128).unwrap();
    let f = |p: [f64; 2]| p[0].abs().powf(1.5);
    let r = c11_probe(&Field::from_fn(g, f), &Field::from_fn(g.refined(), f), 1.0, 1.25).unwrap();
    assert!(!r.pass);
    assert!((r.ratio.unwrap() - 2f64.sqrt()).abs() < 5e-2, "{r:?}");
}

#[test]
fn laplacian_bounds_on_the_paraboloid() {
    let (p, u) = preset(paraboloid(), 1.25, 256);
    let b = laplacian_bounds_probe(&u, &p, 0.74, 1e-6, 1e-6, 1e-2).unwrap();
    assert!(b.lower_report.pass, "{b:?}");
    assert!(b.contact_gap.is_some() && b.gap_report.pass, "{b:?}");
    let deep = ObstacleProblem::bounded(1.25, Field::constant(p.grid, -1.0), Field::zeros(p.grid), 2.0).unwrap();
    let (z, _) = solve(&deep, 1e-10, 1000).unwrap();
    let b = laplacian_bounds_probe(&z, &deep, 0.74, 1e-6, 1e-6, 1e-2).unwrap();
    assert!(b.contact_gap.is_none() && b.gap_report.vacuous);
}

#[test]
fn mollifier_converges_on_smooth_fields() {
    let g = GridSpec::new(2, 8.0, 128).unwrap();
    let u = Field::from_fn(g, |p| (p[0] * std::f64::consts::FRAC_PI_4).sin() * (p[1] * std::f64::consts::FRAC_PI_2).cos());
    let errs: Vec<f64> = [0.8, 0.4, 0.2]
        .iter()
        .map(|&e| mollify(&u, e).unwrap().sub(&u).max_abs())
        .collect();
    assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
}

#[test]
fn weighted_norms_stable_on_extended_presets() {
    for (obstacle, s) in [(paraboloid(), 1.25), (wedge(), 1.75)] {
        let mut w = Vec::new();
        for nodes in [128usize, 256] {
            let (_, u) = preset(obstacle.clone(), s, nodes);
            let h = u.grid.h();
            let top = 2.0;
            let ext = poisson_extend(&u, s, &uniform_levels(top, (top / h) as usize)).unwrap();
            w.push(weighted_norms(&ext, 1.0).unwrap());
        }
        for (a, b) in [(w[0].h2, w[1].h2), (w[0].h1_delta_b, w[1].h1_delta_b), (w[0].h3, w[1].h3)] {
            assert!(a > 0.0 && b / a <= 1.25, "{w:?}");
        }
    }
}
