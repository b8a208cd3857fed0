//! Acceptance criteria 1–12, one line per criterion on stdout.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracobs::extension::*;
use fracobs::kernels::*;
use fracobs::oracle::brute_force_qp;
use fracobs::probes::contact_set;
use fracobs::representation::*;
use fracobs::solver::*;
use fracobs::spectral::frac_laplacian;
use fracobs::{Field, GridSpec};
use fracobs_cli::artifacts::Row;
use fracobs_cli::commands::cmd_study;
use fracobs_cli::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail, with the reason printed next to the verdict.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    6,
    "-Δ(κφ_s) changes sign for n = 1, s > 3/2 (|x|^{2s-1} is convex) and for the n = 1 log branch beyond |x| = e^{-1/2}",
)];

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn preset(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"));
    ExperimentConfig::load(&path).unwrap()
}

fn study_rows(out: &Path) -> Vec<Row> {
    serde_json::from_slice(&std::fs::read(out.join("study.json")).unwrap()).unwrap()
}

fn row<'a>(rows: &'a [Row], probe: &str) -> &'a Row {
    rows.iter().find(|r| r.report.probe == probe).unwrap()
}

fn solved(obstacle: Obstacle, s: f64, nodes: usize) -> (ObstacleProblem, Field) {
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

fn spectral_exactness() -> Verdict {
    let g = GridSpec::new(1, 2.0 * std::f64::consts::PI, 64).unwrap();
    let (mut eig, mut res) = (0.0f64, 0.0f64);
    for s in [1.1, 1.25, 1.5, 1.75, 1.9] {
        let top = g.wavenumber(32).abs().powf(2.0 * s);
        for k in 1..=32usize {
            let xi = g.wavenumber(k).abs();
            for phase in [0.0, std::f64::consts::FRAC_PI_2] {
                if k == 32 && phase != 0.0 {
                    continue;
                }
                let u = Field::from_fn(g, |p| (xi * p[0] + phase).cos());
                let au = frac_laplacian(&u, s).unwrap();
                let lam = xi.powf(2.0 * s);
                eig = eig.max((au.dot(&u) / u.dot(&u) / lam - 1.0).abs());
                res = res.max(au.sub(&u.scaled(lam)).max_abs() / (top * u.max_abs()));
            }
        }
        let c = frac_laplacian(&Field::constant(g, 1.0), s).unwrap();
        res = res.max(c.max_abs() / top);
    }
    verdict(
        eig <= 1e-12 && res <= 1e-12,
        format!("eigenvalue error {eig:.1e}, residual {res:.1e} of the top symbol"),
    )
}

fn random_problem(rng: &mut impl Rng) -> ObstacleProblem {
    let g = GridSpec::new(1, 8.0, 16).unwrap();
    let s = rng.gen_range(1.05..1.95);
    let height = rng.gen_range(0.2..1.0);
    let reach = rng.gen_range(0.8..1.8);
    let center = [rng.gen_range(-0.5..0.5), 0.0];
    let obstacle = match rng.gen_range(0..3) {
        0 => Obstacle::Paraboloid { height, curvature: height / (reach * reach), floor: -1.0, center },
        1 => Obstacle::Hat { height, slope: height / reach, floor: -0.5, center },
        _ => Obstacle::Bump { height, radius: reach, floor: -0.3, center },
    };
    let psi = obstacle.sample(g);
    if rng.gen_bool(0.5) {
        ObstacleProblem::global(s, psi).unwrap()
    } else {
        let f = Forcing::Gaussian { amplitude: rng.gen_range(-0.5..0.5), width: 1.0 }.sample(g);
        ObstacleProblem::bounded(s, psi, f, 2.0).unwrap()
    }
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut gap = 0.0f64;
    for _ in 0..3 {
        let p = random_problem(&mut rng);
        let (u, _) = solve(&p, 1e-12, 200_000).unwrap();
        gap = gap.max(u.sub(&brute_force_qp(&p).unwrap()).max_abs());
    }
    verdict(gap <= 1e-8, format!("max gap {gap:.1e} over 3 problems"))
}

fn uniqueness() -> Verdict {
    let g = GridSpec::new(1, 16.0, 128).unwrap();
    let p = ObstacleProblem::bounded(1.25, paraboloid().sample(g), Field::zeros(g), 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sols = Vec::new();
    for _ in 0..2 {
        let start = random_admissible(&random_smooth(g, &mut rng, 8, 12).scaled(3.0), &p, &mut rng).unwrap();
        sols.push(solve_from(&p, &start, 1e-10, 200_000).unwrap().0);
    }
    let d = sols[0].sub(&sols[1]).max_abs();
    verdict(d <= 1e-7, format!("two starts differ by {d:.1e}"))
}

fn preset_problems() -> Vec<(ObstacleProblem, Field)> {
    let mut out = Vec::new();
    for nodes in [128, 256] {
        out.push(solved(paraboloid(), 1.25, nodes));
        out.push(solved(wedge(), 1.75, nodes));
    }
    let g = GridSpec::new(1, 16.0, 128).unwrap();
    let obstacle = Obstacle::Paraboloid { height: 1.0, curvature: 0.4, floor: -0.5, center: [0.0, 0.0] };
    let p = ObstacleProblem::global(1.25, obstacle.sample(g)).unwrap();
    let u = solve(&p, 1e-10, 200_000).unwrap().0;
    out.push((p, u));
    out
}

fn complementarity(cases: &[(ObstacleProblem, Field)]) -> Verdict {
    let (mut worst, mut stray) = (0.0f64, 0usize);
    for (p, u) in cases {
        let scale = p.scale();
        worst = worst.max(complementarity_residual(u, p).unwrap() / scale);
        let contact = contact_set(u, p, 1e-6 * scale).unwrap();
        let mu = extract_measure(u, p).unwrap();
        stray += mu.support(1e-6 * scale).iter().filter(|i| !contact.contains(i)).count();
    }
    verdict(
        worst <= 1e-6 && stray == 0,
        format!("residual {worst:.1e}·scale, {stray} charged nodes off contact, {} solves", cases.len()),
    )
}

fn variational_inequality(cases: &[(ObstacleProblem, Field)]) -> Verdict {
    let mut worst = f64::INFINITY;
    for (k, (p, u)) in cases.iter().enumerate() {
        worst = worst.min(variational_inequality_check(u, p, 200, k as u64).unwrap() / p.scale());
    }
    verdict(worst >= -1e-8, format!("min ⟨Au - f, v - u⟩ = {worst:.1e}·scale over 200 trials"))
}

fn kernel_suite() -> Verdict {
    let e = std::f64::consts::E;
    let hand = eval_phi_s(&[1.0, 0.0], 2, 1.5).unwrap() == -1.0
        && eval_phi_s(&[0.6, 0.0, 0.8], 3, 1.5).unwrap() == 0.0
        && (eval_phi_s(&[2.0], 1, 1.25).unwrap() - 2f64.powf(1.5)).abs() < 1e-15
        && eval_phi_s(&[e], 1, 1.5).unwrap().abs() < 1e-14
        && (eval_phi_s(&[3.0, 4.0], 2, 1.25).unwrap() - 5f64.powf(0.5)).abs() < 1e-15;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trace = true;
    let mut worst_c = 0.0f64;
    let mut min_lap: Vec<(usize, f64, f64)> = Vec::new();
    for (n, s) in [(1, 1.25), (1, 1.5), (1, 1.75), (2, 1.25), (2, 1.5), (2, 1.75), (3, 1.25), (3, 1.5), (3, 1.75)] {
        let k = kappa(n, s);
        let mut lo = f64::INFINITY;
        for _ in 0..1000 {
            let x: Vec<f64> = loop {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 1e-3 && r < 4.0 {
                    break x;
                }
            };
            trace &= eval_e_s(&x, 0.0, n, s).unwrap() == eval_phi_s(&x, n, s).unwrap();
            let (lap, hess) = eval_phi_s_derivatives(&x, n, s).unwrap();
            let neg = -k * lap;
            lo = lo.min(neg);
            if neg > 0.0 {
                for h in hess {
                    worst_c = worst_c.max((k * h).abs() / neg);
                }
            }
        }
        min_lap.push((n, s, lo));
    }
    let negative: Vec<String> = min_lap
        .iter()
        .filter(|m| m.2 < 0.0)
        .map(|(n, s, v)| format!("n={n} s={s}: {v:.2}"))
        .collect();
    verdict(
        hand && trace && worst_c.is_finite() && negative.is_empty(),
        format!(
            "hand values {}, trace {}, key-inequality C = {worst_c:.2}, min -Δ(κφ_s) < 0 at [{}]",
            if hand { "ok" } else { "WRONG" },
            if trace { "exact" } else { "INEXACT" },
            negative.join(", ")
        ),
    )
}

fn poisson_kernel() -> Verdict {
    let s = 1.25;
    let mut mass = 0.0f64;
    let mut res = Vec::new();
    for nodes in [128usize, 256] {
        let g = GridSpec::new(1, 8.0, nodes).unwrap();
        let top = g.len / 4.0;
        let levels = uniform_levels(top, nodes / 4);
        let cols: Vec<Field> = levels.iter().map(|&y| normalized_poisson(g, s, y).unwrap()).collect();
        for c in &cols {
            mass = mass.max((c.sum() - 1.0).abs());
        }
        let p = HalfSpaceField::from_levels(g, levels, cols, s).unwrap();
        res.push(bilap_b_residual(&p).unwrap().max_abs_between(top / 4.0, 3.0 * top / 4.0));
    }
    let g = GridSpec::new(1, 16.0, 512).unwrap();
    let a = poisson_to_fundamental(g, s, 1.0).unwrap().constant;
    let b = poisson_to_fundamental(g, s, 2.0).unwrap().constant;
    let drift = (a / b - 1.0).abs();
    let ratio = res[0] / res[1];
    verdict(
        mass <= 1e-10 && ratio >= 3.0 && drift <= 1e-2,
        format!("mass error {mass:.1e}, Δ_b² residual ratio {ratio:.2}, P-to-E constant drift {drift:.1e}"),
    )
}

fn dirichlet_to_neumann_check() -> Verdict {
    let s = 1.25;
    let g = GridSpec::new(1, 8.0, 256).unwrap();
    let levels = trace_levels(&g);
    let cs: Vec<f64> = (1..=5).map(|k| mode_constant(g, s, &levels, k).unwrap()).collect();
    let mean = cs.iter().sum::<f64>() / 5.0;
    let spread = cs.iter().fold(0.0f64, |m, c| m.max((c - mean).abs())) / mean;
    let mut errs = Vec::new();
    for nodes in [256usize, 512] {
        let g = GridSpec::new(1, 8.0, nodes).unwrap();
        let levels = trace_levels(&g);
        let c = mode_constant(g, s, &levels, 1).unwrap();
        let u = Obstacle::Bump { height: 1.0, radius: 2.0, floor: 0.0, center: [0.0, 0.0] }.sample(g);
        let t = dirichlet_to_neumann(&poisson_extend(&u, s, &levels).unwrap()).unwrap();
        let want = frac_laplacian(&u, s).unwrap().scaled(c);
        let window: Vec<usize> = (0..g.size()).filter(|&i| g.radius(i) <= g.len / 8.0).collect();
        let l2 = |f: &Field| window.iter().map(|&i| f.values[i].powi(2)).sum::<f64>().sqrt();
        errs.push(l2(&t.sub(&want)) / l2(&want));
    }
    verdict(
        spread <= 2e-2 && errs[0] <= 5e-2 && errs[0] / errs[1] >= 2.0,
        format!(
            "mode spread {spread:.1e}, bump error {:.1e} -> {:.1e} ({:.1}x)",
            errs[0],
            errs[1],
            errs[0] / errs[1]
        ),
    )
}

fn representations() -> Verdict {
    let mut global = Vec::new();
    for nodes in [128usize, 256] {
        let g = GridSpec::new(1, 16.0, nodes).unwrap();
        let obstacle = Obstacle::Paraboloid { height: 1.0, curvature: 0.4, floor: -0.5, center: [0.0, 0.0] };
        let p = ObstacleProblem::global(1.25, obstacle.sample(g)).unwrap();
        let u = solve(&p, 1e-10, 200_000).unwrap().0;
        global.push(global_representation_check(&u, &extract_measure(&u, &p).unwrap(), 1.25).unwrap().rel_error);
    }
    let (mut local, mut gap) = (Vec::new(), Vec::new());
    for nodes in [128usize, 256] {
        let (p, u) = solved(paraboloid(), 1.25, nodes);
        local.push(local_remainder(&u, &p, 0.74, 20, 2024).unwrap().residual / p.scale());
        gap.push(second_derivative_representation_check(&u, &p, 0.74).unwrap().laplacian);
    }
    let (gr, gg) = (global[0] / global[1], gap[0] / gap[1]);
    verdict(
        gr >= 1.5 && local[0] <= 5e-3 && local[1] < local[0] && gg >= 1.5,
        format!(
            "global decrease {gr:.2}x, local remainder {:.1e} -> {:.1e}·scale, second-derivative gap decrease {gg:.2}x",
            local[0], local[1]
        ),
    )
}

fn blob_measure(g: GridSpec, rng: &mut impl Rng) -> Vec<f64> {
    let q = g.len / 8.0;
    let blobs: Vec<([f64; 2], f64, f64)> = (0..3)
        .map(|_| {
            (
                [rng.gen_range(-0.5 * q..0.5 * q), rng.gen_range(-0.5 * q..0.5 * q)],
                rng.gen_range(0.1..0.2),
                rng.gen_range(0.5..1.5),
            )
        })
        .collect();
    (0..g.size())
        .map(|i| {
            let p = g.point(i);
            if p[0].abs() >= q || p[1].abs() >= q {
                return 0.0;
            }
            blobs
                .iter()
                .map(|(c, w, a)| a * (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (w * w)).exp())
                .sum()
        })
        .collect()
}

fn riesz_identity() -> Verdict {
    let g = GridSpec::new(2, 4.0, 64).unwrap();
    let beta = 2.0 * (1.25 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let reference = riesz_energy(g, &blob_measure(g, &mut rng), beta, 4).unwrap();
    let c = reference.lhs / reference.rhs;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let e = riesz_energy(g, &blob_measure(g, &mut rng), beta, 4).unwrap();
        worst = worst.max((e.lhs - c * e.rhs).abs() / e.lhs);
    }
    verdict(worst <= 3e-2, format!("β = {beta}, calibrated C = {c:.3}, worst relative error {worst:.1e} over 5 measures"))
}

fn regularity(outs: &[(String, PathBuf)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, out) in outs {
        let rows = study_rows(out);
        let ratio = |p: &str| row(&rows, p).report.ratio.unwrap_or(f64::NAN);
        match name.as_str() {
            "control" => {
                let c = row(&rows, "c11");
                ok &= !c.report.pass;
                notes.push(format!("control c11 {:.3}", ratio("c11")));
            }
            _ => {
                for p in ["c11", "h1plus_s", "weighted_h2", "weighted_h1_delta_b", "weighted_h3"] {
                    ok &= row(&rows, p).report.pass;
                }
                if name == "wedge" {
                    ok &= ratio("h2s_contrast") > 1.0;
                }
                notes.push(format!(
                    "{name} c11 {:.3} h1+s {:.3} 2s {:.3} weighted {:.3}/{:.3}/{:.3}",
                    ratio("c11"),
                    ratio("h1plus_s"),
                    ratio("h2s_contrast"),
                    ratio("weighted_h2"),
                    ratio("weighted_h1_delta_b"),
                    ratio("weighted_h3")
                ));
            }
        }
    }
    verdict(ok, notes.join("; "))
}

fn determinism(first: &Path, scratch: &Path) -> Verdict {
    let second = scratch.join("again");
    let _ = cmd_study(&preset("paraboloid"), &second);
    let mut same = true;
    for f in ["study.csv", "verify.csv"] {
        same &= std::fs::read(first.join(f)).unwrap() == std::fs::read(second.join(f)).unwrap();
    }
    verdict(same, "two studies with seed 2024 give byte-identical study.csv and verify.csv".into())
}

#[test]
fn acceptance() {
    let scratch = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    let studies = Instant::now();
    for name in ["paraboloid", "wedge", "control"] {
        let out = scratch.path().join(name);
        let _ = cmd_study(&preset(name), &out);
        outs.push((name.to_string(), out));
    }
    let studies = studies.elapsed().as_secs_f64();
    let cases = preset_problems();

    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "spectral exactness", Box::new(spectral_exactness)),
        (2, "oracle equivalence", Box::new(oracle_equivalence)),
        (3, "uniqueness", Box::new(uniqueness)),
        (4, "complementarity", Box::new(|| complementarity(&cases))),
        (5, "variational inequality", Box::new(|| variational_inequality(&cases))),
        (6, "kernel suite", Box::new(kernel_suite)),
        (7, "Poisson kernel", Box::new(poisson_kernel)),
        (8, "Dirichlet-to-Neumann", Box::new(dirichlet_to_neumann_check)),
        (9, "representations", Box::new(representations)),
        (10, "Riesz energy identity", Box::new(riesz_identity)),
        (11, "regularity probes", Box::new(|| regularity(&outs))),
        (12, "determinism", Box::new(|| determinism(&outs[0].1, scratch.path()))),
    ];
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "\nacceptance (studies took {studies:.1} s)").unwrap();
    let mut unexpected = Vec::new();
    for (id, name, check) in &criteria {
        let t = Instant::now();
        let v = check();
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == *id).map(|k| k.1);
        let tag = match (v.pass, known) {
            (true, None) => "PASS".to_string(),
            (false, Some(why)) => format!("FAIL (known: {why})"),
            (false, None) => {
                unexpected.push(*id);
                "FAIL".to_string()
            }
            (true, Some(_)) => {
                unexpected.push(*id);
                "PASS (listed as a known failure)".to_string()
            }
        };
        writeln!(
            stdout,
            "criterion {id:>2} {tag} {name}: {} [{:.1} s]",
            v.detail,
            t.elapsed().as_secs_f64()
        )
        .unwrap();
    }
    assert!(unexpected.is_empty(), "criteria with an unexpected verdict: {unexpected:?}");
}
