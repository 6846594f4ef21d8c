//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use widthlab::boxparam::{build_covering, star_norm_check, BoxParametrization, CoveringOptions, NormKind};
use widthlab::cli::studies::{manufactured, quadratic_phase, QUADRATIC_CONSTANT};
use widthlab::cli::{run_cli, EXIT_OK};
use widthlab::multiidx::{enumerate_indices, n_term_select, stechkin_tail_seq, MultiIndex};
use widthlab::pde::{
    bumps, coercivity_check, energy_norm, frechet_apply, load_preset, solve_diffusion, solve_semilinear, Coefficient,
    DiscreteField, Grid, NewtonOptions,
};
use widthlab::taylor::{
    audit_bounds, compute_taylor, dbar, rho_design, tail_bound, taylor_evaluate, AffineProblem, BoundSettings,
};
use widthlab::widths::{fit_rate, greedy_widths, sample_snapshots, singular_values, Sampler};

fn verdict(id: u32, pass: bool, detail: String) {
    println!("criterion {id:>2}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn bump_problem(n: usize, count: usize, decay: f64, scale: f64) -> AffineProblem {
    let g = Grid::new(1, n).unwrap();
    AffineProblem::new(
        Coefficient::constant(g, 1.0),
        bumps(g, count, decay, scale).unwrap(),
        load_preset("const1", g).unwrap(),
    )
    .unwrap()
}

#[test]
fn c01_closed_form_taylor_geometry() {
    let start = Instant::now();
    let g = Grid::new(1, 255).unwrap();
    let prob = AffineProblem::new(
        Coefficient::constant(g, 1.0),
        vec![Coefficient::constant(g, 0.5)],
        load_preset("const1", g).unwrap(),
    )
    .unwrap();
    let table = compute_taylor(&prob, &enumerate_indices(1, 10, |_| 1.0, 0.0).unwrap()).unwrap();
    let n0 = table.norm(&MultiIndex::zero()).unwrap();
    let worst = (1..=10u32)
        .map(|k| {
            let ratio = table.norm(&MultiIndex::from_dense(&[k])).unwrap() / n0;
            let exact = 0.5f64.powi(k as i32);
            (ratio - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        1,
        worst <= 1e-6 && elapsed < Duration::from_secs(1),
        format!("max relative deviation {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn c02_bound_chain() {
    let start = Instant::now();
    let prob = bump_problem(127, 8, 2.0, 0.1);
    let norms = prob.box_parametrization().norms().to_vec();
    let norms_ok = norms
        .iter()
        .enumerate()
        .all(|(j, &n)| (n - 0.1 * ((j + 1) as f64).powi(-2)).abs() <= 1e-15);
    let settings = BoundSettings::elliptic_margin(&prob).unwrap();
    let table = compute_taylor(&prob, &enumerate_indices(8, 6, |_| 1.0, 0.0).unwrap()).unwrap();
    let rows = audit_bounds(&table, &settings).unwrap();
    let violations = rows.iter().filter(|r| !r.ok).count();
    let elapsed = start.elapsed();
    verdict(
        2,
        norms_ok && rows.len() == 3003 && violations == 0 && elapsed < Duration::from_secs(30),
        format!("{} indices, {violations} violations, {elapsed:.2?}", rows.len()),
    );
}

#[test]
fn c03_rho_design_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=12);
        let star: Vec<f64> = (0..len).map(|_| rng.random_range(1e-4..1.0)).collect();
        let mut dense: Vec<u32> = (0..len).map(|_| rng.random_range(0..5)).collect();
        if dense.iter().all(|&v| v == 0) {
            dense[rng.random_range(0..len)] = 1;
        }
        let nu = MultiIndex::from_dense(&dense);
        let eps = rng.random_range(1e-3..3.0);
        let rho = rho_design(&nu, eps, &star).unwrap();
        let lhs: f64 = rho.iter().zip(&star).map(|(r, s)| (r - 1.0) * s).sum();
        worst = worst.max((lhs - 0.6 * eps).abs());
    }
    // a star-norm budget of exactly 2ε/10
    let eps = 0.7;
    let raw = [3.0, 1.0, 0.5, 0.25, 0.125];
    let total: f64 = raw.iter().sum();
    let star: Vec<f64> = raw.iter().map(|r| r * 0.2 * eps / total).collect();
    let l1: f64 = dbar(&star, eps).iter().sum();
    let dev = (l1 - std::f64::consts::E / 3.0).abs();
    verdict(
        3,
        worst <= 1e-12 && dev <= 1e-12,
        format!("max identity deviation {worst:.2e}, |‖d̄‖₁ − e/3| = {dev:.2e}"),
    );
}

#[test]
fn c04_partial_sums_within_tail_bound() {
    let prob = bump_problem(127, 8, 2.0, 0.1);
    let settings = BoundSettings::elliptic_margin(&prob).unwrap();
    let table = compute_taylor(&prob, &enumerate_indices(8, 6, |_| 1.0, 0.0).unwrap()).unwrap();
    let selection = n_term_select(&table.norm_pairs(), 60);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    let mut worst_err: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for _ in 0..20 {
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let exact = solve_diffusion(&prob.coefficient(&y), prob.load()).unwrap();
        let approx = taylor_evaluate(&table, &selection, &y).unwrap();
        let err = energy_norm(&exact.sub(&approx));
        let bound = tail_bound(&table, &selection, &y, &settings).unwrap();
        if err.is_nan() || err > bound + 1e-8 {
            violations += 1;
        }
        worst_err = worst_err.max(err);
        worst_bound = worst_bound.max(bound);
    }
    verdict(
        4,
        selection.len() == 60 && worst_bound.is_finite() && violations == 0,
        format!("{violations} violations, max error {worst_err:.2e}, max tail bound {worst_bound:.2e}"),
    );
}

#[test]
fn c05_rate_transfer() {
    let start = Instant::now();
    let (slope, r2) = single_threaded(|| {
        let prob = bump_problem(199, 16, 3.0, 0.5);
        let snap = sample_snapshots(&prob, Sampler::Uniform { seed: 505 }, 500).unwrap();
        let greedy = greedy_widths(&snap, 40).unwrap();
        let fit = fit_rate(&greedy.max_errors, 5, 40).unwrap();
        (fit.slope, fit.r2)
    });
    let elapsed = start.elapsed();
    verdict(
        5,
        slope <= -1.75 && elapsed < Duration::from_secs(300),
        format!("greedy slope {slope:.3} (r² {r2:.3}) vs required −1.75, {elapsed:.2?} on one thread"),
    );
}

#[test]
fn c06_degenerate_rank() {
    let g = Grid::new(1, 127).unwrap();
    let prob = AffineProblem::new(
        Coefficient::constant(g, 1.0),
        vec![Coefficient::constant(g, 0.5)],
        load_preset("const1", g).unwrap(),
    )
    .unwrap();
    let snap = sample_snapshots(&prob, Sampler::Uniform { seed: 606 }, 60).unwrap();
    let s = singular_values(&snap);
    let ratio = s[1] / s[0];
    verdict(6, ratio <= 1e-10, format!("σ₂/σ₁ = {ratio:.2e}"));
}

fn random_smooth(g: Grid, rng: &mut ChaCha8Rng, base: f64, amp: f64) -> Coefficient {
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    Coefficient::from_fn(g, move |x| {
        let s: f64 = c
            .iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x[0] + phase).sin())
            .sum();
        base + amp * s / 4.0
    })
}

#[test]
fn c07_frechet_consistency() {
    let g = Grid::new(1, 127).unwrap();
    let f = load_preset("const1", g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut ratios = Vec::new();
    for _ in 0..20 {
        let a = random_smooth(g, &mut rng, 1.5, 1.0);
        let w = random_smooth(g, &mut rng, 0.0, 1.0);
        let ua = solve_diffusion(&a, &f).unwrap();
        let d = frechet_apply(&a, &ua, &w).unwrap();
        let fd_err = |t: f64| {
            let up = solve_diffusion(&Coefficient::affine(&a, std::slice::from_ref(&w), &[t]), &f).unwrap();
            let dn = solve_diffusion(&Coefficient::affine(&a, std::slice::from_ref(&w), &[-t]), &f).unwrap();
            let fd = DiscreteField::new(
                g,
                up.values().iter().zip(dn.values()).map(|(p, m)| (p - m) / (2.0 * t)).collect(),
            )
            .unwrap();
            energy_norm(&fd.sub(&d))
        };
        ratios.push(fd_err(0.2) / fd_err(0.1));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    verdict(
        7,
        ratios.iter().all(|r| (3.0..=5.0).contains(r)),
        format!("error reduction factors in [{lo:.3}, {hi:.3}] over 20 pairs"),
    );
}

#[test]
fn c08_semilinear() {
    let opts = NewtonOptions::default();
    let mut errors = Vec::new();
    let mut quadratic = true;
    for n in [63, 127, 255] {
        let g = Grid::new(1, n).unwrap();
        let (exact, f) = manufactured(g);
        let sol = solve_semilinear(&Coefficient::constant(g, 0.0), &f, opts, None).unwrap();
        errors.push(sol.u.sub(&exact).sup_norm());
        quadratic &= sol.residuals.len() >= 2 && quadratic_phase(&sol.residuals, QUADRATIC_CONSTANT);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));

    let g = Grid::new(1, 127).unwrap();
    let f = load_preset("sinpi", g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut min_margin = f64::INFINITY;
    let mut coercive = true;
    for k in 0..10 {
        let base = rng.random_range(-1.0..1.0);
        let a = random_smooth(g, &mut rng, base, 2.0);
        let u = solve_semilinear(&a, &f, opts, None).unwrap().u;
        let rep = coercivity_check(&a, &u, 900 + k).unwrap();
        coercive &= rep.pass && rep.estimate >= rep.threshold - 1e-8;
        min_margin = min_margin.min(rep.estimate - rep.threshold);
    }
    verdict(
        8,
        order_ok && quadratic && coercive,
        format!(
            "ratios {:.3}, {:.3}; quadratic phase {quadratic}; coercivity min margin {min_margin:.2e}",
            ratios[0], ratios[1]
        ),
    );
}

/// Independent net: centres of the `η√2` lattice cells meeting the unit
/// disc, pulled onto the circle when outside.
fn net_oracle(eta: f64) -> Vec<Complex64> {
    let s = eta * 2f64.sqrt();
    let k = (2.0 / s) as i64 + 3;
    let mut out = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            let nearest_x = 0f64.clamp((a as f64 - 0.5) * s, (a as f64 + 0.5) * s);
            let nearest_y = 0f64.clamp((b as f64 - 0.5) * s, (b as f64 + 0.5) * s);
            if nearest_x.hypot(nearest_y) <= 1.0 {
                let c = Complex64::new(a as f64 * s, b as f64 * s);
                out.push(if c.norm() > 1.0 { c / c.norm() } else { c });
            }
        }
    }
    out
}

#[test]
fn c09_covering() {
    let g = Grid::new(1, 31).unwrap();
    let dirs = bumps(g, 2, 0.0, 0.1).unwrap();
    let bx = BoxParametrization::new(
        vec![1.0; g.num_edges()],
        dirs.iter().map(|d| d.values().to_vec()).collect(),
        NormKind::Sup,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let points: Vec<Vec<Complex64>> = (0..1000)
        .map(|_| {
            (0..2)
                .map(|_| Complex64::from_polar(rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    let cov = build_covering(&bx, 1.0, &points, CoveringOptions::default()).unwrap();

    let net = net_oracle(0.5);
    let eta = 0.5 * (1.0 + 1e-12);
    let mut kept = HashSet::new();
    for z in &points {
        for (i, p) in net.iter().enumerate() {
            for (k, q) in net.iter().enumerate() {
                if (z[0] - p).norm() <= eta && (z[1] - q).norm() <= eta {
                    kept.insert((i, k));
                }
            }
        }
    }
    let full = build_covering(
        &bx,
        1.0,
        &net.iter().flat_map(|&p| net.iter().map(move |&q| vec![p, q])).collect::<Vec<_>>(),
        CoveringOptions::default(),
    )
    .unwrap();
    let located = points.iter().filter(|z| cov.locate(z).is_some()).count();
    let (star_ok, margin) = star_norm_check(&cov);
    let pass = cov.j == 2
        && (cov.eta - 0.5).abs() <= 1e-15
        && cov.num_centers() == kept.len()
        && full.num_centers() == net.len() * net.len()
        && located == 1000
        && star_ok
        && cov.check_invariants().all();
    verdict(
        9,
        pass,
        format!(
            "J = {}, η = {}, M = {} (oracle {}), full net {} (oracle {}), located {located}/1000, star margin {margin:.3}",
            cov.j,
            cov.eta,
            cov.num_centers(),
            kept.len(),
            full.num_centers(),
            net.len() * net.len()
        ),
    );
}

#[test]
fn c10_stechkin() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut checks = 0;
    let mut violations = 0;
    for p in [0.3, 0.5, 0.8] {
        for _ in 0..1000 {
            let len = rng.random_range(1..=200);
            let shape = rng.random_range(0..3);
            let seq: Vec<f64> = (0..len)
                .map(|k| match shape {
                    0 => rng.random::<f64>(),
                    1 => ((k + 1) as f64).powf(-rng.random_range(0.5..4.0)),
                    _ => {
                        if rng.random_bool(0.2) {
                            rng.random_range(0.0..10.0)
                        } else {
                            0.0
                        }
                    }
                })
                .collect();
            for _ in 0..5 {
                let n = rng.random_range(1..=len + 5);
                let t = stechkin_tail_seq(&seq, p, n).unwrap();
                // independent tail: drop the n largest
                let mut sorted = seq.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let tail: f64 = sorted.iter().skip(n).sum();
                let lp = sorted.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
                let bound = lp * (n as f64).powf(1.0 - 1.0 / p);
                checks += 1;
                if !t.holds() || tail > bound * (1.0 + 1e-12) || (t.tail_sum - tail).abs() > 1e-12 * (1.0 + tail) {
                    violations += 1;
                }
            }
        }
    }
    verdict(10, violations == 0, format!("{checks} checks, {violations} violations"));
}

#[test]
fn c11_deterministic_manifests() {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&configs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    names.sort();
    let tmp = tempfile::tempdir().unwrap();
    let mut detail = Vec::new();
    let mut pass = !names.is_empty();
    for cfg in &names {
        let stem = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        let mut manifests = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{stem}-{run}"));
            let code = run_cli([
                "widthlab".into(),
                "run".into(),
                "--config".into(),
                cfg.clone().into_os_string(),
                "--out".into(),
                out.clone().into_os_string(),
            ]);
            pass &= code == EXIT_OK;
            manifests.push(std::fs::read(out.join("manifest")).unwrap_or_default());
        }
        let same = !manifests[0].is_empty() && manifests[0] == manifests[1];
        pass &= same;
        detail.push(format!("{stem}: {}", if same { "identical" } else { "differs" }));
    }
    verdict(11, pass, detail.join(", "));
}
