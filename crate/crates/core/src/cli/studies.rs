//! Study pipelines behind the subcommands.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::artifacts::Artifacts;
use super::config::{
    BoundsConfig, ConfigError, CoverConfig, DirectionsConfig, IndexStrategy, LoadedConfig, ProblemKind,
    SamplerKind, SemilinearConfig, TaylorConfig, WidthsConfig,
};
use crate::boxparam::{build_covering, BoxParametrization, CoveringOptions, NormKind};
use crate::multiidx::{enumerate_indices, n_term_select, rank_by_norm, IndexSet};
use crate::pde::io::read_array;
use crate::pde::{
    bumps, coercivity_check, energy_norm, load_preset, solve_semilinear, Coefficient, DiscreteField, Grid,
    NewtonOptions,
};
use crate::taylor::{
    audit_bounds, compute_taylor, summability_check, tail_bound, taylor_evaluate, write_bound_csv,
    AffineProblem, BoundSettings,
};
use crate::widths::{
    rate_transfer_verdict, sample_snapshots, verdict_from_slopes, ParametricProblem, Sampler, SemilinearFamily,
    WidthError, WidthReport,
};

#[derive(Debug)]
pub enum StudyError {
    Config(ConfigError),
    Domain(String),
}

impl std::fmt::Display for StudyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyError::Config(e) => write!(f, "{e}"),
            StudyError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for StudyError {
    fn from(e: ConfigError) -> Self {
        StudyError::Config(e)
    }
}

fn domain<E: std::fmt::Display>(e: E) -> StudyError {
    StudyError::Domain(e.to_string())
}

/// Study name and whether all of its checks passed.
pub type StudyOutcome = Result<bool, StudyError>;

pub struct Context<'a> {
    pub loaded: &'a LoadedConfig,
    pub seed: Option<u64>,
    pub art: &'a Artifacts,
}

impl Context<'_> {
    fn seed_for(&self, study: &str, offset: u64) -> Result<u64, StudyError> {
        self.seed.map(|s| s.wrapping_add(offset)).ok_or_else(|| {
            self.loaded
                .error_at(None, "seed", format!("seed is required for the randomized {study} study"))
                .into()
        })
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), StudyError> {
        self.art.write(rel, bytes).map(|_| ()).map_err(domain)
    }

    fn write_summary<T: Serialize>(&self, study: &str, summary: &T) -> Result<(), StudyError> {
        let text = toml::to_string(summary).map_err(domain)?;
        self.write(&format!("{study}/summary.toml"), text.as_bytes())
    }

    fn csv<F>(&self, rel: &str, fill: F) -> Result<(), StudyError>
    where
        F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<(), csv::Error>,
    {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            fill(&mut w).map_err(domain)?;
            w.flush().map_err(domain)?;
        }
        self.write(rel, &buf)
    }
}

struct Parts {
    mean: Coefficient,
    directions: Vec<Coefficient>,
    load: DiscreteField,
}

fn build_parts(loaded: &LoadedConfig) -> Result<Parts, StudyError> {
    let p = &loaded.config.problem;
    let grid = Grid::new(p.dim, p.n).map_err(domain)?;
    let load = match p.load.as_str() {
        "const1" | "sinpi" => load_preset(&p.load, grid).map_err(domain)?,
        path => {
            let file = read_array(&loaded.resolve(path))
                .map_err(|e| loaded.error_at(Some("problem"), "load", format!("load file {path}: {e}")))?;
            let f = file.into_field().map_err(domain)?;
            if f.grid() != grid {
                return Err(loaded.error_at(Some("problem"), "load", "load file grid differs from problem grid").into());
            }
            f
        }
    };
    let directions = match &p.directions {
        DirectionsConfig::Bumps { count, decay, scale } => bumps(grid, *count, *decay, *scale).map_err(domain)?,
        DirectionsConfig::Files { paths } => paths
            .iter()
            .map(|path| {
                let c = read_array(&loaded.resolve(path))
                    .and_then(|f| f.into_coefficient())
                    .map_err(|e| loaded.error_at(Some("problem.directions"), "paths", format!("{path}: {e}")))?;
                if c.grid() != grid {
                    return Err(loaded
                        .error_at(Some("problem.directions"), "paths", format!("{path}: grid differs from problem grid"))
                        .into());
                }
                Ok(c)
            })
            .collect::<Result<_, StudyError>>()?,
    };
    Ok(Parts {
        mean: Coefficient::constant(grid, p.mean),
        directions,
        load,
    })
}

fn affine_problem(ctx: &Context, study: &str) -> Result<AffineProblem, StudyError> {
    if ctx.loaded.config.problem.kind != ProblemKind::Affine {
        return Err(ctx
            .loaded
            .error_at(Some("problem"), "kind", format!("the {study} study needs kind = \"affine\""))
            .into());
    }
    let parts = build_parts(ctx.loaded)?;
    AffineProblem::new(parts.mean, parts.directions, parts.load).map_err(domain)
}

fn uniform_points(seed: u64, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

fn simplex_size(dim: usize, degree: u32) -> f64 {
    (1..=degree as usize).fold(1.0, |acc, k| acc * (dim + k) as f64 / k as f64)
}

fn total_degree_set(dim: usize, degree: u32, max_terms: usize) -> Result<IndexSet, StudyError> {
    let predicted = simplex_size(dim, degree);
    if predicted > max_terms as f64 {
        return Err(StudyError::Domain(format!(
            "index set of {predicted:.0} terms exceeds max_terms = {max_terms}"
        )));
    }
    enumerate_indices(dim.max(1), degree, |_| 1.0, 0.0).map_err(domain)
}

#[derive(Serialize)]
struct TaylorSummary {
    strategy: String,
    terms: usize,
    n_terms: usize,
    max_degree: u32,
    epsilon: f64,
    b: f64,
    dbar_l1: f64,
    summability_condition: bool,
    lp_quasi_norm: f64,
    p: f64,
    samples: usize,
    max_error: f64,
    max_tail_bound: f64,
    violations: usize,
    pass: bool,
}

pub fn taylor(ctx: &Context, cfg: &TaylorConfig) -> StudyOutcome {
    let prob = affine_problem(ctx, "taylor")?;
    let settings = BoundSettings::elliptic_margin(&prob).map_err(domain)?;
    let dim = prob.active();
    let index = match cfg.strategy {
        IndexStrategy::TotalDegree => total_degree_set(dim, cfg.max_degree, cfg.max_terms)?,
        IndexStrategy::Anisotropic => {
            let norms = prob.box_parametrization().norms();
            let top = norms.iter().copied().fold(0.0, f64::max);
            let ratios: Vec<f64> = norms.iter().map(|n| if top > 0.0 { n / top } else { 0.0 }).collect();
            let set = enumerate_indices(
                dim.max(1),
                cfg.max_degree,
                |nu| nu.entries().iter().map(|&(j, k)| ratios.get(j - 1).copied().unwrap_or(0.0).powi(k as i32)).product(),
                cfg.threshold,
            )
            .map_err(domain)?;
            if set.len() > cfg.max_terms {
                return Err(StudyError::Domain(format!(
                    "index set of {} terms exceeds max_terms = {}",
                    set.len(),
                    cfg.max_terms
                )));
            }
            set
        }
    };
    let table = compute_taylor(&prob, &index).map_err(domain)?;
    let pairs = table.norm_pairs();
    let order = rank_by_norm(&pairs);
    let mut rank = vec![0usize; pairs.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r + 1;
    }
    ctx.csv("taylor/norms.csv", |w| {
        w.write_record(["nu", "degree", "norm", "rank"])?;
        for (k, (nu, n)) in pairs.iter().enumerate() {
            w.write_record([nu.to_string(), nu.total_degree().to_string(), format!("{n:e}"), rank[k].to_string()])?;
        }
        Ok(())
    })?;
    let mut index_text = Vec::new();
    table.write_index(&mut index_text).map_err(domain)?;
    ctx.write("taylor/index.txt", &index_text)?;
    if cfg.save_fields {
        let mut buf = Vec::new();
        table.write_archive(&mut buf).map_err(domain)?;
        ctx.write("taylor/coefficients.hwa", &buf)?;
    }

    let n_terms = cfg.n_terms.min(table.len());
    let selection = n_term_select(&pairs, n_terms);
    let points = if cfg.samples > 0 {
        uniform_points(ctx.seed_for("taylor", 1)?, dim, cfg.samples)
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for y in &points {
        let exact = prob.solve(y).map_err(domain)?;
        let approx = taylor_evaluate(&table, &selection, y).map_err(domain)?;
        let err = energy_norm(&exact.sub(&approx));
        let bound = tail_bound(&table, &selection, y, &settings).map_err(domain)?;
        rows.push((err, bound, err > bound + 1e-8));
    }
    ctx.csv("taylor/partial_sums.csv", |w| {
        w.write_record(["sample", "error", "tail_bound", "violation"])?;
        for (i, (e, b, v)) in rows.iter().enumerate() {
            w.write_record([i.to_string(), format!("{e:e}"), format!("{b:e}"), (*v as u8).to_string()])?;
        }
        Ok(())
    })?;
    let summ = summability_check(&settings.star_norms, settings.eps, cfg.p).map_err(domain)?;
    let violations = rows.iter().filter(|r| r.2).count();
    let summary = TaylorSummary {
        strategy: format!("{:?}", cfg.strategy),
        terms: table.len(),
        n_terms,
        max_degree: table.index().max_degree(),
        epsilon: settings.eps,
        b: settings.b,
        dbar_l1: summ.dbar_l1,
        summability_condition: summ.condition_ok,
        lp_quasi_norm: summ.lp_quasi_norm,
        p: cfg.p,
        samples: rows.len(),
        max_error: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_tail_bound: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        violations,
        pass: violations == 0,
    };
    ctx.write_summary("taylor", &summary)?;
    Ok(summary.pass)
}

#[derive(Serialize)]
struct BoundsSummary {
    epsilon_policy: String,
    epsilon: f64,
    b: f64,
    ellipticity_floor: f64,
    dbar_l1: f64,
    max_degree: u32,
    rows: usize,
    violations: usize,
    pass: bool,
}

pub fn bounds(ctx: &Context, cfg: &BoundsConfig) -> StudyOutcome {
    let prob = affine_problem(ctx, "bounds")?;
    let settings = BoundSettings::elliptic_margin(&prob).map_err(domain)?;
    let index = total_degree_set(prob.active(), cfg.max_degree, cfg.max_terms)?;
    let table = compute_taylor(&prob, &index).map_err(domain)?;
    let rows = audit_bounds(&table, &settings).map_err(domain)?;
    let mut buf = Vec::new();
    write_bound_csv(&rows, &mut buf).map_err(domain)?;
    ctx.write("bounds/bounds.csv", &buf)?;
    let violations = rows.iter().filter(|r| !r.ok).count();
    let summary = BoundsSummary {
        epsilon_policy: format!("{:?}", cfg.epsilon),
        epsilon: settings.eps,
        b: settings.b,
        ellipticity_floor: prob.floor(),
        dbar_l1: settings.dbar().iter().sum(),
        max_degree: cfg.max_degree,
        rows: rows.len(),
        violations,
        pass: violations == 0,
    };
    ctx.write_summary("bounds", &summary)?;
    Ok(summary.pass)
}

#[derive(Serialize)]
struct FitSummary {
    slope: Option<f64>,
    intercept: Option<f64>,
    r2: Option<f64>,
    error: Option<String>,
}

impl FitSummary {
    fn from(fit: &Result<crate::widths::RateFit, String>) -> Self {
        match fit {
            Ok(f) => Self {
                slope: Some(f.slope),
                intercept: Some(f.intercept),
                r2: Some(f.r2),
                error: None,
            },
            Err(e) => Self {
                slope: None,
                intercept: None,
                r2: None,
                error: Some(e.clone()),
            },
        }
    }
}

#[derive(Serialize)]
struct VerdictSummary {
    s_input: f64,
    delta: f64,
    t_required: f64,
    t_observed: Option<f64>,
    greedy_slope: Option<f64>,
    svd_slope: Option<f64>,
    finite_rank_at: Option<usize>,
    pass: bool,
}

#[derive(Serialize)]
struct WidthsSummary {
    kind: String,
    sampler: String,
    m: usize,
    n_max: usize,
    window: [usize; 2],
    invariant_defect: f64,
    invariants_ok: bool,
    svd_fit: FitSummary,
    greedy_fit: FitSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<VerdictSummary>,
    pass: bool,
}

pub fn widths(ctx: &Context, cfg: &WidthsConfig) -> StudyOutcome {
    let loaded = ctx.loaded;
    let sampler = match cfg.sampler {
        SamplerKind::Uniform => Sampler::Uniform {
            seed: ctx.seed_for("widths", 2)?,
        },
        SamplerKind::Tensor => Sampler::TensorGrid,
        SamplerKind::Halton => Sampler::Halton,
    };
    let window = loaded.window(cfg);
    let n_max = cfg.n_max.unwrap_or(window.1);
    let kind = loaded.config.problem.kind;
    let snap = match kind {
        ProblemKind::Affine => {
            let prob = affine_problem(ctx, "widths")?;
            sample(&prob, sampler, cfg.m)?
        }
        ProblemKind::Semilinear => {
            let parts = build_parts(loaded)?;
            let family = SemilinearFamily {
                mean: parts.mean,
                directions: parts.directions,
                load: parts.load,
                newton: NewtonOptions::default(),
            };
            sample(&family, sampler, cfg.m)?
        }
    };
    if cfg.save_snapshots {
        let mut buf = Vec::new();
        snap.write_archive(&mut buf).map_err(domain)?;
        ctx.write("widths/snapshots.hws", &buf)?;
    }
    let report = WidthReport::build(&snap, n_max, window).map_err(domain)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(domain)?;
    ctx.write("widths/widths.csv", &buf)?;

    let s = cfg.s.or(match &loaded.config.problem.directions {
        DirectionsConfig::Bumps { decay, .. } => Some(*decay),
        DirectionsConfig::Files { .. } => None,
    });
    let verdict = s.map(|s| match rate_transfer_verdict(s, &report, cfg.delta) {
        Ok(v) => VerdictSummary {
            s_input: v.s_input,
            delta: v.delta,
            t_required: v.t_required,
            t_observed: Some(v.t_observed),
            greedy_slope: Some(v.greedy_slope),
            svd_slope: v.svd_slope,
            finite_rank_at: None,
            pass: v.pass,
        },
        Err(_) => {
            // widths vanish from some n on: every algebraic rate holds
            let zero = report.greedy_max.iter().position(|&d| d <= 0.0);
            let v = verdict_from_slopes(s, f64::NEG_INFINITY, None, cfg.delta);
            VerdictSummary {
                s_input: s,
                delta: cfg.delta,
                t_required: v.t_required,
                t_observed: None,
                greedy_slope: None,
                svd_slope: report.svd_fit.as_ref().ok().map(|f| f.slope),
                finite_rank_at: zero,
                pass: zero.is_some(),
            }
        }
    });
    let invariants_ok = report.invariants_hold();
    let pass = invariants_ok && verdict.as_ref().is_none_or(|v| v.pass);
    let summary = WidthsSummary {
        kind: format!("{kind:?}").to_lowercase(),
        sampler: format!("{:?}", cfg.sampler).to_lowercase(),
        m: cfg.m,
        n_max,
        window: [window.0, window.1],
        invariant_defect: report.invariant_defect(),
        invariants_ok,
        svd_fit: FitSummary::from(&report.svd_fit),
        greedy_fit: FitSummary::from(&report.greedy_fit),
        verdict,
        pass,
    };
    ctx.write_summary("widths", &summary)?;
    Ok(pass)
}

fn sample<P: ParametricProblem>(prob: &P, sampler: Sampler, m: usize) -> Result<crate::widths::SnapshotSet, StudyError> {
    sample_snapshots(prob, sampler, m).map_err(|e: WidthError| domain(e))
}

#[derive(Serialize)]
struct CoverSummary {
    epsilon: f64,
    j: usize,
    eta: f64,
    centers: usize,
    samples: usize,
    located: usize,
    tail_ok: bool,
    eta_ok: bool,
    star_norm_ok: bool,
    pass: bool,
}

pub fn cover(ctx: &Context, cfg: &CoverConfig) -> StudyOutcome {
    let parts = build_parts(ctx.loaded)?;
    let bx = BoxParametrization::new(
        parts.mean.values().to_vec(),
        parts.directions.iter().map(|d| d.values().to_vec()).collect(),
        NormKind::Sup,
    )
    .map_err(domain)?;
    let points: Vec<Vec<Complex64>> = if cfg.samples > 0 {
        uniform_points(ctx.seed_for("cover", 3)?, parts.directions.len(), cfg.samples)
            .into_iter()
            .map(|y| y.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
            .collect()
    } else {
        Vec::new()
    };
    let opts = CoveringOptions {
        j_cap: cfg.j_cap,
        max_centers: Some(cfg.max_centers),
        eta_override: None,
    };
    let cov = build_covering(&bx, cfg.epsilon, &points, opts).map_err(|e| StudyError::Domain(format!("cover refused: {e}")))?;
    let located = points.iter().filter(|z| cov.locate(z).is_some()).count();
    let inv = cov.check_invariants();
    ctx.write("cover/report.txt", cov.report().as_bytes())?;
    let mut buf = Vec::new();
    cov.write_centers(&bx, &mut buf).map_err(domain)?;
    ctx.write("cover/centers.hwc", &buf)?;
    let pass = inv.all() && located == points.len();
    let summary = CoverSummary {
        epsilon: cov.epsilon,
        j: cov.j,
        eta: cov.eta,
        centers: cov.num_centers(),
        samples: points.len(),
        located,
        tail_ok: inv.tail_ok,
        eta_ok: inv.eta_ok,
        star_norm_ok: inv.star_ok,
        pass,
    };
    ctx.write_summary("cover", &summary)?;
    Ok(pass)
}

/// Manufactured pair for `u³ − Δu = f` with `u = Π_i sin(π x_i)`.
pub fn manufactured(grid: Grid) -> (DiscreteField, DiscreteField) {
    let m = grid.dim();
    let u = |x: [f64; 2]| (0..m).map(|i| (PI * x[i]).sin()).product::<f64>();
    let exact = DiscreteField::from_fn(grid, u);
    let f = DiscreteField::from_fn(grid, |x| {
        let v = u(x);
        v * v * v + m as f64 * PI * PI * v
    });
    (exact, f)
}

/// `r_{k+1} ≤ C r_k²` whenever `r_k ≤ 10⁻²`, skipping steps that land
/// below `10⁻¹²` (round-off floor).
pub fn quadratic_phase(residuals: &[f64], c: f64) -> bool {
    residuals
        .windows(2)
        .filter(|w| w[0] <= 1e-2 && w[1] >= 1e-12)
        .all(|w| w[1] <= c * w[0] * w[0])
}

pub const QUADRATIC_CONSTANT: f64 = 10.0;

#[derive(Serialize)]
struct SemilinearSummary {
    grids: Vec<usize>,
    errors: Vec<f64>,
    ratios: Vec<f64>,
    order_ok: bool,
    newton_iterations: usize,
    quadratic_phase_ok: bool,
    coercivity_samples: usize,
    coercivity_min_margin: f64,
    coercivity_ok: bool,
    pass: bool,
}

pub fn semilinear(ctx: &Context, cfg: &SemilinearConfig) -> StudyOutcome {
    let dim = ctx.loaded.config.problem.dim;
    let opts = NewtonOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let mut errors = Vec::new();
    let mut history = Vec::new();
    for &n in &cfg.grids {
        let g = Grid::new(dim, n).map_err(domain)?;
        let (exact, f) = manufactured(g);
        let sol = solve_semilinear(&Coefficient::constant(g, 0.0), &f, opts, None).map_err(domain)?;
        errors.push(sol.u.sub(&exact).sup_norm());
        history = sol.residuals;
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    ctx.csv("semilinear/convergence.csv", |w| {
        w.write_record(["n", "h", "error", "ratio"])?;
        for (k, (&n, e)) in cfg.grids.iter().zip(&errors).enumerate() {
            let ratio = if k == 0 { String::new() } else { format!("{:e}", ratios[k - 1]) };
            w.write_record([n.to_string(), format!("{:e}", 1.0 / (n + 1) as f64), format!("{e:e}"), ratio])?;
        }
        Ok(())
    })?;
    ctx.csv("semilinear/newton.csv", |w| {
        w.write_record(["iteration", "residual"])?;
        for (k, r) in history.iter().enumerate() {
            w.write_record([k.to_string(), format!("{r:e}")])?;
        }
        Ok(())
    })?;

    let mut coercivity = Vec::new();
    if cfg.coercivity_samples > 0 {
        let parts = build_parts(ctx.loaded)?;
        let seed = ctx.seed_for("semilinear", 4)?;
        for (k, y) in uniform_points(seed, parts.directions.len(), cfg.coercivity_samples)
            .iter()
            .enumerate()
        {
            let a = Coefficient::affine(&parts.mean, &parts.directions, y);
            let u = solve_semilinear(&a, &parts.load, opts, None).map_err(domain)?.u;
            coercivity.push(coercivity_check(&a, &u, seed.wrapping_add(100 + k as u64)).map_err(domain)?);
        }
    }
    ctx.csv("semilinear/coercivity.csv", |w| {
        w.write_record(["sample", "estimate", "threshold", "pass"])?;
        for (k, c) in coercivity.iter().enumerate() {
            w.write_record([k.to_string(), format!("{:e}", c.estimate), format!("{:e}", c.threshold), (c.pass as u8).to_string()])?;
        }
        Ok(())
    })?;
    let order_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let quadratic_phase_ok = quadratic_phase(&history, QUADRATIC_CONSTANT);
    let coercivity_ok = coercivity.iter().all(|c| c.pass);
    let pass = order_ok && quadratic_phase_ok && coercivity_ok;
    let summary = SemilinearSummary {
        grids: cfg.grids.clone(),
        errors,
        ratios,
        order_ok,
        newton_iterations: history.len().saturating_sub(1),
        quadratic_phase_ok,
        coercivity_samples: coercivity.len(),
        coercivity_min_margin: coercivity.iter().map(|c| c.estimate - c.threshold).fold(f64::INFINITY, f64::min),
        coercivity_ok,
        pass,
    };
    ctx.write_summary("semilinear", &summary)?;
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_counts() {
        assert_eq!(simplex_size(2, 2), 6.0);
        assert_eq!(simplex_size(8, 6), 3003.0);
    }

    #[test]
    fn quadratic_phase_rule() {
        assert!(quadratic_phase(&[1.0, 1e-2, 1e-4, 1e-8, 1e-15], 10.0));
        assert!(!quadratic_phase(&[1e-2, 5e-3, 1e-6], 10.0));
        assert!(quadratic_phase(&[1e-3, 1e-13], 10.0));
    }

    #[test]
    fn manufactured_pair_is_consistent() {
        let g = Grid::new(2, 15).unwrap();
        let (u, f) = manufactured(g);
        assert!((u.sup_norm() - 1.0).abs() < 0.05);
        assert!(f.sup_norm() > 2.0 * PI * PI * 0.9);
    }
}
