//! Snapshot-based width estimates: rms SVD surrogate, strong greedy, log-log
//! rate fits and the rate-transfer verdict.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::pde::io::ArrayFile;
use crate::pde::{energy_coordinates, solve_semilinear, Coefficient, DiscreteField, Grid, NewtonOptions, PdeError};
use crate::taylor::AffineProblem;

#[derive(Debug, Error)]
pub enum WidthError {
    #[error("need at least 2 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("n_max = {n_max} exceeds the snapshot count {m}")]
    TooManySteps { n_max: usize, m: usize },
    #[error("invalid fit window [{0}, {1}]")]
    Window(usize, usize),
    #[error("nonpositive entry at n = {first_zero}: sequence has exact finite rank")]
    NonPositive { first_zero: usize },
    #[error("no fitted greedy rate available")]
    NoRate,
    #[error("snapshot archive: {0}")]
    Format(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameter-to-solution map sampled on the real cube.
pub trait ParametricProblem: Sync {
    fn grid(&self) -> Grid;
    fn parameter_dim(&self) -> usize;
    fn solve_at(&self, y: &[f64]) -> Result<DiscreteField, PdeError>;
}

impl ParametricProblem for AffineProblem {
    fn grid(&self) -> Grid {
        AffineProblem::grid(self)
    }

    fn parameter_dim(&self) -> usize {
        self.active()
    }

    fn solve_at(&self, y: &[f64]) -> Result<DiscreteField, PdeError> {
        self.solve(y)
    }
}

/// `u³ − div(exp(a(y))∇u) = f` with `a(y) = ā + Σ_j y_j ψ_j`.
#[derive(Debug, Clone)]
pub struct SemilinearFamily {
    pub mean: Coefficient,
    pub directions: Vec<Coefficient>,
    pub load: DiscreteField,
    pub newton: NewtonOptions,
}

impl ParametricProblem for SemilinearFamily {
    fn grid(&self) -> Grid {
        self.mean.grid()
    }

    fn parameter_dim(&self) -> usize {
        self.directions.len()
    }

    fn solve_at(&self, y: &[f64]) -> Result<DiscreteField, PdeError> {
        let a = Coefficient::affine(&self.mean, &self.directions, y);
        Ok(solve_semilinear(&a, &self.load, self.newton, None)?.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Uniform { seed: u64 },
    /// `q = ⌈m^{1/J}⌉` equispaced points per axis, lexicographic, first `m`.
    TensorGrid,
    /// Halton sequence over the first `J` primes, skipping the origin.
    Halton,
}

fn tensor_points(dim: usize, m: usize) -> Vec<Vec<f64>> {
    let mut q = (m as f64).powf(1.0 / dim as f64).round().max(2.0) as usize;
    while (q as f64).powi(dim as i32) < m as f64 {
        q += 1;
    }
    while q > 2 && ((q - 1) as f64).powi(dim as i32) >= m as f64 {
        q -= 1;
    }
    let axis: Vec<f64> = (0..q).map(|i| -1.0 + 2.0 * i as f64 / (q - 1) as f64).collect();
    (0..m)
        .map(|mut k| {
            let mut p = vec![0.0; dim];
            for slot in p.iter_mut().rev() {
                *slot = axis[k % q];
                k /= q;
            }
            p
        })
        .collect()
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

/// Parameter points in `[−1, 1]^dim`.
pub fn sample_parameters(sampler: Sampler, dim: usize, m: usize) -> Vec<Vec<f64>> {
    if dim == 0 {
        return vec![Vec::new(); m];
    }
    match sampler {
        Sampler::Uniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m).map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect()
        }
        Sampler::TensorGrid => tensor_points(dim, m),
        Sampler::Halton => {
            let bases = primes(dim);
            (1..=m as u64)
                .map(|i| bases.iter().map(|&b| 2.0 * radical_inverse(i, b) - 1.0).collect())
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    grid: Grid,
    params: Vec<Vec<f64>>,
    fields: Vec<DiscreteField>,
}

impl SnapshotSet {
    pub fn new(params: Vec<Vec<f64>>, fields: Vec<DiscreteField>) -> Result<Self, WidthError> {
        if fields.len() < 2 {
            return Err(WidthError::TooFewSnapshots(fields.len()));
        }
        if params.len() != fields.len() {
            return Err(WidthError::Format(format!(
                "{} parameter points for {} fields",
                params.len(),
                fields.len()
            )));
        }
        let grid = fields[0].grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(PdeError::GridMismatch.into());
        }
        Ok(Self { grid, params, fields })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn fields(&self) -> &[DiscreteField] {
        &self.fields
    }

    /// Columns are snapshots in energy coordinates, so Euclidean geometry
    /// of the matrix is `Y` geometry.
    pub fn energy_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = self.fields.iter().map(energy_coordinates).collect();
        DMatrix::from_fn(self.grid.num_edges(), self.len(), |i, j| cols[j][i])
    }

    /// Archive: magic `HWS1`, `u64` count, `u64` parameter dimension, the
    /// parameter points as `f64`, then one `HWF1` record per field.
    pub fn write_archive<W: Write>(&self, mut w: W) -> Result<(), WidthError> {
        let dim = self.params.first().map_or(0, Vec::len);
        w.write_all(b"HWS1")?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(dim as u64).to_le_bytes())?;
        for p in &self.params {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for f in &self.fields {
            ArrayFile::from_field(f).write_to(&mut w)?;
        }
        Ok(())
    }

    pub fn read_archive<R: Read>(mut r: R) -> Result<Self, WidthError> {
        let mut head = [0u8; 20];
        r.read_exact(&mut head)?;
        if &head[..4] != b"HWS1" {
            return Err(WidthError::Format("bad magic".into()));
        }
        let m = u64::from_le_bytes(head[4..12].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; m * dim * 8];
        r.read_exact(&mut buf)?;
        let flat: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let params = if dim == 0 {
            vec![Vec::new(); m]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        let fields = (0..m)
            .map(|_| ArrayFile::read_from(&mut r)?.into_field())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(params, fields)
    }
}

/// Solves the problem at `m` sampled parameter points, in parallel.
pub fn sample_snapshots<P: ParametricProblem>(prob: &P, sampler: Sampler, m: usize) -> Result<SnapshotSet, WidthError> {
    if m < 2 {
        return Err(WidthError::TooFewSnapshots(m));
    }
    let params = sample_parameters(sampler, prob.parameter_dim(), m);
    let fields = params
        .par_iter()
        .map(|y| prob.solve_at(y))
        .collect::<Result<Vec<_>, _>>()?;
    SnapshotSet::new(params, fields)
}

/// Descending singular values of the energy-coordinate snapshot matrix.
pub fn singular_values(snap: &SnapshotSet) -> Vec<f64> {
    let mut s: Vec<f64> = snap.energy_matrix().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `sqrt(Σ_{k ≥ n} σ_k² / m)` for `n = 0..min(m, dim)`, with `σ_0` the largest.
pub fn svd_widths(snap: &SnapshotSet) -> Vec<f64> {
    let s = singular_values(snap);
    let len = snap.len().min(snap.grid.num_nodes()).min(s.len());
    let m = snap.len() as f64;
    let mut out = vec![0.0; len];
    let mut acc: f64 = s[len..].iter().map(|x| x * x).sum();
    for n in (0..len).rev() {
        acc += s[n] * s[n];
        out[n] = (acc / m).sqrt();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    /// Worst projection error over the set after `n` selections, `n = 0..=n_max`.
    pub max_errors: Vec<f64>,
    /// Selected snapshot indices in order.
    pub selection: Vec<usize>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Errors within this relative distance of the maximum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Strong greedy: repeatedly add the snapshot with the largest current
/// projection error (lowest index on ties).
pub fn greedy_widths(snap: &SnapshotSet, n_max: usize) -> Result<GreedyRun, WidthError> {
    if n_max > snap.len() {
        return Err(WidthError::TooManySteps { n_max, m: snap.len() });
    }
    let mut residuals: Vec<Vec<f64>> = snap.fields.iter().map(energy_coordinates).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut max_errors = Vec::with_capacity(n_max + 1);
    let mut selection = Vec::new();
    for n in 0..=n_max {
        let errs: Vec<f64> = residuals.iter().map(|r| norm(r)).collect();
        let err = errs.iter().copied().fold(0.0, f64::max);
        let best = errs
            .iter()
            .position(|&e| e >= err * (1.0 - TIE_TOLERANCE))
            .unwrap_or(0);
        max_errors.push(err);
        if n == n_max {
            break;
        }
        if err == 0.0 {
            max_errors.resize(n_max + 1, 0.0);
            break;
        }
        let mut q = residuals[best].clone();
        for b in &basis {
            let c = dot(b, &q);
            q.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let qn = norm(&q);
        if qn == 0.0 {
            max_errors.resize(n_max + 1, err);
            break;
        }
        q.iter_mut().for_each(|x| *x /= qn);
        residuals.par_iter_mut().for_each(|r| {
            let c = dot(&q, r);
            r.iter_mut().zip(&q).for_each(|(x, y)| *x -= c * y);
        });
        basis.push(q);
        selection.push(best);
    }
    Ok(GreedyRun { max_errors, selection })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Least-squares fit of `log d_n` against `log n` for `n_min ≤ n ≤ n_max`,
/// where `d_seq[n] = d_n`.
pub fn fit_rate(d_seq: &[f64], n_min: usize, n_max: usize) -> Result<RateFit, WidthError> {
    if n_min == 0 || n_max <= n_min || n_max >= d_seq.len() {
        return Err(WidthError::Window(n_min, n_max));
    }
    if let Some(k) = (n_min..=n_max).find(|&n| !(d_seq[n] > 0.0)) {
        return Err(WidthError::NonPositive { first_zero: k });
    }
    let pts: Vec<(f64, f64)> = (n_min..=n_max).map(|n| ((n as f64).ln(), d_seq[n].ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        n_min,
        n_max,
    })
}

/// Default window `[5, min(40, m/4)]`.
pub fn default_window(m: usize) -> (usize, usize) {
    (5, 40.min(m / 4))
}

pub const DEFAULT_DELTA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct WidthReport {
    pub m: usize,
    pub svd_rms: Vec<f64>,
    pub greedy_max: Vec<f64>,
    pub selection: Vec<usize>,
    pub svd_fit: Result<RateFit, String>,
    pub greedy_fit: Result<RateFit, String>,
}

impl WidthReport {
    pub fn build(snap: &SnapshotSet, n_max: usize, window: (usize, usize)) -> Result<Self, WidthError> {
        let svd_rms = svd_widths(snap);
        let greedy = greedy_widths(snap, n_max)?;
        let fit = |d: &[f64]| fit_rate(d, window.0, window.1).map_err(|e| e.to_string());
        Ok(Self {
            m: snap.len(),
            svd_fit: fit(&svd_rms),
            greedy_fit: fit(&greedy.max_errors),
            svd_rms,
            greedy_max: greedy.max_errors,
            selection: greedy.selection,
        })
    }

    /// Largest violation of monotonicity in either sequence and of
    /// `greedy_max(n) ≥ svd_rms(n)`, relative to `greedy_max[0]`.
    pub fn invariant_defect(&self) -> f64 {
        let scale = self.greedy_max.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let mono = |d: &[f64]| d.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let order = self
            .greedy_max
            .iter()
            .zip(&self.svd_rms)
            .map(|(g, s)| s - g)
            .fold(0.0, f64::max);
        mono(&self.svd_rms).max(mono(&self.greedy_max)).max(order) / scale
    }

    pub fn invariants_hold(&self) -> bool {
        self.invariant_defect() <= 1e-12
    }

    /// Columns `n, svd_rms, greedy_max`; missing entries are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "svd_rms", "greedy_max"])?;
        let cell = |d: &[f64], n: usize| d.get(n).map(|v| format!("{v:e}")).unwrap_or_default();
        for n in 0..self.svd_rms.len().max(self.greedy_max.len()) {
            out.write_record([n.to_string(), cell(&self.svd_rms, n), cell(&self.greedy_max, n)])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub s_input: f64,
    pub delta: f64,
    /// `s − 1 − δ`.
    pub t_required: f64,
    /// Negated greedy slope.
    pub t_observed: f64,
    pub greedy_slope: f64,
    pub svd_slope: Option<f64>,
    pub pass: bool,
}

/// Passes iff the fitted greedy slope is at most `−(s − 1 − δ)`.
pub fn rate_transfer_verdict(s: f64, report: &WidthReport, delta: f64) -> Result<Verdict, WidthError> {
    let fit = report.greedy_fit.as_ref().map_err(|_| WidthError::NoRate)?;
    Ok(verdict_from_slopes(s, fit.slope, report.svd_fit.as_ref().ok().map(|f| f.slope), delta))
}

pub fn verdict_from_slopes(s: f64, greedy_slope: f64, svd_slope: Option<f64>, delta: f64) -> Verdict {
    let t_required = s - 1.0 - delta;
    Verdict {
        s_input: s,
        delta,
        t_required,
        t_observed: -greedy_slope,
        greedy_slope,
        svd_slope,
        pass: greedy_slope <= -t_required,
    }
}

/// Worst projection error of the snapshots onto `span(basis)` in `Y`.
pub fn max_projection_error(snap: &SnapshotSet, basis: &[DiscreteField]) -> f64 {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        let mut v = energy_coordinates(b);
        for _ in 0..2 {
            for e in &q {
                let c = dot(e, &v);
                v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&v);
        if n > 1e-14 * norm(&energy_coordinates(b)).max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|x| *x /= n);
            q.push(v);
        }
    }
    snap.fields
        .par_iter()
        .map(|f| {
            let mut r = energy_coordinates(f);
            for _ in 0..2 {
                for e in &q {
                    let c = dot(e, &r);
                    r.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
                }
            }
            norm(&r)
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiidx::{enumerate_indices, n_term_select, IndexSet};
    use crate::pde::{bumps, energy_norm, load_preset};
    use crate::taylor::{compute_taylor, tail_bound, BoundSettings};

    fn constant_family(c: f64) -> AffineProblem {
        let g = Grid::new(1, 63).unwrap();
        AffineProblem::new(
            Coefficient::constant(g, 1.0),
            vec![Coefficient::constant(g, c)],
            load_preset("const1", g).unwrap(),
        )
        .unwrap()
    }

    fn orthonormal_snapshots(m: usize) -> SnapshotSet {
        // sin(kπx) are energy-orthogonal; normalize each
        let g = Grid::new(1, 31).unwrap();
        let fields = (1..=m)
            .map(|k| {
                let f = DiscreteField::from_fn(g, |x| (k as f64 * std::f64::consts::PI * x[0]).sin());
                let n = energy_norm(&f);
                DiscreteField::new(g, f.values().iter().map(|v| v / n).collect()).unwrap()
            })
            .collect();
        SnapshotSet::new(vec![Vec::new(); m], fields).unwrap()
    }

    #[test]
    fn rejects_single_snapshot() {
        let prob = constant_family(0.5);
        assert!(matches!(
            sample_snapshots(&prob, Sampler::TensorGrid, 1),
            Err(WidthError::TooFewSnapshots(1))
        ));
    }

    #[test]
    fn tensor_grid_one_dimension() {
        assert_eq!(
            sample_parameters(Sampler::TensorGrid, 1, 5),
            vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]
        );
        let pts = sample_parameters(Sampler::TensorGrid, 2, 9);
        assert_eq!(pts[0], vec![-1.0, -1.0]);
        assert_eq!(pts[1], vec![-1.0, 0.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
        assert_eq!(sample_parameters(Sampler::TensorGrid, 3, 10).len(), 10);
    }

    #[test]
    fn halton_and_uniform_in_cube() {
        let h = sample_parameters(Sampler::Halton, 3, 50);
        assert_eq!(h[0], vec![0.0, 2.0 / 3.0 - 1.0, 2.0 / 5.0 - 1.0]);
        for s in [Sampler::Halton, Sampler::Uniform { seed: 3 }] {
            for p in sample_parameters(s, 4, 200) {
                assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let g = Grid::new(1, 63).unwrap();
        let prob = AffineProblem::new(
            Coefficient::constant(g, 1.0),
            bumps(g, 4, 2.0, 0.5).unwrap(),
            load_preset("sinpi", g).unwrap(),
        )
        .unwrap();
        let a = sample_snapshots(&prob, Sampler::Uniform { seed: 11 }, 20).unwrap();
        let b = sample_snapshots(&prob, Sampler::Uniform { seed: 11 }, 20).unwrap();
        assert_eq!(a, b);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_archive(&mut ba).unwrap();
        b.write_archive(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(SnapshotSet::read_archive(&ba[..]).unwrap(), a);
        let c = sample_snapshots(&prob, Sampler::Uniform { seed: 12 }, 20).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn equal_snapshots_have_rank_one() {
        let g = Grid::new(1, 15).unwrap();
        let f = load_preset("sinpi", g).unwrap();
        let snap = SnapshotSet::new(vec![vec![0.0]; 4], vec![f; 4]).unwrap();
        let w = svd_widths(&snap);
        assert!(w[0] > 0.0);
        assert!(w[1..].iter().all(|&v| v <= 1e-14 * w[0]));
        let g = greedy_widths(&snap, 3).unwrap();
        assert_eq!(g.max_errors.len(), 4);
        assert!(g.max_errors[1..].iter().all(|&v| v <= 1e-14 * g.max_errors[0]));
        assert_eq!(g.selection[0], 0);
    }

    #[test]
    fn constant_direction_is_rank_one() {
        let prob = constant_family(0.5);
        let snap = sample_snapshots(&prob, Sampler::Uniform { seed: 1 }, 30).unwrap();
        let s = singular_values(&snap);
        assert!(s[1] / s[0] <= 1e-10, "σ₂/σ₁ = {}", s[1] / s[0]);
    }

    #[test]
    fn affine_manifold_has_rank_two() {
        let g = Grid::new(1, 31).unwrap();
        let u0 = load_preset("sinpi", g).unwrap();
        let u1 = DiscreteField::from_fn(g, |x| x[0] * (1.0 - x[0]));
        let params: Vec<Vec<f64>> = sample_parameters(Sampler::Uniform { seed: 2 }, 1, 12);
        let fields = params
            .iter()
            .map(|y| {
                let mut f = u0.clone();
                f.add_scaled(y[0], &u1);
                f
            })
            .collect();
        let snap = SnapshotSet::new(params, fields).unwrap();
        let w = svd_widths(&snap);
        assert!(w[1] > 1e-3);
        assert!(w[2..].iter().all(|&v| v <= 1e-13 * w[0]));
    }

    #[test]
    fn orthonormal_family_greedy() {
        for m in 2..=5 {
            let snap = orthonormal_snapshots(m);
            let g = greedy_widths(&snap, m).unwrap();
            for n in 0..m {
                assert!((g.max_errors[n] - 1.0).abs() < 1e-12);
            }
            assert!(g.max_errors[m] < 1e-12);
            assert_eq!(g.selection, (0..m).collect::<Vec<_>>());
            // rms surrogate: sqrt((m − n)/m)
            let w = svd_widths(&snap);
            for (n, v) in w.iter().enumerate() {
                assert!((v - ((m - n) as f64 / m as f64).sqrt()).abs() < 1e-12);
            }
        }
        assert!(matches!(
            greedy_widths(&orthonormal_snapshots(3), 4),
            Err(WidthError::TooManySteps { .. })
        ));
    }

    #[test]
    fn fit_examples() {
        let d: Vec<f64> = (0..=100).map(|n| if n == 0 { 1.0 } else { (n as f64).powi(-2) }).collect();
        let f = fit_rate(&d, 1, 50).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let d3: Vec<f64> = d.iter().map(|v| 3.0 * v).collect();
        let f3 = fit_rate(&d3, 1, 50).unwrap();
        assert!((f3.slope + 2.0).abs() < 1e-12 && (f3.intercept - 3f64.ln()).abs() < 1e-12);

        let mixed: Vec<f64> = (0..=100)
            .map(|n| if n == 0 { 1.0 } else { (n as f64).powi(-2) + (n as f64).powi(-3) })
            .collect();
        let fm = fit_rate(&mixed, 10, 100).unwrap();
        // oracle: closed-form least squares on the same points
        let xs: Vec<f64> = (10..=100).map(|n| (n as f64).ln()).collect();
        let ys: Vec<f64> = (10..=100).map(|n| mixed[n].ln()).collect();
        let k = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let oracle = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        assert!((fm.slope - oracle).abs() < 1e-10);
        assert!((-2.1..=-1.95).contains(&fm.slope));

        let mut z = d.clone();
        z[7] = 0.0;
        assert!(matches!(fit_rate(&z, 5, 20), Err(WidthError::NonPositive { first_zero: 7 })));
        assert!(fit_rate(&d, 0, 5).is_err());
        assert!(fit_rate(&d, 5, 101).is_err());
    }

    #[test]
    fn verdict_examples() {
        assert!(verdict_from_slopes(3.0, -3.0, None, 0.25).pass);
        assert!(!verdict_from_slopes(3.0, -0.5, None, 0.25).pass);
        let v = verdict_from_slopes(3.0, -1.75, None, 0.25);
        assert!(v.pass && v.t_required == 1.75);
    }

    #[test]
    fn report_invariants_on_affine_problem() {
        let g = Grid::new(1, 63).unwrap();
        let prob = AffineProblem::new(
            Coefficient::constant(g, 1.0),
            bumps(g, 6, 2.0, 0.5).unwrap(),
            load_preset("const1", g).unwrap(),
        )
        .unwrap();
        let snap = sample_snapshots(&prob, Sampler::Halton, 80).unwrap();
        let report = WidthReport::build(&snap, 20, (2, 10)).unwrap();
        assert!(report.invariants_hold(), "defect {}", report.invariant_defect());
        let again = WidthReport::build(&snap, 20, (2, 10)).unwrap();
        assert_eq!(report.selection, again.selection);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,svd_rms,greedy_max\n"));
    }

    #[test]
    fn taylor_space_error_within_tail() {
        let g = Grid::new(1, 63).unwrap();
        let prob = AffineProblem::new(
            Coefficient::constant(g, 1.0),
            bumps(g, 4, 2.0, 0.1).unwrap(),
            load_preset("const1", g).unwrap(),
        )
        .unwrap();
        let settings = BoundSettings::elliptic_margin(&prob).unwrap();
        let table = compute_taylor(&prob, &enumerate_indices(4, 6, |_| 1.0, 0.0).unwrap()).unwrap();
        let snap = sample_snapshots(&prob, Sampler::Uniform { seed: 4 }, 40).unwrap();
        for n in [1, 5, 15] {
            let sel: IndexSet = n_term_select(&table.norm_pairs(), n);
            let basis: Vec<DiscreteField> = sel.iter().map(|nu| table.get(nu).unwrap().clone()).collect();
            let err = max_projection_error(&snap, &basis);
            let bound = snap
                .params()
                .iter()
                .map(|y| tail_bound(&table, &sel, y, &settings).unwrap())
                .fold(0.0, f64::max);
            assert!(err <= bound + 1e-12, "n = {n}: {err} > {bound}");
        }
    }
}
