//! Taylor coefficients of the affine parametric diffusion problem and their
//! a-priori bounds.
//!
//! For `a(z) = ā + Σ_j z_j ψ_j` the stiffness operator is affine,
//! `A(a(z)) = A₀ + Σ_j z_j A_j`. Inserting `v(z) = Σ_ν v_ν z^ν` into
//! `A(a(z)) v(z) = f` and matching powers of `z` gives
//!
//! ```text
//! A₀ v₀ = f,        A₀ v_ν = − Σ_{j : ν_j > 0} A_j v_{ν − e_j}
//! ```
//!
//! so every coefficient needs only its immediate parents and one
//! factorization of `A₀`. For `ν = e_j` this is exactly the Fréchet
//! derivative of the solution map at `ā` in direction `ψ_j`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::boxparam::{BoxParametrization, NormKind};
use crate::multiidx::{factorial_ratio, IndexSet, MultiIndex, MultiIndexError};
use crate::pde::banded::SymBand;
use crate::pde::io::ArrayFile;
use crate::pde::{
    assemble, dual_norm, energy_norm, Coefficient, ComplexCoefficient, ComplexField, DiffusionSolver,
    DiscreteField, Grid, PdeError,
};

#[derive(Debug, Error)]
pub enum TaylorError {
    #[error("index set is not downward closed: {missing} (parent of {member}) is missing")]
    NotDownwardClosed { member: MultiIndex, missing: MultiIndex },
    #[error("no coefficient stored for {0}")]
    MissingCoefficient(MultiIndex),
    #[error("ellipticity floor {0} is not positive")]
    NotElliptic(f64),
    #[error("ρ design undefined for ν = 0")]
    ZeroIndex,
    #[error("star norm of coordinate {0} is zero where ν_j > 0")]
    ZeroStarNorm(usize),
    #[error("parameter |y_{index}| = {value} exceeds 1")]
    ParameterRange { index: usize, value: f64 },
    #[error(transparent)]
    MultiIndex(#[from] MultiIndexError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `−div(a(z)∇u) = f` with `a(z) = ā + Σ_{j ≤ J} z_j ψ_j`.
#[derive(Debug, Clone)]
pub struct AffineProblem {
    grid: Grid,
    mean: Coefficient,
    directions: Vec<Coefficient>,
    load: DiscreteField,
    floor: f64,
    bx: BoxParametrization,
}

impl AffineProblem {
    /// Requires `min_x (ā(x) − Σ_j |ψ_j(x)|) > 0`, which keeps `a(z)` elliptic
    /// on the whole unit polydisc.
    pub fn new(mean: Coefficient, directions: Vec<Coefficient>, load: DiscreteField) -> Result<Self, TaylorError> {
        let grid = mean.grid();
        if load.grid() != grid || directions.iter().any(|d| d.grid() != grid) {
            return Err(PdeError::GridMismatch.into());
        }
        let floor = (0..grid.num_edges())
            .map(|k| mean.values()[k] - directions.iter().map(|d| d.values()[k].abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if !(floor > 0.0) {
            return Err(TaylorError::NotElliptic(floor));
        }
        let bx = BoxParametrization::new(
            mean.values().to_vec(),
            directions.iter().map(|d| d.values().to_vec()).collect(),
            NormKind::Sup,
        )
        .expect("coefficients share one grid");
        Ok(Self {
            grid,
            mean,
            directions,
            load,
            floor,
            bx,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mean(&self) -> &Coefficient {
        &self.mean
    }

    pub fn directions(&self) -> &[Coefficient] {
        &self.directions
    }

    pub fn load(&self) -> &DiscreteField {
        &self.load
    }

    /// `min_x (ā(x) − Σ_j |ψ_j(x)|)`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn box_parametrization(&self) -> &BoxParametrization {
        &self.bx
    }

    pub fn active(&self) -> usize {
        self.directions.len()
    }

    pub fn coefficient(&self, y: &[f64]) -> Coefficient {
        Coefficient::affine(&self.mean, &self.directions, y)
    }

    /// Direct solve at a real parameter point.
    pub fn solve(&self, y: &[f64]) -> Result<DiscreteField, PdeError> {
        DiffusionSolver::new(&self.coefficient(y))?.solve(&self.load)
    }

    /// Direct solve at a complex parameter point.
    pub fn solve_complex(&self, z: &[Complex64]) -> Result<ComplexField, PdeError> {
        let a = ComplexCoefficient::affine_complex(&self.mean, &self.directions, z);
        DiffusionSolver::new(&a)?.solve(&self.load.to_complex())
    }
}

/// Coefficients `v_ν` over a downward-closed index set.
#[derive(Debug, Clone)]
pub struct TaylorTable {
    index: IndexSet,
    coefficients: Vec<DiscreteField>,
    norms: Vec<f64>,
}

impl TaylorTable {
    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, nu: &MultiIndex) -> Option<&DiscreteField> {
        self.index.position(nu).map(|k| &self.coefficients[k])
    }

    pub fn norm(&self, nu: &MultiIndex) -> Option<f64> {
        self.index.position(nu).map(|k| self.norms[k])
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// `(ν, ‖v_ν‖_Y)` in index order.
    pub fn norm_pairs(&self) -> Vec<(MultiIndex, f64)> {
        self.index.iter().cloned().zip(self.norms.iter().copied()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &DiscreteField, f64)> {
        self.index
            .iter()
            .zip(&self.coefficients)
            .zip(&self.norms)
            .map(|((nu, v), &n)| (nu, v, n))
    }

    /// Largest deviation between stored norms and recomputed energy norms.
    pub fn norm_deviation(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.norms)
            .map(|(v, &n)| (energy_norm(v) - n).abs())
            .fold(0.0, f64::max)
    }

    /// Index file: one `ν = norm` line per coefficient.
    pub fn write_index<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (nu, _, n) in self.iter() {
            writeln!(w, "\"{nu}\" = {n:e}")?;
        }
        Ok(())
    }

    /// Field archive: magic `HWA1`, `u64` count, then per coefficient a
    /// `u32` length and the UTF-8 index string followed by an `HWF1` record.
    pub fn write_archive<W: Write>(&self, mut w: W) -> Result<(), TaylorError> {
        w.write_all(b"HWA1")?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (nu, v, _) in self.iter() {
            let key = nu.to_string();
            w.write_all(&(key.len() as u32).to_le_bytes())?;
            w.write_all(key.as_bytes())?;
            ArrayFile::from_field(v).write_to(&mut w)?;
        }
        Ok(())
    }
}

fn direction_operators(prob: &AffineProblem) -> Vec<SymBand<f64>> {
    prob.directions
        .iter()
        .map(|psi| assemble(psi).matrix().clone())
        .collect()
}

/// Runs the affine recursion over `index`, one total-degree layer at a time
/// against a single factorization of `A₀`.
pub fn compute_taylor(prob: &AffineProblem, index: &IndexSet) -> Result<TaylorTable, TaylorError> {
    if let Some((member, missing)) = index.find_missing_parent() {
        return Err(TaylorError::NotDownwardClosed { member, missing });
    }
    let solver = DiffusionSolver::new(&prob.mean)?;
    let ops = direction_operators(prob);
    let grid = prob.grid;
    let mut coefficients: Vec<Option<DiscreteField>> = vec![None; index.len()];
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by_key(|&k| (index.members()[k].total_degree(), k));

    let mut start = 0;
    while start < order.len() {
        let degree = index.members()[order[start]].total_degree();
        let end = order[start..]
            .iter()
            .position(|&k| index.members()[k].total_degree() != degree)
            .map(|p| start + p)
            .unwrap_or(order.len());
        let layer = &order[start..end];
        let solved: Vec<Result<DiscreteField, PdeError>> = layer
            .par_iter()
            .map(|&k| {
                let nu = &index.members()[k];
                if nu.is_zero() {
                    return solver.solve(&prob.load);
                }
                let mut rhs = vec![0.0; grid.num_nodes()];
                for &(j, _) in nu.entries() {
                    let Some(op) = ops.get(j - 1) else { continue };
                    let parent = nu.decremented(j).expect("j in support");
                    let pk = index.position(&parent).expect("downward closed");
                    let pv = coefficients[pk].as_ref().expect("parent layer solved");
                    for (r, v) in rhs.iter_mut().zip(op.apply(pv.values())) {
                        *r -= v;
                    }
                }
                solver.solve(&DiscreteField::new(grid, rhs)?)
            })
            .collect();
        for (&k, v) in layer.iter().zip(solved) {
            coefficients[k] = Some(v?);
        }
        start = end;
    }
    let coefficients: Vec<DiscreteField> = coefficients.into_iter().map(|v| v.expect("all solved")).collect();
    let norms = coefficients.par_iter().map(energy_norm).collect();
    Ok(TaylorTable {
        index: index.clone(),
        coefficients,
        norms,
    })
}

/// `ρ_j = 1 + (6ε / (10 ‖ψ*_j‖)) · ν_j / |ν|`, with `ρ_j = 1` off the support.
pub fn rho_design(nu: &MultiIndex, eps: f64, star_norms: &[f64]) -> Result<Vec<f64>, TaylorError> {
    let degree = nu.total_degree();
    if degree == 0 {
        return Err(TaylorError::ZeroIndex);
    }
    let len = star_norms.len().max(nu.max_coordinate());
    let mut rho = vec![1.0; len];
    for &(j, v) in nu.entries() {
        let s = star_norms.get(j - 1).copied().unwrap_or(0.0);
        if !(s > 0.0) {
            return Err(TaylorError::ZeroStarNorm(j));
        }
        rho[j - 1] = 1.0 + (0.6 * eps / s) * (v as f64 / degree as f64);
    }
    Ok(rho)
}

/// `B ρ^{-ν}` (with `ρ_j^{-0} = 1`).
pub fn cauchy_bound(nu: &MultiIndex, b: f64, rho: &[f64]) -> f64 {
    nu.entries()
        .iter()
        .fold(b, |acc, &(j, v)| acc * rho[j - 1].powi(-(v as i32)))
}

/// `d̄_j = e · 10 ‖ψ*_j‖ / (6ε)`.
pub fn dbar(star_norms: &[f64], eps: f64) -> Vec<f64> {
    star_norms
        .iter()
        .map(|&s| std::f64::consts::E * 10.0 * s / (6.0 * eps))
        .collect()
}

/// `B (|ν|!/ν!) d̄^ν`.
pub fn factorial_bound(nu: &MultiIndex, b: f64, dbar: &[f64]) -> Result<f64, TaylorError> {
    let ratio = factorial_ratio(nu)?.value();
    Ok(nu
        .entries()
        .iter()
        .fold(b * ratio, |acc, &(j, v)| {
            acc * dbar.get(j - 1).copied().unwrap_or(0.0).powi(v as i32)
        }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summability {
    pub dbar_l1: f64,
    /// `‖d̄‖₁ ≤ 1`.
    pub condition_ok: bool,
    pub lp_quasi_norm: f64,
    /// Finite ℓ_p quasi-norm (always true for finite sequences).
    pub lp_ok: bool,
}

/// Checks `d̄ ∈ ℓ_p` and `‖d̄‖₁ ≤ 1` for the sequence built from `star_norms`.
pub fn summability_check(star_norms: &[f64], eps: f64, p: f64) -> Result<Summability, TaylorError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MultiIndexError::Domain(p).into());
    }
    let d = dbar(star_norms, eps);
    let dbar_l1: f64 = d.iter().sum();
    let lp = crate::multiidx::lp_quasi_norm(d.iter().copied(), p);
    Ok(Summability {
        dbar_l1,
        condition_ok: dbar_l1 <= 1.0,
        lp_quasi_norm: lp,
        lp_ok: lp.is_finite(),
    })
}

/// `Σ_{ν ∈ Λ_n} v_ν y^ν`.
pub fn taylor_evaluate(table: &TaylorTable, selection: &IndexSet, y: &[f64]) -> Result<DiscreteField, TaylorError> {
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| v.abs() > 1.0) {
        return Err(TaylorError::ParameterRange { index: index + 1, value });
    }
    let grid = table
        .coefficients
        .first()
        .map(|v| v.grid())
        .ok_or_else(|| TaylorError::MissingCoefficient(MultiIndex::zero()))?;
    let mut out = DiscreteField::zeros(grid);
    for nu in selection {
        let v = table.get(nu).ok_or_else(|| TaylorError::MissingCoefficient(nu.clone()))?;
        let w = nu.monomial(y);
        if w != 0.0 {
            out.add_scaled(w, v);
        }
    }
    Ok(out)
}

/// Constants of the bound chain for one box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSettings {
    pub eps: f64,
    /// Uniform bound on `‖v(z)‖_Y` over every polydisc used.
    pub b: f64,
    pub star_norms: Vec<f64>,
}

impl BoundSettings {
    /// Elliptic-margin choice: `0.6 ε = r/2` with `r` the ellipticity floor,
    /// so `Re a(z) ≥ r/2` on every `U_{ρ(ν)}`, and `B = ‖f‖_{Y'} / (r/2)`.
    pub fn elliptic_margin(prob: &AffineProblem) -> Result<Self, TaylorError> {
        let r = prob.floor();
        let eps = (r - r / 2.0) / 0.6;
        Ok(Self {
            eps,
            b: dual_norm(prob.load())? / (r / 2.0),
            star_norms: prob.box_parametrization().norms().to_vec(),
        })
    }

    pub fn dbar(&self) -> Vec<f64> {
        dbar(&self.star_norms, self.eps)
    }

    pub fn cauchy(&self, nu: &MultiIndex) -> Result<f64, TaylorError> {
        if nu.is_zero() {
            return Ok(self.b);
        }
        Ok(cauchy_bound(nu, self.b, &rho_design(nu, self.eps, &self.star_norms)?))
    }

    pub fn factorial(&self, nu: &MultiIndex) -> Result<f64, TaylorError> {
        factorial_bound(nu, self.b, &self.dbar())
    }
}

/// One row of the bound audit.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub nu: MultiIndex,
    pub degree: u32,
    pub norm: f64,
    pub cauchy: f64,
    pub factorial: f64,
    /// `‖v_ν‖ ≤ cauchy` and `cauchy ≤ factorial · (1 + 1e-10)`.
    pub ok: bool,
}

/// Checks `‖v_ν‖ ≤ B ρ(ν)^{-ν} ≤ B (|ν|!/ν!) d̄^ν` for every stored coefficient.
pub fn audit_bounds(table: &TaylorTable, settings: &BoundSettings) -> Result<Vec<BoundRow>, TaylorError> {
    table
        .iter()
        .map(|(nu, _, norm)| {
            let cauchy = settings.cauchy(nu)?;
            let factorial = settings.factorial(nu)?;
            Ok(BoundRow {
                nu: nu.clone(),
                degree: nu.total_degree(),
                norm,
                cauchy,
                factorial,
                ok: norm <= cauchy && cauchy <= factorial * (1.0 + 1e-10),
            })
        })
        .collect()
}

pub fn write_bound_csv<W: Write>(rows: &[BoundRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["nu", "degree", "norm", "cauchy_bound", "factorial_bound", "violation"])?;
    for r in rows {
        out.write_record([
            r.nu.to_string(),
            r.degree.to_string(),
            format!("{:e}", r.norm),
            format!("{:e}", r.cauchy),
            format!("{:e}", r.factorial),
            (!r.ok as u8).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Upper bound for `‖v(y) − Σ_{ν∈Λ_n} v_ν y^ν‖_Y` at a real point `|y_j| ≤ 1`.
///
/// Stored coefficients outside the selection contribute `‖v_ν‖ |y^ν|`; the
/// rest of the index family is bounded by its factorial bounds, whose total
/// over all `ν` is `B Σ_k ‖d̄‖₁^k = B / (1 − ‖d̄‖₁)` by the multinomial
/// theorem. Returns `+∞` when `‖d̄‖₁ ≥ 1`.
pub fn tail_bound(
    table: &TaylorTable,
    selection: &IndexSet,
    y: &[f64],
    settings: &BoundSettings,
) -> Result<f64, TaylorError> {
    let s: f64 = settings.dbar().iter().sum();
    if s >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut stored = 0.0;
    let mut covered = 0.0;
    for (nu, _, norm) in table.iter() {
        covered += settings.factorial(nu)?;
        if !selection.contains(nu) {
            stored += norm * nu.monomial(y).abs();
        }
    }
    let remainder = (settings.b / (1.0 - s) - covered).max(0.0);
    Ok(stored + remainder)
}
