//! Box parametrizations `Q = {b + Σ_j z_j ψ_j : |z_j| ≤ 1}` and their
//! localization by finite coverings.
//!
//! A covering of tolerance `ε` cuts the direction sequence at the smallest
//! `J` with `Σ_{j>J} ‖ψ_j‖ < ε/10`, lays an `η`-net over the head polydisc
//! `U_J` with `η = ε / (10 Σ_{j≤J} ‖ψ_j‖)`, and keeps the net points that are
//! `η`-close (coordinatewise) to a sampled member of `K`. Each kept point
//! `z'` gives a sub-box with center `b + Σ_{j≤J} z'_j ψ_j` and rescaled
//! directions `ψ*_j = η ψ_j` (`j ≤ J`), `ψ*_j = ψ_j` (`j > J`).

use std::collections::BTreeSet;
use std::io::Write;

use num_complex::Complex64;
use thiserror::Error;

use crate::multiidx::lp_quasi_norm;

#[derive(Debug, Error)]
pub enum BoxError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("degenerate box: head directions have zero total norm")]
    DegenerateBox,
    #[error("covering needs J = {j} > cap {cap}; predicted net size {predicted:.3e}")]
    TooManyCoordinates { j: usize, cap: usize, predicted: f64 },
    #[error("predicted net size {predicted:.3e} exceeds limit {limit}")]
    NetTooLarge { predicted: f64, limit: usize },
    #[error("basis error: {0}")]
    Basis(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Norm used for the directions of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Max over sampling points (the `L^∞` coefficient norm on the grid).
    Sup,
    /// Euclidean norm of the coefficient vector (discrete Hilbert setting).
    Euclidean,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Sup => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Offset plus directions with recorded norms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxParametrization {
    offset: Vec<f64>,
    directions: Vec<Vec<f64>>,
    norms: Vec<f64>,
    kind: NormKind,
}

impl BoxParametrization {
    pub fn new(offset: Vec<f64>, directions: Vec<Vec<f64>>, kind: NormKind) -> Result<Self, BoxError> {
        if let Some(bad) = directions.iter().position(|d| d.len() != offset.len()) {
            return Err(BoxError::Dimension(format!(
                "direction {} has length {}, offset has {}",
                bad + 1,
                directions[bad].len(),
                offset.len()
            )));
        }
        let norms = directions.iter().map(|d| kind.norm(d)).collect();
        Ok(Self {
            offset,
            directions,
            norms,
            kind,
        })
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    /// Number of active directions; directions beyond it are zero.
    pub fn active(&self) -> usize {
        self.directions.len()
    }

    /// Largest deviation between recorded and recomputed norms.
    pub fn norm_deviation(&self) -> f64 {
        self.directions
            .iter()
            .zip(&self.norms)
            .map(|(d, &n)| (self.kind.norm(d) - n).abs())
            .fold(0.0, f64::max)
    }

    pub fn lp_quasi_norm(&self, p: f64) -> f64 {
        lp_quasi_norm(self.norms.iter().copied(), p)
    }

    /// `b + Σ_j z_j ψ_j` for complex parameters (missing coordinates are zero).
    pub fn point(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut x: Vec<Complex64> = self.offset.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for (psi, &zj) in self.directions.iter().zip(z) {
            for (xi, &p) in x.iter_mut().zip(psi) {
                *xi += zj * p;
            }
        }
        x
    }
}

fn suffix_sums(norms: &[f64]) -> Vec<f64> {
    // tails[J] = Σ_{j>J} ‖ψ_j‖, accumulated from the small end
    let mut tails = vec![0.0; norms.len() + 1];
    for j in (0..norms.len()).rev() {
        tails[j] = tails[j + 1] + norms[j];
    }
    tails
}

/// Smallest `J` with `Σ_{j>J} ‖ψ_j‖ < ε/10`.
pub fn tail_cut(norms: &[f64], epsilon: f64) -> Result<usize, BoxError> {
    if !(epsilon > 0.0) {
        return Err(BoxError::InvalidEpsilon(epsilon));
    }
    let tails = suffix_sums(norms);
    Ok(tails
        .iter()
        .position(|&t| t < epsilon / 10.0)
        .expect("empty tail is zero"))
}

/// `η = ε / (10 Σ_{j≤J} ‖ψ_j‖)`.
pub fn net_spacing(norms: &[f64], j: usize, epsilon: f64) -> Result<f64, BoxError> {
    if !(epsilon > 0.0) {
        return Err(BoxError::InvalidEpsilon(epsilon));
    }
    let head: f64 = norms.iter().take(j).sum();
    if j == 0 || head <= 0.0 {
        return Err(BoxError::DegenerateBox);
    }
    Ok(epsilon / (10.0 * head))
}

/// `Σ_{j>n} ‖ψ_j‖`, the box bound on `d_n(Q)`.
pub fn box_width_bound(norms: &[f64], n: usize) -> f64 {
    suffix_sums(norms).get(n).copied().unwrap_or(0.0)
}

/// `ε` equal to half the sup-distance from the sampled coefficients to
/// `{Re(a) = r}`, or `None` if some sample is not strictly inside.
pub fn suggest_epsilon(samples: &[Vec<f64>], r: f64) -> Option<f64> {
    let gap = samples
        .iter()
        .map(|a| a.iter().copied().fold(f64::INFINITY, f64::min) - r)
        .fold(f64::INFINITY, f64::min);
    (gap > 0.0 && gap.is_finite()).then_some(0.5 * gap)
}

/// `η`-net of the closed unit disc in the complex plane.
///
/// Square lattice of spacing `η√2` (cell half-diagonal `η`) centred at the
/// origin; every lattice cell that meets the disc contributes its centre,
/// radially projected onto the disc when it lies outside. Projection onto a
/// convex set is nonexpansive, so every disc point is within `η` of a net
/// point and all net points lie in the disc.
pub fn disc_net(eta: f64) -> Vec<Complex64> {
    let s = eta * std::f64::consts::SQRT_2;
    let k = ((1.0 + s) / s).ceil() as i64 + 1;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for b in -k..=k {
        for a in -k..=k {
            let (gx, gy) = (a as f64 * s, b as f64 * s);
            let dx = (gx.abs() - s / 2.0).max(0.0);
            let dy = (gy.abs() - s / 2.0).max(0.0);
            if dx * dx + dy * dy > 1.0 {
                continue;
            }
            let r = gx.hypot(gy);
            let p = if r > 1.0 {
                Complex64::new(gx / r, gy / r)
            } else {
                Complex64::new(gx, gy)
            };
            if seen.insert((p.re.to_bits(), p.im.to_bits())) {
                out.push(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringOptions {
    /// Largest admissible head dimension `J`.
    pub j_cap: usize,
    /// Largest admissible product-net size; `None` disables the guard.
    pub max_centers: Option<usize>,
    /// Replaces the computed `η` (for diagnostics).
    pub eta_override: Option<f64>,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        Self {
            j_cap: 6,
            max_centers: Some(2_000_000),
            eta_override: None,
        }
    }
}

/// Finite family of sub-boxes covering the sampled part of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    pub epsilon: f64,
    pub j: usize,
    /// Net spacing; `1` when `J = 0` (no localization).
    pub eta: f64,
    /// Head coordinates `z'` of every retained center, length `J` each.
    pub center_params: Vec<Vec<Complex64>>,
    pub norms: Vec<f64>,
    pub star_norms: Vec<f64>,
}

/// Individual invariant outcomes of a [`Covering`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringInvariants {
    pub tail_ok: bool,
    pub eta_ok: bool,
    pub star_ok: bool,
}

impl CoveringInvariants {
    pub fn all(&self) -> bool {
        self.tail_ok && self.eta_ok && self.star_ok
    }
}

impl Covering {
    pub fn num_centers(&self) -> usize {
        self.center_params.len()
    }

    /// Center `b + Σ_{j≤J} z'_j ψ_j` of sub-box `i`.
    pub fn center(&self, bx: &BoxParametrization, i: usize) -> Vec<Complex64> {
        bx.point(&self.center_params[i])
    }

    /// First sub-box whose head coordinates satisfy `|(z_j − z'_j)/η| ≤ 1`.
    pub fn locate(&self, z: &[Complex64]) -> Option<usize> {
        let tol = 1e-12;
        self.center_params.iter().position(|c| {
            c.iter().enumerate().all(|(j, &cj)| {
                let zj = z.get(j).copied().unwrap_or_default();
                (zj - cj).norm() / self.eta <= 1.0 + tol
            })
        })
    }

    pub fn check_invariants(&self) -> CoveringInvariants {
        let tails = suffix_sums(&self.norms);
        let tail_ok = tails[self.j.min(self.norms.len())] < self.epsilon / 10.0;
        let eta_ok = if self.j == 0 {
            true
        } else {
            let head: f64 = self.norms.iter().take(self.j).sum();
            let expect = self.epsilon / (10.0 * head);
            (self.eta - expect).abs() <= 1e-12 * expect
        };
        CoveringInvariants {
            tail_ok,
            eta_ok,
            star_ok: star_norm_check(self).0,
        }
    }

    /// Structured-text summary.
    pub fn report(&self) -> String {
        let (ok, margin) = star_norm_check(self);
        format!(
            "epsilon = {}\nJ = {}\neta = {}\nM = {}\nstar_norm_sum = {}\nstar_norm_margin = {}\nstar_norm_ok = {}\n",
            self.epsilon,
            self.j,
            self.eta,
            self.num_centers(),
            self.star_norms.iter().sum::<f64>(),
            margin,
            ok
        )
    }

    /// Binary dump of the center vectors:
    /// magic `HWC1`, `u64` vector length, `u64` count, then `(re, im)` `f64` pairs, little endian.
    pub fn write_centers<W: Write>(&self, bx: &BoxParametrization, mut w: W) -> Result<(), BoxError> {
        w.write_all(b"HWC1")?;
        w.write_all(&(bx.offset().len() as u64).to_le_bytes())?;
        w.write_all(&(self.num_centers() as u64).to_le_bytes())?;
        for i in 0..self.num_centers() {
            for c in self.center(bx, i) {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// `Σ_j ‖ψ*_j‖ ≤ 2ε/10` and its slack.
pub fn star_norm_check(cov: &Covering) -> (bool, f64) {
    let margin = 0.2 * cov.epsilon - cov.star_norms.iter().sum::<f64>();
    (margin >= 0.0, margin)
}

/// Predicted net size `|disc net|^J`.
pub fn predicted_net_size(eta: f64, j: usize) -> f64 {
    (disc_net(eta).len() as f64).powi(j as i32)
}

/// Cut, net and retention steps for the given sample of `K` (parameter
/// coordinates of each sampled member).
pub fn build_covering(
    bx: &BoxParametrization,
    epsilon: f64,
    sample: &[Vec<Complex64>],
    opts: CoveringOptions,
) -> Result<Covering, BoxError> {
    let norms = bx.norms().to_vec();
    let j = tail_cut(&norms, epsilon)?;
    if j == 0 {
        return Ok(Covering {
            epsilon,
            j,
            eta: 1.0,
            center_params: vec![Vec::new()],
            star_norms: norms.clone(),
            norms,
        });
    }
    let eta = match opts.eta_override {
        Some(e) => e,
        None => net_spacing(&norms, j, epsilon)?,
    };
    if j > opts.j_cap {
        // avoid building a huge disc net just to report the estimate
        let per_disc = std::f64::consts::PI * (1.0 + eta).powi(2) / (2.0 * eta * eta);
        return Err(BoxError::TooManyCoordinates {
            j,
            cap: opts.j_cap,
            predicted: per_disc.max(1.0).powi(j as i32),
        });
    }
    let net = disc_net(eta);
    let predicted = (net.len() as f64).powi(j as i32);
    if let Some(limit) = opts.max_centers {
        if predicted > limit as f64 {
            return Err(BoxError::NetTooLarge { predicted, limit });
        }
    }
    // sup-metric closeness splits into independent per-coordinate conditions
    let tol = 1e-12;
    let mut kept: BTreeSet<Vec<usize>> = BTreeSet::new();
    for z in sample {
        let near: Vec<Vec<usize>> = (0..j)
            .map(|c| {
                let zc = z.get(c).copied().unwrap_or_default();
                net.iter()
                    .enumerate()
                    .filter(|(_, p)| (zc - **p).norm() <= eta * (1.0 + tol))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        if near.iter().any(|v| v.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; j];
        loop {
            kept.insert(idx.iter().zip(&near).map(|(&i, v)| v[i]).collect());
            let mut c = 0;
            while c < j {
                idx[c] += 1;
                if idx[c] < near[c].len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == j {
                break;
            }
        }
    }
    let center_params = kept
        .into_iter()
        .map(|tuple| tuple.into_iter().map(|k| net[k]).collect())
        .collect();
    let star_norms = norms
        .iter()
        .enumerate()
        .map(|(i, &n)| if i < j { eta * n } else { n })
        .collect();
    Ok(Covering {
        epsilon,
        j,
        eta,
        center_params,
        norms,
        star_norms,
    })
}

/// Box from nested orthonormal bases: `ψ_j = e_k φ_{k,l}` with
/// `j = 2^k + l − 1`, where `e_k` is the level-`k` approximation error
/// (typically `C 2^{-sk}`). Norms are Euclidean.
pub fn box_embedding(level_errors: &[f64], bases: &[Vec<Vec<f64>>]) -> Result<BoxParametrization, BoxError> {
    if level_errors.len() != bases.len() {
        return Err(BoxError::Dimension(format!(
            "{} level errors for {} levels",
            level_errors.len(),
            bases.len()
        )));
    }
    let dim = bases
        .first()
        .and_then(|b| b.first())
        .map(|v| v.len())
        .unwrap_or(0);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for (k, basis) in bases.iter().enumerate() {
        if basis.len() != 1 << k {
            return Err(BoxError::Basis(format!(
                "level {k} has {} vectors, expected {}",
                basis.len(),
                1 << k
            )));
        }
        if basis.iter().any(|v| v.len() != dim) {
            return Err(BoxError::Dimension(format!("level {k} vectors must have length {dim}")));
        }
        for (a, va) in basis.iter().enumerate() {
            for (b, vb) in basis.iter().enumerate().skip(a) {
                let expect = if a == b { 1.0 } else { 0.0 };
                let dev = (dot(va, vb) - expect).abs();
                if dev > 1e-8 {
                    return Err(BoxError::Basis(format!(
                        "level {k}: Gram entry ({}, {}) deviates by {dev:e}",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        if k > 0 {
            for (l, v) in bases[k - 1].iter().enumerate() {
                let mut r = v.clone();
                for phi in basis {
                    let c = dot(&r, phi);
                    for (ri, pi) in r.iter_mut().zip(phi) {
                        *ri -= c * pi;
                    }
                }
                let res = dot(&r, &r).sqrt();
                if res > 1e-8 {
                    return Err(BoxError::Basis(format!(
                        "level {} vector {} not in span of level {k} (residual {res:e})",
                        k - 1,
                        l + 1
                    )));
                }
            }
        }
    }
    let mut directions = Vec::new();
    for (basis, &err) in bases.iter().zip(level_errors) {
        for phi in basis {
            directions.push(phi.iter().map(|&v| err * v).collect());
        }
    }
    BoxParametrization::new(vec![0.0; dim], directions, NormKind::Euclidean)
}

/// `max_j j^s ‖ψ_j‖ / (2^s C)`; at most one when the box obeys the decay contract.
pub fn decay_ratio(norms: &[f64], s: f64, c: f64) -> f64 {
    norms
        .iter()
        .enumerate()
        .map(|(i, &n)| ((i + 1) as f64).powf(s) * n / (2f64.powf(s) * c))
        .fold(0.0, f64::max)
}
