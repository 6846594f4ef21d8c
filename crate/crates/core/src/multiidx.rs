//! Multi-index combinatorics.
//!
//! A [`MultiIndex`] is a finitely supported sequence `ν = (ν_1, ν_2, ...)` of
//! nonnegative integers, stored sparsely as sorted `(j, ν_j)` pairs with
//! `j ≥ 1` and `ν_j ≥ 1`. [`IndexSet`] is an insertion-ordered collection of
//! distinct multi-indices with an optional downward-closure flag.
//!
//! The operations here cover the index-side of sparse Taylor approximation:
//! multinomial counts `|ν|!/ν!`, layered enumeration of downward-closed sets
//! under a monotone a-priori weight, best n-term selection and the ℓ_p tail
//! estimate for sequences.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default cap on `|ν|` for multinomial evaluation.
pub const DEFAULT_DEGREE_CAP: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiIndexError {
    #[error("total degree {degree} exceeds cap {cap}")]
    DegreeLimit { degree: u32, cap: u32 },
    #[error("weight bound is not monotone: w({parent}) = {parent_weight} < w({child}) = {child_weight}")]
    NonMonotoneWeight {
        parent: MultiIndex,
        child: MultiIndex,
        parent_weight: f64,
        child_weight: f64,
    },
    #[error("invalid enumeration arguments: {0}")]
    InvalidArgument(String),
    #[error("exponent p = {0} outside (0, 1)")]
    Domain(f64),
    #[error("cannot parse multi-index '{0}'")]
    Parse(String),
}

/// Finitely supported sequence of nonnegative integers.
///
/// Coordinates are 1-based. Zero entries are never stored, so structural
/// equality coincides with equality of the underlying sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex {
    entries: Vec<(usize, u32)>,
}

impl MultiIndex {
    /// The zero index.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Unit index `e_j` (1-based).
    pub fn unit(j: usize) -> Self {
        assert!(j >= 1, "coordinates are 1-based");
        Self {
            entries: vec![(j, 1)],
        }
    }

    /// Builds an index from `(j, ν_j)` pairs. Zero values are dropped and
    /// repeated coordinates are summed.
    pub fn from_pairs<I: IntoIterator<Item = (usize, u32)>>(pairs: I) -> Self {
        let mut entries: Vec<(usize, u32)> = Vec::new();
        for (j, v) in pairs {
            assert!(j >= 1, "coordinates are 1-based");
            if v == 0 {
                continue;
            }
            match entries.binary_search_by_key(&j, |&(k, _)| k) {
                Ok(pos) => entries[pos].1 += v,
                Err(pos) => entries.insert(pos, (j, v)),
            }
        }
        Self { entries }
    }

    /// Builds an index from a dense vector `(ν_1, ..., ν_J)`.
    pub fn from_dense(dense: &[u32]) -> Self {
        Self::from_pairs(dense.iter().enumerate().map(|(i, &v)| (i + 1, v)))
    }

    /// Dense representation over coordinates `1..=len`.
    pub fn to_dense(&self, len: usize) -> Vec<u32> {
        let mut out = vec![0; len];
        for &(j, v) in &self.entries {
            if j <= len {
                out[j - 1] = v;
            }
        }
        out
    }

    /// Sorted `(j, ν_j)` pairs with `ν_j ≥ 1`.
    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    /// `ν_j`, zero when absent.
    pub fn get(&self, j: usize) -> u32 {
        self.entries
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest coordinate carrying a nonzero entry (0 for the zero index).
    pub fn max_coordinate(&self) -> usize {
        self.entries.last().map(|&(j, _)| j).unwrap_or(0)
    }

    /// `|ν| = Σ ν_j`.
    pub fn total_degree(&self) -> u32 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    /// `ν + e_j`.
    pub fn incremented(&self, j: usize) -> Self {
        let mut out = self.clone();
        match out.entries.binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => out.entries[pos].1 += 1,
            Err(pos) => out.entries.insert(pos, (j, 1)),
        }
        out
    }

    /// `ν − e_j`, or `None` when `ν_j = 0`.
    pub fn decremented(&self, j: usize) -> Option<Self> {
        let pos = self.entries.binary_search_by_key(&j, |&(k, _)| k).ok()?;
        let mut out = self.clone();
        if out.entries[pos].1 == 1 {
            out.entries.remove(pos);
        } else {
            out.entries[pos].1 -= 1;
        }
        Some(out)
    }

    /// Immediate predecessors `ν − e_j` for every `j` in the support.
    pub fn parents(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.entries
            .iter()
            .filter_map(move |&(j, _)| self.decremented(j))
    }

    /// Coordinatewise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.entries.iter().all(|&(j, v)| other.get(j) >= v)
    }

    /// Monomial `y^ν` for a real parameter vector (`y[j-1]` is coordinate `j`).
    /// Coordinates beyond `y.len()` are treated as zero.
    pub fn monomial(&self, y: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(j, v)| y.get(j - 1).copied().unwrap_or(0.0).powi(v as i32))
            .product()
    }

    /// Deterministic tie-break order: total degree ascending, then the sorted
    /// `(j, ν_j)` pair lists compared lexicographically.
    pub fn tie_order(&self, other: &MultiIndex) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return write!(f, "0");
        }
        for (i, &(j, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}:{v}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = MultiIndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "0" {
            return Ok(Self::zero());
        }
        let mut pairs = Vec::new();
        let mut last = 0usize;
        for part in s.split(',') {
            let (j, v) = part
                .split_once(':')
                .ok_or_else(|| MultiIndexError::Parse(s.to_string()))?;
            let j: usize = j
                .trim()
                .parse()
                .map_err(|_| MultiIndexError::Parse(s.to_string()))?;
            let v: u32 = v
                .trim()
                .parse()
                .map_err(|_| MultiIndexError::Parse(s.to_string()))?;
            if j <= last || v == 0 {
                return Err(MultiIndexError::Parse(s.to_string()));
            }
            last = j;
            pairs.push((j, v));
        }
        Ok(Self { entries: pairs })
    }
}

/// Total degree `|ν|`.
pub fn total_degree(nu: &MultiIndex) -> u32 {
    nu.total_degree()
}

/// Multinomial count `|ν|!/ν!`, exact while it fits below `2^63`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multinomial {
    Exact(u64),
    Approx(f64),
}

impl Multinomial {
    pub fn value(self) -> f64 {
        match self {
            Multinomial::Exact(v) => v as f64,
            Multinomial::Approx(v) => v,
        }
    }
}

/// `|ν|!/Π ν_j!` with the default degree cap.
pub fn factorial_ratio(nu: &MultiIndex) -> Result<Multinomial, MultiIndexError> {
    factorial_ratio_capped(nu, DEFAULT_DEGREE_CAP)
}

/// `|ν|!/Π ν_j!`, computed as a product of binomials `C(ν_1+...+ν_j, ν_j)`.
pub fn factorial_ratio_capped(nu: &MultiIndex, cap: u32) -> Result<Multinomial, MultiIndexError> {
    let degree = nu.total_degree();
    if degree > cap {
        return Err(MultiIndexError::DegreeLimit { degree, cap });
    }
    let limit = 1u128 << 63;
    let mut exact: Option<u128> = Some(1);
    let mut approx = 1.0f64;
    let mut running = 0u32;
    for &(_, v) in nu.entries() {
        running += v;
        let b = binomial(running, v);
        approx *= b as f64;
        exact = exact
            .and_then(|acc| acc.checked_mul(b))
            .filter(|&acc| acc < limit);
    }
    Ok(match exact {
        Some(v) => Multinomial::Exact(v as u64),
        None => Multinomial::Approx(approx),
    })
}

/// Binomial coefficient; exact for the degree range allowed by the cap.
fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Insertion-ordered set of distinct multi-indices.
#[derive(Debug, Clone, Default)]
pub struct IndexSet {
    members: Vec<MultiIndex>,
    positions: HashMap<MultiIndex, usize>,
    downward_closed: bool,
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members && self.downward_closed == other.downward_closed
    }
}

impl IndexSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from members, dropping duplicates. The downward-closure
    /// flag is computed, not assumed.
    pub fn from_members<I: IntoIterator<Item = MultiIndex>>(members: I) -> Self {
        let mut set = Self::new();
        for nu in members {
            set.insert(nu);
        }
        set.downward_closed = set.find_missing_parent().is_none();
        set
    }

    /// Inserts `nu` if absent; returns whether it was new. Clears the
    /// downward-closure flag, call [`IndexSet::refresh_closure`] to recompute.
    pub fn insert(&mut self, nu: MultiIndex) -> bool {
        if self.positions.contains_key(&nu) {
            return false;
        }
        self.positions.insert(nu.clone(), self.members.len());
        self.members.push(nu);
        self.downward_closed = false;
        true
    }

    pub fn refresh_closure(&mut self) {
        self.downward_closed = self.find_missing_parent().is_none();
    }

    pub fn is_downward_closed(&self) -> bool {
        self.downward_closed
    }

    pub fn contains(&self, nu: &MultiIndex) -> bool {
        self.positions.contains_key(nu)
    }

    pub fn position(&self, nu: &MultiIndex) -> Option<usize> {
        self.positions.get(nu).copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.members.iter()
    }

    pub fn members(&self) -> &[MultiIndex] {
        &self.members
    }

    /// Returns `(member, parent)` for the first member whose immediate parent
    /// is missing. Checking immediate parents suffices for the full `μ ≤ ν`
    /// closure property.
    pub fn find_missing_parent(&self) -> Option<(MultiIndex, MultiIndex)> {
        for nu in &self.members {
            for parent in nu.parents() {
                if !self.contains(&parent) {
                    return Some((nu.clone(), parent));
                }
            }
        }
        if !self.members.is_empty() && !self.contains(&MultiIndex::zero()) {
            return Some((self.members[0].clone(), MultiIndex::zero()));
        }
        None
    }

    /// Largest coordinate used by any member.
    pub fn max_coordinate(&self) -> usize {
        self.members.iter().map(|m| m.max_coordinate()).max().unwrap_or(0)
    }

    pub fn max_degree(&self) -> u32 {
        self.members.iter().map(|m| m.total_degree()).max().unwrap_or(0)
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// Layered enumeration of the downward-closed set of indices supported on
/// `{1..dim}` with `|ν| ≤ max_degree` and `weight(ν) ≥ threshold`.
///
/// Candidates of degree `k+1` are generated from accepted indices of degree
/// `k` and kept only if every parent was accepted. Each generated
/// parent/child pair is used to spot-check that `weight` is nonincreasing.
pub fn enumerate_indices<W>(
    dim: usize,
    max_degree: u32,
    weight: W,
    threshold: f64,
) -> Result<IndexSet, MultiIndexError>
where
    W: Fn(&MultiIndex) -> f64,
{
    if dim == 0 {
        return Err(MultiIndexError::InvalidArgument("dimension must be ≥ 1".into()));
    }
    if !(threshold >= 0.0) {
        return Err(MultiIndexError::InvalidArgument(format!(
            "threshold {threshold} must be ≥ 0"
        )));
    }
    let mut set = IndexSet::new();
    let zero = MultiIndex::zero();
    if weight(&zero) < threshold {
        set.downward_closed = true;
        return Ok(set);
    }
    let mut layer = vec![zero.clone()];
    set.insert(zero);
    for _ in 0..max_degree {
        let mut candidates: Vec<MultiIndex> = Vec::new();
        let mut seen: HashMap<MultiIndex, ()> = HashMap::new();
        for parent in &layer {
            let pw = weight(parent);
            // only extend at or after the last used coordinate to avoid duplicates
            let start = parent.max_coordinate().max(1);
            for j in 1..=dim {
                let child = parent.incremented(j);
                let cw = weight(&child);
                if cw > pw * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                    return Err(MultiIndexError::NonMonotoneWeight {
                        parent: parent.clone(),
                        child,
                        parent_weight: pw,
                        child_weight: cw,
                    });
                }
                if j < start {
                    continue;
                }
                if seen.insert(child.clone(), ()).is_none() {
                    candidates.push(child);
                }
            }
        }
        candidates.sort_by(|a, b| a.tie_order(b));
        let mut next = Vec::new();
        for child in candidates {
            if child.parents().all(|p| set.contains(&p)) && weight(&child) >= threshold {
                next.push(child);
            }
        }
        if next.is_empty() {
            break;
        }
        for nu in &next {
            set.insert(nu.clone());
        }
        layer = next;
    }
    set.downward_closed = true;
    Ok(set)
}

/// Sorts `(index, norm)` pairs by norm descending with the deterministic
/// tie-break of [`MultiIndex::tie_order`].
pub fn rank_by_norm(norms: &[(MultiIndex, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| {
        norms[b]
            .1
            .partial_cmp(&norms[a].1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| norms[a].0.tie_order(&norms[b].0))
    });
    order
}

/// Indices carrying the `n` largest norms.
pub fn n_term_select(norms: &[(MultiIndex, f64)], n: usize) -> IndexSet {
    let order = rank_by_norm(norms);
    let mut set = IndexSet::from_members(order.into_iter().take(n).map(|i| norms[i].0.clone()));
    set.refresh_closure();
    set
}

/// Best n-term tail of a sequence and its ℓ_p estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StechkinTail {
    pub tail_sum: f64,
    pub bound: f64,
}

impl StechkinTail {
    pub fn holds(&self) -> bool {
        self.tail_sum <= self.bound
    }
}

/// ℓ_p quasi-norm `(Σ |a_k|^p)^{1/p}`.
pub fn lp_quasi_norm<I: IntoIterator<Item = f64>>(values: I, p: f64) -> f64 {
    values
        .into_iter()
        .map(|v| v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Tail `Σ_{ν ∉ Λ_n} ‖v_ν‖` of the best n-term selection against
/// `‖(‖v_ν‖)‖_{ℓ_p} · n^{-(1/p - 1)}`.
pub fn stechkin_tail(
    norms: &[(MultiIndex, f64)],
    p: f64,
    n: usize,
) -> Result<StechkinTail, MultiIndexError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MultiIndexError::Domain(p));
    }
    if n == 0 {
        return Err(MultiIndexError::InvalidArgument("n must be ≥ 1".into()));
    }
    let order = rank_by_norm(norms);
    // summing smallest first keeps the tail accurate
    let tail_sum: f64 = order.iter().skip(n).rev().map(|&i| norms[i].1).sum();
    let bound = lp_quasi_norm(norms.iter().map(|(_, v)| *v), p) * (n as f64).powf(1.0 - 1.0 / p);
    Ok(StechkinTail { tail_sum, bound })
}

/// Same as [`stechkin_tail`] for a plain sequence.
pub fn stechkin_tail_seq(values: &[f64], p: f64, n: usize) -> Result<StechkinTail, MultiIndexError> {
    let norms: Vec<(MultiIndex, f64)> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| (MultiIndex::unit(k + 1), v))
        .collect();
    stechkin_tail(&norms, p, n)
}

/// Cumulative sums of `[n^t d_n]^p / n` for `n = 1, 2, ...` (`d_seq[0]` is `d_1`).
pub fn lorentz_partial_sums(d_seq: &[f64], t: f64, p: f64) -> Vec<f64> {
    let mut acc = 0.0;
    d_seq
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let n = (i + 1) as f64;
            acc += (n.powf(t) * d).powf(p) / n;
            acc
        })
        .collect()
}
