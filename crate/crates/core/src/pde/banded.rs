//! Symmetric banded storage and an unpivoted `LDLᵀ` factorization.
//!
//! Works for real symmetric positive definite matrices and for complex
//! symmetric (not Hermitian) matrices whose Hermitian part is positive
//! definite. In the latter case every leading principal block is nonsingular,
//! so the factorization exists without pivoting.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Field scalar used by the discrete solvers.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Mul<f64, Output = Self>
    + 'static
{
    const IS_COMPLEX: bool;
    fn zero() -> Self;
    fn from_real(v: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn modulus_sqr(self) -> f64;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn from_real(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
}

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`.
///
/// Entry `(i, j)` with `i - bw ≤ j ≤ i` lives at `data[i * (bw + 1) + (bw - (i - j))]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymBand<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v = *v * c;
        }
    }

    /// `self += c · other` for matrices with identical shape.
    pub fn axpy<U: Scalar>(&mut self, c: T, other: &SymBand<U>)
    where
        T: From<U>,
    {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * T::from(b);
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let offset = self.bw - (i - lo);
            let mut acc = row[self.bw] * x[i];
            for (k, j) in (lo..i).enumerate() {
                let a = row[offset + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
        y
    }

    /// `‖A‖_∞` (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).modulus()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Factorizes into `L D Lᵀ` (plain transpose, no conjugation).
    pub fn factor(&self) -> Result<BandLdl<T>, FactorError> {
        let n = self.n;
        let bw = self.bw;
        let mut f = self.clone();
        let mut diag = vec![T::zero(); n];
        let mut scale = 0.0f64;
        for i in 0..n {
            scale = scale.max(self.get(i, i).modulus());
        }
        // work[j] holds L(i, j) * D(j) while processing row i
        let mut work = vec![T::zero(); bw + 1];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let mut s = f.data[f.slot(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= work[k - lo] * f.data[f.slot(j, k)];
                }
                work[j - lo] = s;
            }
            let mut d = f.data[f.slot(i, i)];
            for j in lo..i {
                let lij = work[j - lo] / diag[j];
                d -= lij * work[j - lo];
                let s = f.slot(i, j);
                f.data[s] = lij;
            }
            if d.modulus() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(FactorError::Singular { row: i, pivot: d.modulus() });
            }
            diag[i] = d;
            let s = f.slot(i, i);
            f.data[s] = d;
        }
        Ok(BandLdl { factors: f, diag })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("zero pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },
}

/// `L D Lᵀ` factors of a [`SymBand`].
#[derive(Debug, Clone)]
pub struct BandLdl<T> {
    factors: SymBand<T>,
    diag: Vec<T>,
}

impl<T: Scalar> BandLdl<T> {
    pub fn dim(&self) -> usize {
        self.factors.n
    }

    pub fn pivots(&self) -> &[T] {
        &self.diag
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.factors.n;
        let bw = self.factors.bw;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.factors.data[self.factors.slot(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] = x[i] / self.diag[i];
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let l = self.factors.data[self.factors.slot(i, j)];
                x[j] -= l * xi;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(a: &SymBand<f64>, x: &[f64]) -> Vec<f64> {
        (0..a.dim())
            .map(|i| (0..a.dim()).map(|j| a.get(i, j) * x[j]).sum())
            .collect()
    }

    #[test]
    fn apply_matches_dense() {
        let mut a = SymBand::<f64>::zeros(6, 2);
        for i in 0..6 {
            a.add(i, i, 5.0 + i as f64);
            if i >= 1 {
                a.add(i, i - 1, -1.0 - 0.1 * i as f64);
            }
            if i >= 2 {
                a.add(i, i - 2, 0.3);
            }
        }
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin() + 0.5).collect();
        let y = a.apply(&x);
        let z = dense_apply(&a, &x);
        for (p, q) in y.iter().zip(&z) {
            assert!((p - q).abs() < 1e-14);
        }
        let sol = a.factor().unwrap().solve(&y);
        for (p, q) in sol.iter().zip(&x) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_symmetric_solve() {
        let mut a = SymBand::<Complex64>::zeros(5, 1);
        for i in 0..5 {
            a.add(i, i, Complex64::new(2.0, 0.7));
            if i > 0 {
                a.add(i, i - 1, Complex64::new(-1.0, 0.2));
            }
        }
        let x: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let b = a.apply(&x);
        let sol = a.factor().unwrap().solve(&b);
        for (p, q) in sol.iter().zip(&x) {
            assert!((p - q).norm() < 1e-13);
        }
    }

    #[test]
    fn singular_detected() {
        let mut a = SymBand::<f64>::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(FactorError::Singular { row: 1, .. })));
    }
}
