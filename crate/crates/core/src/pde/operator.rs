//! Finite-difference diffusion operators `v ↦ −div(a∇v)` and their solves.
//!
//! The matrix is the standard 3-point (1D) / 5-point (2D) stencil with the
//! coefficient taken at edge midpoints, scaled by `1/h²`, so `A u = f` holds
//! with `f` the nodal load. The discrete bilinear form is `h^m · vᵀ A u`,
//! which makes the unit-coefficient energy norm a discrete `H¹₀` seminorm.

use super::banded::{BandLdl, Scalar, SymBand};
use super::grid::{Coefficient, Field, Grid};
use super::PdeError;

/// Assembled stiffness operator for one coefficient.
#[derive(Debug, Clone)]
pub struct DiscreteOperator<T> {
    grid: Grid,
    matrix: SymBand<T>,
}

impl<T: Scalar> DiscreteOperator<T> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn matrix(&self) -> &SymBand<T> {
        &self.matrix
    }

    pub fn apply(&self, v: &Field<T>) -> Field<T> {
        Field::new(self.grid, self.matrix.apply(v.values())).expect("length preserved")
    }

    /// Discrete form `h^m · Σ_i v_i (A u)_i` (bilinear, no conjugation).
    pub fn form(&self, u: &Field<T>, v: &Field<T>) -> T {
        let au = self.matrix.apply(u.values());
        let mut acc = T::zero();
        for (&a, &b) in au.iter().zip(v.values()) {
            acc += a * b;
        }
        acc * self.grid.cell_volume()
    }
}

/// Assembles `−div(a∇·)` with edge-midpoint coefficients.
pub fn assemble<T: Scalar>(a: &Coefficient<T>) -> DiscreteOperator<T> {
    let grid = a.grid();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut m = SymBand::zeros(grid.num_nodes(), grid.bandwidth());
    for (edge, &c) in grid.edges().iter().zip(a.values()) {
        let w = c * inv_h2;
        if let Some(p) = edge.a {
            m.add(p, p, w);
        }
        if let Some(q) = edge.b {
            m.add(q, q, w);
        }
        if let (Some(p), Some(q)) = (edge.a, edge.b) {
            m.add(q, p, -w);
        }
    }
    DiscreteOperator { grid, matrix: m }
}

/// Factorized operator for repeated solves.
#[derive(Debug, Clone)]
pub struct DiffusionSolver<T> {
    op: DiscreteOperator<T>,
    ldl: BandLdl<T>,
}

impl<T: Scalar> DiffusionSolver<T> {
    /// Assembles and factorizes; rejects coefficients with `min Re(a) ≤ 0`.
    pub fn new(a: &Coefficient<T>) -> Result<Self, PdeError> {
        let min = a.min_re();
        if !(min > 0.0) {
            return Err(PdeError::NotElliptic { min });
        }
        let op = assemble(a);
        let ldl = op.matrix.factor()?;
        Ok(Self { op, ldl })
    }

    pub fn operator(&self) -> &DiscreteOperator<T> {
        &self.op
    }

    pub fn grid(&self) -> Grid {
        self.op.grid
    }

    pub fn solve(&self, rhs: &Field<T>) -> Result<Field<T>, PdeError> {
        if rhs.grid() != self.op.grid {
            return Err(PdeError::GridMismatch);
        }
        Field::new(self.op.grid, self.ldl.solve(rhs.values()))
    }

    /// Relative residual `‖A u − f‖_∞ / (‖A‖_∞ ‖u‖_∞ + ‖f‖_∞)`.
    pub fn relative_residual(&self, u: &Field<T>, f: &Field<T>) -> f64 {
        let r = self.op.apply(u).sub(f);
        let denom = self.op.matrix.norm_inf() * u.sup_norm() + f.sup_norm();
        if denom == 0.0 {
            0.0
        } else {
            r.sup_norm() / denom
        }
    }
}

/// Solves `−div(a∇u) = f` with homogeneous Dirichlet data.
pub fn solve_diffusion<T: Scalar>(a: &Coefficient<T>, f: &Field<T>) -> Result<Field<T>, PdeError> {
    if a.grid() != f.grid() {
        return Err(PdeError::GridMismatch);
    }
    DiffusionSolver::new(a)?.solve(f)
}

/// Scaled edge differences `h^{m/2 - 1} (v_b − v_a)`: a factor `G` with
/// `GᵀG = h^m A₁`, so Euclidean geometry of `G v` is the energy geometry.
pub fn energy_coordinates<T: Scalar>(v: &Field<T>) -> Vec<T> {
    let grid = v.grid();
    let w = grid.cell_volume().sqrt() / grid.h();
    let vals = v.values();
    grid.edges()
        .iter()
        .map(|e| {
            let a = e.a.map(|k| vals[k]).unwrap_or(T::zero());
            let b = e.b.map(|k| vals[k]).unwrap_or(T::zero());
            (b - a) * w
        })
        .collect()
}

/// `sqrt(h^m vᴴ A₁ v)`, the discrete `H¹₀` norm.
pub fn energy_norm<T: Scalar>(v: &Field<T>) -> f64 {
    energy_coordinates(v)
        .iter()
        .map(|c| c.modulus_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Real energy inner product `h^m uᵀ A₁ v`.
pub fn energy_inner(u: &Field<f64>, v: &Field<f64>) -> f64 {
    energy_coordinates(u)
        .iter()
        .zip(energy_coordinates(v))
        .map(|(a, b)| a * b)
        .sum()
}

/// Dual norm of a nodal load: energy norm of its unit-coefficient solve.
pub fn dual_norm<T: Scalar>(f: &Field<T>) -> Result<f64, PdeError> {
    let unit = Coefficient::constant(f.grid(), T::from_real(1.0));
    Ok(energy_norm(&solve_diffusion(&unit, f)?))
}

/// `B = ‖f‖_{Y'} / r`.
pub fn apriori_bound(f: &Field<f64>, r: f64) -> Result<f64, PdeError> {
    if !(r > 0.0) {
        return Err(PdeError::Domain(format!("ellipticity floor r = {r} must be > 0")));
    }
    Ok(dual_norm(f)? / r)
}

/// Derivative of `a ↦ u(a)` in direction `w`: solves `A(a) δ = −A(w) u(a)`.
pub fn frechet_apply<T: Scalar>(
    a: &Coefficient<T>,
    u_a: &Field<T>,
    w: &Coefficient<T>,
) -> Result<Field<T>, PdeError> {
    frechet_apply_with(&DiffusionSolver::new(a)?, u_a, w)
}

/// [`frechet_apply`] against an existing factorization of `A(a)`.
pub fn frechet_apply_with<T: Scalar>(
    solver: &DiffusionSolver<T>,
    u_a: &Field<T>,
    w: &Coefficient<T>,
) -> Result<Field<T>, PdeError> {
    if w.grid() != solver.grid() || u_a.grid() != solver.grid() {
        return Err(PdeError::GridMismatch);
    }
    let mut rhs = assemble(w).apply(u_a);
    for v in rhs.values_mut() {
        *v = -*v;
    }
    solver.solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::{load_preset, DiscreteField};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn g1(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    #[test]
    fn unit_stencil_1d() {
        let g = g1(3);
        let op = assemble(&Coefficient::constant(g, 1.0));
        let h2 = g.h() * g.h();
        for i in 0..3 {
            for j in 0..3 {
                let expect = match (i as i64 - j as i64).abs() {
                    0 => 2.0 / h2,
                    1 => -1.0 / h2,
                    _ => 0.0,
                };
                assert_eq!(op.matrix().get(i, j), expect);
            }
        }
    }

    #[test]
    fn linear_in_coefficient() {
        let g = Grid::new(2, 4).unwrap();
        let one = assemble(&Coefficient::constant(g, 1.0));
        let c = assemble(&Coefficient::constant(g, 2.5));
        for i in 0..g.num_nodes() {
            for j in 0..g.num_nodes() {
                assert!((c.matrix().get(i, j) - 2.5 * one.matrix().get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn variable_coefficient_form_is_second_order() {
        // oracle: ∫₀¹ (1+x)(1−2x)² dx = 1/2 (quadrature by hand)
        let exact = 0.5;
        let mut errs = Vec::new();
        for n in [31, 63, 127] {
            let g = g1(n);
            let a = Coefficient::from_fn(g, |x| 1.0 + x[0]);
            let u = DiscreteField::from_fn(g, |x| x[0] * (1.0 - x[0]));
            errs.push((assemble(&a).form(&u, &u) - exact).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn diffusion_examples() {
        let g = g1(63);
        let f = load_preset("const1", g).unwrap();
        let u1 = solve_diffusion(&Coefficient::constant(g, 1.0), &f).unwrap();
        // centered differences are exact on quadratics
        let exact = DiscreteField::from_fn(g, |x| x[0] * (1.0 - x[0]) / 2.0);
        assert!(u1.sub(&exact).sup_norm() < 1e-12);

        let u2 = solve_diffusion(&Coefficient::constant(g, 2.0), &f).unwrap();
        for (a, b) in u2.values().iter().zip(u1.values()) {
            assert!((a - 0.5 * b).abs() < 1e-14);
        }

        let zero = solve_diffusion(&Coefficient::constant(g, 1.0), &DiscreteField::zeros(g)).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn residual_is_tiny() {
        for grid in [g1(127), Grid::new(2, 20).unwrap()] {
            let a = Coefficient::from_fn(grid, |x| 1.0 + 0.5 * (3.0 * x[0]).sin() * x[1].cos());
            let f = load_preset("sinpi", grid).unwrap();
            let s = DiffusionSolver::new(&a).unwrap();
            let u = s.solve(&f).unwrap();
            assert!(s.relative_residual(&u, &f) <= 1e-12);
        }
    }

    #[test]
    fn not_elliptic_reports_minimum() {
        let g = g1(8);
        let a = Coefficient::from_fn(g, |x| x[0] - 0.5);
        match solve_diffusion(&a, &DiscreteField::zeros(g)) {
            Err(PdeError::NotElliptic { min }) => assert!((min - (0.5 / 9.0 - 0.5)).abs() < 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn norms_converge_to_continuum_values() {
        let g = g1(255);
        assert_eq!(energy_norm(&DiscreteField::zeros(g)), 0.0);
        let f = load_preset("const1", g).unwrap();
        // ∫ (1/2 − x)² = 1/12 ; the discrete value agrees to O(h²)
        assert!((dual_norm(&f).unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-5);
        let s = DiscreteField::from_fn(g, |x| (PI * x[0]).sin());
        assert!((energy_norm(&s) - PI / 2f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn apriori_examples() {
        let g = g1(255);
        let f = load_preset("const1", g).unwrap();
        let b1 = apriori_bound(&f, 1.0).unwrap();
        assert!((b1 - 0.288675).abs() < 1e-5);
        assert!((apriori_bound(&f, 2.0).unwrap() - b1 / 2.0).abs() < 1e-15);
        assert_eq!(apriori_bound(&DiscreteField::zeros(g), 1.0).unwrap(), 0.0);
        assert!(apriori_bound(&f, 0.0).is_err());
    }

    #[test]
    fn energy_form_matches_coordinates() {
        let g = Grid::new(2, 6).unwrap();
        let u = DiscreteField::from_fn(g, |x| x[0] * x[1] * (1.0 - x[0]));
        let form = assemble(&Coefficient::constant(g, 1.0)).form(&u, &u);
        assert!((form - energy_norm(&u).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn frechet_examples() {
        let g = g1(31);
        let a = Coefficient::constant(g, 1.0);
        let f = load_preset("const1", g).unwrap();
        let u = solve_diffusion(&a, &f).unwrap();
        let zero = frechet_apply(&a, &u, &Coefficient::constant(g, 0.0)).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        // u(1 + t) = u(1)/(1 + t) has derivative −u(1) at t = 0
        let d = frechet_apply(&a, &u, &Coefficient::constant(g, 1.0)).unwrap();
        for (p, q) in d.values().iter().zip(u.values()) {
            assert!((p + q).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_solve_matches_real_on_real_data() {
        let g = Grid::new(2, 7).unwrap();
        let a = Coefficient::from_fn(g, |x| 1.0 + x[0] * x[1]);
        let f = load_preset("sinpi", g).unwrap();
        let ur = solve_diffusion(&a, &f).unwrap();
        let uc = solve_diffusion(&a.to_complex(), &f.to_complex()).unwrap();
        for (p, q) in ur.values().iter().zip(uc.values()) {
            assert!((Complex64::new(*p, 0.0) - q).norm() < 1e-13);
        }
    }

    #[test]
    fn maximum_principle_spot_check() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for grid in [g1(40), Grid::new(2, 12).unwrap()] {
            for _ in 0..10 {
                let vals: Vec<f64> = (0..grid.num_edges()).map(|_| rng.random_range(0.1..3.0)).collect();
                let a = Coefficient::new(grid, vals).unwrap();
                let f = DiscreteField::new(
                    grid,
                    (0..grid.num_nodes()).map(|_| rng.random_range(0.0..1.0)).collect(),
                )
                .unwrap();
                let u = solve_diffusion(&a, &f).unwrap();
                assert!(u.values().iter().all(|&v| v >= 0.0));
            }
        }
    }
}
