use num_complex::Complex64;

use super::banded::Scalar;
use super::PdeError;

/// Uniform grid on the unit interval or unit square with homogeneous
/// Dirichlet boundary. Only interior nodes carry unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

/// Edge between two nodes; `None` marks a boundary node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub midpoint: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self, PdeError> {
        if !(dim == 1 || dim == 2) {
            return Err(PdeError::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 2 {
            return Err(PdeError::InvalidGrid(format!("need N ≥ 2 interior nodes, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// `h^m`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn num_nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn num_edges(&self) -> usize {
        match self.dim {
            1 => self.n + 1,
            _ => 2 * self.n * (self.n + 1),
        }
    }

    /// Half-bandwidth of the lexicographically ordered stiffness matrix.
    pub fn bandwidth(&self) -> usize {
        match self.dim {
            1 => 1,
            _ => self.n,
        }
    }

    /// Coordinates of interior node `k`.
    pub fn node(&self, k: usize) -> [f64; 2] {
        let h = self.h();
        match self.dim {
            1 => [(k + 1) as f64 * h, 0.0],
            _ => [((k % self.n) + 1) as f64 * h, ((k / self.n) + 1) as f64 * h],
        }
    }

    /// All edges: in 2D the x-directed edges row by row, then the y-directed ones.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n;
        let h = self.h();
        let mut out = Vec::with_capacity(self.num_edges());
        match self.dim {
            1 => {
                for e in 0..=n {
                    out.push(Edge {
                        a: e.checked_sub(1),
                        b: (e < n).then_some(e),
                        midpoint: [(e as f64 + 0.5) * h, 0.0],
                    });
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..=n {
                        out.push(Edge {
                            a: i.checked_sub(1).map(|i| i + j * n),
                            b: (i < n).then_some(i + j * n),
                            midpoint: [(i as f64 + 0.5) * h, (j + 1) as f64 * h],
                        });
                    }
                }
                for j in 0..=n {
                    for i in 0..n {
                        out.push(Edge {
                            a: j.checked_sub(1).map(|j| i + j * n),
                            b: (j < n).then_some(i + j * n),
                            midpoint: [(i + 1) as f64 * h, (j as f64 + 0.5) * h],
                        });
                    }
                }
            }
        }
        out
    }
}

/// Grid function on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    values: Vec<T>,
}

pub type DiscreteField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Scalar> Field<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self, PdeError> {
        if values.len() != grid.num_nodes() {
            return Err(PdeError::LengthMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.num_nodes()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// `self + c · other`.
    pub fn add_scaled(&mut self, c: T, other: &Field<T>) {
        assert_eq!(self.grid, other.grid);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl DiscreteField {
    /// Nodal interpolant of `f`.
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: Grid, f: F) -> Self {
        Self {
            grid,
            values: (0..grid.num_nodes()).map(|k| f(grid.node(k))).collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexField {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Diffusion coefficient sampled at edge midpoints.
///
/// Assembly is linear in these values, so affine parametrizations of the
/// coefficient map to affine families of operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient<T = f64> {
    grid: Grid,
    values: Vec<T>,
}

pub type ComplexCoefficient = Coefficient<Complex64>;

impl<T: Scalar> Coefficient<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self, PdeError> {
        if values.len() != grid.num_edges() {
            return Err(PdeError::LengthMismatch {
                expected: grid.num_edges(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: T) -> Self {
        Self {
            grid,
            values: vec![c; grid.num_edges()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Sup norm over the sampling points.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re()).fold(f64::INFINITY, f64::min)
    }

    pub fn add_scaled<U: Scalar>(&mut self, c: T, other: &Coefficient<U>)
    where
        T: From<U>,
    {
        assert_eq!(self.grid, other.grid);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * T::from(b);
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Coefficient<f64> {
    /// Samples `f` at edge midpoints.
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: Grid, f: F) -> Self {
        Self {
            grid,
            values: grid.edges().iter().map(|e| f(e.midpoint)).collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexCoefficient {
        Coefficient {
            grid: self.grid,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// `mean + Σ_j y_j ψ_j`.
    pub fn affine(mean: &Coefficient, directions: &[Coefficient], y: &[f64]) -> Coefficient {
        let mut a = mean.clone();
        for (psi, &yj) in directions.iter().zip(y) {
            if yj != 0.0 {
                a.add_scaled(yj, psi);
            }
        }
        a
    }
}

impl ComplexCoefficient {
    /// `mean + Σ_j z_j ψ_j` for complex parameters.
    pub fn affine_complex(mean: &Coefficient, directions: &[Coefficient], z: &[Complex64]) -> Self {
        let mut a = mean.to_complex();
        for (psi, &zj) in directions.iter().zip(z) {
            a.add_scaled(zj, psi);
        }
        a
    }
}

/// Closed-form load presets.
pub fn load_preset(name: &str, grid: Grid) -> Result<DiscreteField, PdeError> {
    use std::f64::consts::PI;
    match name {
        "const1" => Ok(DiscreteField::from_fn(grid, |_| 1.0)),
        "sinpi" => Ok(match grid.dim() {
            1 => DiscreteField::from_fn(grid, |x| (PI * x[0]).sin()),
            _ => DiscreteField::from_fn(grid, |x| (PI * x[0]).sin() * (PI * x[1]).sin()),
        }),
        other => Err(PdeError::UnknownPreset(other.to_string())),
    }
}

/// Plateau bump on `[0, 1]`: zero at the ends, one on `[1/4, 3/4]`, linear ramps.
fn plateau(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    (4.0 * t).min(4.0 * (1.0 - t)).clamp(0.0, 1.0)
}

/// Disjoint-support plateau bumps `ψ_j = scale · j^{-decay} · χ_j`, `j = 1..=count`.
///
/// In 1D the bumps tile `[0, 1]` by equal subintervals; in 2D they tile a
/// `q × q` array of cells with `q = ⌈√count⌉`. Every plateau must contain a
/// sampling point so that `sup |ψ_j| = scale · j^{-decay}` holds exactly.
pub fn bumps(grid: Grid, count: usize, decay: f64, scale: f64) -> Result<Vec<Coefficient>, PdeError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let cells = match grid.dim() {
        1 => count,
        _ => (count as f64).sqrt().ceil() as usize,
    };
    let width = 1.0 / cells as f64;
    if width / 2.0 < grid.h() {
        return Err(PdeError::InvalidGrid(format!(
            "grid too coarse for {count} bumps: plateau width {} < h = {}",
            width / 2.0,
            grid.h()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for j in 1..=count {
        let amp = scale * (j as f64).powf(-decay);
        let (cx, cy) = match grid.dim() {
            1 => (j - 1, 0),
            _ => ((j - 1) % cells, (j - 1) / cells),
        };
        let chi = Coefficient::from_fn(grid, |p| {
            let tx = plateau((p[0] - cx as f64 * width) / width);
            match grid.dim() {
                1 => tx,
                _ => tx * plateau((p[1] - cy as f64 * width) / width),
            }
        });
        debug_assert_eq!(chi.sup_norm(), 1.0);
        out.push(chi.scaled(amp));
    }
    Ok(out)
}
