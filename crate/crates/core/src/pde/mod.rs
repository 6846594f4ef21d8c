//! Discrete elliptic machinery on uniform grids of the unit interval/square.

pub mod banded;
pub mod grid;
pub mod io;
pub mod operator;
pub mod semilinear;

use thiserror::Error;

pub use banded::{FactorError, Scalar};
pub use grid::{
    bumps, load_preset, Coefficient, ComplexCoefficient, ComplexField, DiscreteField, Field, Grid,
};
pub use operator::{
    apriori_bound, assemble, dual_norm, energy_coordinates, energy_inner, energy_norm,
    frechet_apply, frechet_apply_with, solve_diffusion, DiffusionSolver, DiscreteOperator,
};
pub use semilinear::{coercivity_check, solve_semilinear, CoercivityReport, NewtonOptions, SemilinearSolution};

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("coefficient not elliptic: min Re(a) = {min}")]
    NotElliptic { min: f64 },
    #[error("factorization failed: {0}")]
    Factor(#[from] FactorError),
    #[error("Newton did not converge; residual history {residuals:?}")]
    Divergence { residuals: Vec<f64> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("array file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
