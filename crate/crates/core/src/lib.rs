//! Kolmogorov-width transfer experiments for parametric elliptic problems.

// `!(x > 0.0)` also rejects NaN; index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boxparam;
pub mod cli;
pub mod multiidx;
pub mod pde;
pub mod taylor;
pub mod widths;
