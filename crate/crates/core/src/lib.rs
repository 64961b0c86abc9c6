//! ℓp-norm regression by iteratively reweighted least squares.
//!
//! Solves `min_{x : Cx = d} ‖Ax − b‖_p` for any real `p ≥ 2` with a guaranteed
//! geometric rate, and ships the pieces needed to study it: random matrix and
//! k-NN graph instance generators, the graph p-Laplacian reduction, an
//! independent Newton-based optimality oracle, and a parameter sweep runner.

pub mod error;
pub mod instances;
pub mod linalg;
pub mod oracle;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use instances::{GraphInstance, Instance, RngSeed};
pub use linalg::{Constraints, Matrix};
pub use oracle::{reference_solve, verify_first_order, OptimalityCertificate};
pub use solver::{p_irls, ProblemInstance, SolveResult, SolverConfig, TraceEntry};
