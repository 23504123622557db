//! Verification laboratory for one-frequency quasi-periodic block Jacobi operators.
//!
//! The crate assembles the operators and their Dirichlet restrictions,
//! computes determinants, minors and Green's functions, checks the upper and
//! lower determinant bounds numerically, and detects Anderson localization
//! through eigenvector decay rates.

pub mod campaign;
pub mod config;
pub mod determinant;
pub mod error;
pub mod fixtures;
pub mod green;
pub mod linalg;
pub mod localization;
pub mod minors;
pub mod operator;
pub mod report;
pub mod torus;

pub use error::{LabError, Result};
pub use operator::{golden_mean, BlockIndex, BlockSeq, DirichletMatrix, OperatorSpec};
pub use torus::{CirclePoint, TrigMatrixPoly};
