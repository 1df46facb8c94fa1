//! Constrained minimal weighted-energy problems with external fields.
//!
//! Given a positive definite kernel `κ`, a finite set `Σ`, a weight `g > 0`,
//! an external field `f` and an upper constraint `σ`, the crate computes the
//! equilibrium measure
//!
//! ```text
//! λ = argmin { ‖ν‖² + 2⟨f, ν⟩ :  0 ≤ ν ≤ σ,  ⟨g, ν⟩ = 1 }
//! ```
//!
//! and checks the properties that characterize it: the optimality
//! certificate, the interval `[ℓ, L]` of levels splitting the variational
//! inequalities for `W = κ_λ + f`, capacitary distributions, and the
//! behaviour of `λ` along monotone families of sets and constraints.
//!
//! Modules, bottom-up: [`geometry`] (point clouds), [`kernels`] (kernel
//! matrices), [`energy`] (measures, fields, problems), [`solver`],
//! [`verifier`], [`convergence`], and [`builtin`] scenarios.

// NaN has to fail parameter checks, which `!(x > 0.0)` does and `x <= 0.0` does not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod convergence;
pub mod energy;
pub mod error;
pub mod ext_real;
pub mod geometry;
pub mod kernels;
pub mod solver;
pub mod verifier;

pub use energy::{DiscreteMeasure, FieldSpec, Problem};
pub use error::{Error, Result};
pub use geometry::{PointCloud, SubsetFamily};
pub use kernels::{KernelKind, KernelMatrix, KernelSpec};
pub use solver::{solve, Solution, SolverOptions};
