//! Numerical machinery for comparison principles of nonlocal degenerate
//! elliptic equations
//!
//! ```text
//! F(x, u, Du, D²u) - ∫ [u(x+z) - u(x) - 1_{|z|≤1} <z, Du(x)>] q(dz) = 0   in Ω,
//! u = g                                                                     on Ωᶜ,
//! ```
//!
//! on uniform Cartesian grids in one or two dimensions. The crate is `no_std`
//! (it needs `alloc`); enable the `parallel` feature for rayon-backed sweeps.
//!
//! Modules, bottom-up:
//!
//! * [`grid`]: grids with an exterior halo, grid functions, discrete jets.
//! * [`levy`]: finite atomic quadratures of a Lévy measure.
//! * [`nonlocal`]: the compensated nonlocal term and its variants.
//! * [`moreau`]: sup/inf-convolutions and semiconvexity certificates.
//! * [`viscosity`]: approximate viscosity residuals, the doubling engine,
//!   Jensen-type perturbed maxima and Neumann residuals.
//! * [`solver`]: a monotone damped Picard solver for the Dirichlet problem.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub mod field;
pub mod grid;
pub mod levy;
pub mod moreau;
pub mod nonlocal;
pub mod solver;
pub mod viscosity;

pub use crate::error::{Error, Result};
pub use crate::field::{ModelField, SmoothField};
pub use crate::grid::{discrete_jet, is_matrix_ordered, Grid, GridFunction, Jet, Node, Point, SymMat, MAX_DIM};
pub use crate::levy::{build_quadrature, Atom, LevyQuadrature, MeasureSpec, RadialSpec};
pub use crate::nonlocal::{eval_nonlocal, eval_nonlocal_anchored, eval_nonlocal_restricted, eval_nonlocal_split, Side};
pub use crate::solver::{
    comparison_experiment, convergence_study, scheme_residual, solve_dirichlet, SchemeVariant, SolveParams,
};
pub use crate::viscosity::{FSpec, Hamiltonian, Tolerances};
