//! Numerical toolkit for weakly coupled systems of first-order Hamilton-Jacobi
//! equations on the torus,
//!
//! ```text
//! ∂u_i/∂t + H_i(x, Du_i) + Σ_j d_ij(x) u_j = 0,    H_i(x, p) = F_i(x, p) − f_i(x),
//! ```
//!
//! together with the stationary, discounted and ergodic problems attached to it
//! and the piecewise-deterministic switching control problem whose value
//! functions solve it.
//!
//! Module map:
//!
//! * [`coupling`]: monotonicity, M-matrix splitting, irreducibility, Perron
//!   vectors and matrix exponentials of coupling matrices.
//! * [`model`]: Hamiltonian families, problem data, assumption audits and the
//!   sets F, D_i, A.
//! * [`grid`]: periodic grids, difference stencils and monotone numerical
//!   Hamiltonians.
//! * [`evolutive`]: explicit time marching of the evolutive system.
//! * [`ergodic`]: discounted problems and the vanishing-discount limit.
//! * [`longtime`]: large-time convergence diagnostics.
//! * [`control`]: Monte Carlo and dynamic programming for the switching
//!   control problem.
//! * [`io`]: CSV and binary field formats.

pub mod control;
pub mod coupling;
pub mod ergodic;
mod error;
pub mod evolutive;
pub mod grid;
pub mod io;
pub mod longtime;
pub mod model;

pub use error::{Error, Result};
