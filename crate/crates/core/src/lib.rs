//! Operator algebra, discretization and solver for degenerate Hessian
//! quotient equations `σ_k(U)/σ_l(U) = f(x, u)` with `U = γ Δu I ∓ D²u`
//! and a semilinear oblique boundary condition `β·Du = φ(x, u)`.

pub mod error;
pub mod grid;
pub mod hessop;
pub mod linalg;
pub mod oracle;
pub mod sampling;
pub mod solver;
pub mod symcone;
pub mod verify;

pub use error::{Error, Result};
