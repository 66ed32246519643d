//! Hermite spectral solver for the spatially homogeneous Landau equation with
//! Maxwellian molecules near equilibrium, plus a quadrature oracle and a
//! verification battery.
//!
//! The state is the fluctuation `g` in `f = μ + √μ g`, expanded in the
//! orthonormal tensor Hermite functions `Ψ_α` and truncated at total degree `N`.

pub mod basis;
pub mod io;
pub mod operators;
pub mod diagnostics;
pub mod evolution;
pub mod moments;
pub mod oracle;
pub mod verify;
