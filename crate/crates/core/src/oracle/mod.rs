//! Independent quadrature evaluation of the collision operator, of the
//! reduced right-hand side and of the Hermite transform.
//!
//! Nothing here uses the assembled spectral operators except as the object
//! under test.

mod angular;
mod collision;
mod compare;
mod density;
mod hermite;
mod quadrature;

use thiserror::Error;

use crate::basis::BasisError;
use crate::evolution::EvolutionError;
use crate::moments::MomentError;

pub use angular::{
    angular_from_jet, laplace_beltrami_from_jet, laplace_beltrami_hessian_form, max_route_discrepancy,
};
pub use collision::{
    eval_collision_direct, eval_reduced_rhs_grid, CollisionEvaluation, CollisionKernel,
    CONVERGENCE_EXTRA_NODES, DEFAULT_CONVERGENCE_TOL, DIAGONAL_TOL,
};
pub use compare::{compare_reduction, compare_spectral_vs_direct, relative_l2, DiscrepancyReport};
pub use density::{Density, FluctuationDensity, MixtureDensity};
pub use hermite::{
    hermite_functions, hermite_polynomials, hermite_transform, hermite_transform_fn, mixture_coefficients,
    psi, psi_jet, synthesize, HermiteJet, TransformResult, ALIASING_THRESHOLD,
};
pub use quadrature::{gauss_hermite, QuadratureGrid};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dimension must be positive, got {0}")]
    Dimension(usize),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{nodes} nodes per axis, at least {required} required")]
    TooFewNodes { nodes: usize, required: usize },
    #[error("grid variance {0} is not usable here")]
    InvalidVariance(f64),
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("second-moment matrix is not diagonal (largest off-diagonal {0:e})")]
    NonDiagonalMoments(f64),
    #[error("quadrature not converged: node-refinement change {max_delta:e} exceeds {tol:e} × {scale:e}")]
    NonConverged { max_delta: f64, scale: f64, tol: f64 },
    #[error("fluctuation has weight {0:e} on the top two levels")]
    NotBandLimited(f64),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}
