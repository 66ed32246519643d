//! Cross-validation of the spectral right-hand side against direct
//! quadrature of the collision operator.

use serde::{Deserialize, Serialize};

use super::collision::{eval_collision_direct, eval_reduced_rhs_grid, CollisionEvaluation};
use super::hermite::{psi, synthesize};
use super::{Density, FluctuationDensity, OracleError, QuadratureGrid};
use crate::basis::CoeffVector;
use crate::evolution::ReducedSystem;

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)` in the discrete L² norm with weights
/// `w`; zero when the denominator vanishes.
pub fn relative_l2(a: &[f64], b: &[f64], w: &[f64], floor: f64) -> f64 {
    let norm = |x: &mut dyn Iterator<Item = f64>| -> f64 { x.sum::<f64>().sqrt() };
    let diff = norm(&mut a.iter().zip(b).zip(w).map(|((x, y), w)| w * (x - y).powi(2)));
    let na = norm(&mut a.iter().zip(w).map(|(x, w)| w * x * x));
    let nb = norm(&mut b.iter().zip(w).map(|(x, w)| w * x * x));
    let scale = na.max(nb).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Outcome of comparing two pointwise evaluations on an evaluation grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub points: Vec<Vec<f64>>,
    /// Spectral (or reduced-form) values.
    pub reference: Vec<f64>,
    /// Direct quadrature values.
    pub direct: Vec<f64>,
    pub reference_norm: f64,
    pub direct_norm: f64,
    /// Denominator floor: the quadrature tolerance times the norm of `f/√μ`.
    pub floor: f64,
    pub relative_discrepancy: f64,
    pub collision: CollisionEvaluation,
}

fn weighted_norm(a: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

fn finish(
    eval_grid: &QuadratureGrid,
    f: &dyn Density,
    reference: Vec<f64>,
    direct: Vec<f64>,
    collision: CollisionEvaluation,
) -> Result<DiscrepancyReport, OracleError> {
    if !collision.converged {
        return Err(OracleError::NonConverged {
            max_delta: collision.max_delta,
            scale: collision.scale,
            tol: collision.tolerance,
        });
    }
    let w = eval_grid.plain_weights();
    let zero = vec![0u32; f.dimension()];
    let data: Vec<f64> = eval_grid.points().map(|v| f.value(v) / psi(&zero, v)).collect();
    let floor = collision.tolerance * weighted_norm(&data, w);
    Ok(DiscrepancyReport {
        points: eval_grid.points().map(|p| p.to_vec()).collect(),
        reference_norm: weighted_norm(&reference, w),
        direct_norm: weighted_norm(&direct, w),
        floor,
        relative_discrepancy: relative_l2(&reference, &direct, w, floor),
        reference,
        direct,
        collision,
    })
}

/// Compare `RHS(0, g_0)` synthesized on `eval_grid` with
/// `Q(f,f)/√μ` for `f = μ + √μ g_0`, the collision operator evaluated by
/// quadrature with `nodes_per_axis` nodes. `g_0` must vanish on the top two
/// levels so the spectral right-hand side is not truncated.
pub fn compare_spectral_vs_direct(
    g0: &CoeffVector,
    system: &ReducedSystem,
    eval_grid: &QuadratureGrid,
    nodes_per_axis: usize,
    tol: f64,
) -> Result<DiscrepancyReport, OracleError> {
    let basis = g0.basis();
    let n = basis.max_degree();
    let norms = g0.level_norms();
    let top = norms[n - 1].hypot(norms[n]);
    if top > 0.0 {
        return Err(OracleError::NotBandLimited(top));
    }
    if eval_grid.dimension() != basis.dimension() {
        return Err(OracleError::DimensionMismatch {
            expected: basis.dimension(),
            got: eval_grid.dimension(),
        });
    }
    let rhs = system.rhs(0.0, g0)?;
    let reference = synthesize(&rhs, eval_grid.points());
    let f = FluctuationDensity::new(g0)?;
    let points: Vec<Vec<f64>> = eval_grid.points().map(|p| p.to_vec()).collect();
    let collision = eval_collision_direct(&f, nodes_per_axis, &points, tol)?;
    let zero = vec![0u32; basis.dimension()];
    let direct = points
        .iter()
        .zip(&collision.values)
        .map(|(v, q)| q / psi(&zero, v))
        .collect();
    finish(eval_grid, &f, reference, direct, collision)
}

/// Compare the reduced form `Σ(d−T_j)∂_j²f + (d−1)∇·(vf) + Δ_S f` with the
/// directly evaluated collision operator, both weighted by `1/√μ`.
pub fn compare_reduction(
    f: &dyn Density,
    t: &[f64],
    eval_grid: &QuadratureGrid,
    nodes_per_axis: usize,
    tol: f64,
) -> Result<DiscrepancyReport, OracleError> {
    let points: Vec<Vec<f64>> = eval_grid.points().map(|p| p.to_vec()).collect();
    let reduced = eval_reduced_rhs_grid(f, t, &points)?;
    let collision = eval_collision_direct(f, nodes_per_axis, &points, tol)?;
    let zero = vec![0u32; f.dimension()];
    let weight: Vec<f64> = points.iter().map(|v| psi(&zero, v)).collect();
    let reference = reduced.iter().zip(&weight).map(|(r, w)| r / w).collect();
    let direct = collision.values.iter().zip(&weight).map(|(q, w)| q / w).collect();
    finish(eval_grid, f, reference, direct, collision)
}
