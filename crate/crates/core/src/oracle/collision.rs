//! Pointwise evaluation of the Landau collision operator for `γ = 0` and of
//! the reduced right-hand side.
//!
//! With `A(v) = ∫a(v−w)f(w)dw` and `b(v) = ∫a(v−w)∇f(w)dw` the operator
//! `Q(f,f) = ∇·(A∇f − b f)` expands to
//! `A_ij ∂_ij f + (∂_i A_ij)∂_j f − (∂_i b_i) f − b_i ∂_i f`, and
//! `Σ_i ∂_i a_ij(z) = −(d−1) z_j`, so every coefficient is a single
//! quadrature over `w` and no numerical differentiation is needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::angular::laplace_beltrami_from_jet;
use super::{Density, OracleError, QuadratureGrid};

/// Default relative tolerance of the `n` vs `n+8` node convergence test.
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-8;

/// Extra nodes per axis used by the convergence test.
pub const CONVERGENCE_EXTRA_NODES: usize = 8;

/// `a(z) = |z|^γ (|z|² Id − z⊗z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionKernel {
    pub gamma: f64,
}

impl Default for CollisionKernel {
    fn default() -> Self {
        CollisionKernel { gamma: 0.0 }
    }
}

impl CollisionKernel {
    /// Row-major `a(z)`.
    pub fn matrix(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        let r2: f64 = z.iter().map(|x| x * x).sum();
        let scale = if self.gamma == 0.0 { 1.0 } else { r2.sqrt().powf(self.gamma) };
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { r2 } else { 0.0 };
                a[i * d + j] = scale * (delta - z[i] * z[j]);
            }
        }
        a
    }
}

/// Values of `Q(f,f)` at a list of points with the convergence evidence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollisionEvaluation {
    pub values: Vec<f64>,
    pub nodes_per_axis: usize,
    pub check_nodes_per_axis: usize,
    /// `max_i |Q_n(v_i) − Q_{n+8}(v_i)|`
    pub max_delta: f64,
    /// Scale the delta is compared against: `max(max|Q|, max f(v_i))`.
    pub scale: f64,
    pub tolerance: f64,
    pub converged: bool,
}

fn collision_on_grid(f: &dyn Density, grid: &QuadratureGrid, points: &[Vec<f64>]) -> Vec<f64> {
    let d = f.dimension();
    let dm1 = (d - 1) as f64;
    // weighted samples W_q f(w_q) and W_q ∇f(w_q)
    let samples: Vec<(Vec<f64>, f64, Vec<f64>)> = grid
        .points()
        .zip(grid.plain_weights())
        .map(|(w, &wt)| {
            let mut g = vec![0.0; d];
            let mut h = vec![0.0; d * d];
            let fw = f.jet(w, &mut g, &mut h);
            (w.to_vec(), wt * fw, g.iter().map(|x| wt * x).collect())
        })
        .collect();
    points
        .par_iter()
        .map(|v| {
            let mut a_coef = vec![0.0; d * d];
            let mut d_coef = vec![0.0; d];
            let mut b_coef = vec![0.0; d];
            let mut c_coef = 0.0;
            let mut z = vec![0.0; d];
            for (w, wf, wg) in &samples {
                let mut r2 = 0.0;
                let mut zg = 0.0;
                for j in 0..d {
                    z[j] = v[j] - w[j];
                    r2 += z[j] * z[j];
                    zg += z[j] * wg[j];
                }
                for i in 0..d {
                    // (a(z)∇f(w))_i = |z|² ∂_i f − z_i (z·∇f)
                    b_coef[i] += r2 * wg[i] - z[i] * zg;
                    d_coef[i] -= dm1 * z[i] * wf;
                    for j in 0..d {
                        let delta = if i == j { r2 } else { 0.0 };
                        a_coef[i * d + j] += (delta - z[i] * z[j]) * wf;
                    }
                }
                c_coef -= dm1 * zg;
            }
            let mut grad = vec![0.0; d];
            let mut hess = vec![0.0; d * d];
            let fv = f.jet(v, &mut grad, &mut hess);
            let mut q = -c_coef * fv;
            for i in 0..d {
                q += (d_coef[i] - b_coef[i]) * grad[i];
                for j in 0..d {
                    q += a_coef[i * d + j] * hess[i * d + j];
                }
            }
            q
        })
        .collect()
}

/// `Q(f,f)(v)` for `γ = 0` at each point, using a grid of variance 2 with
/// `nodes_per_axis` and `nodes_per_axis + 8` nodes. The run is converged when
/// the two agree to `tol · max(max|Q|, max f)`.
pub fn eval_collision_direct(
    f: &dyn Density,
    nodes_per_axis: usize,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<CollisionEvaluation, OracleError> {
    let d = f.dimension();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(OracleError::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let coarse = QuadratureGrid::new(d, nodes_per_axis, 2.0)?;
    let fine = QuadratureGrid::new(d, nodes_per_axis + CONVERGENCE_EXTRA_NODES, 2.0)?;
    let values = collision_on_grid(f, &coarse, points);
    let check = collision_on_grid(f, &fine, points);
    let max_delta = values
        .iter()
        .zip(&check)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let max_q = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_f = points.iter().map(|p| f.value(p).abs()).fold(0.0, f64::max);
    let scale = max_q.max(max_f);
    Ok(CollisionEvaluation {
        values,
        nodes_per_axis,
        check_nodes_per_axis: nodes_per_axis + CONVERGENCE_EXTRA_NODES,
        max_delta,
        scale,
        tolerance: tol,
        converged: max_delta <= tol * scale,
    })
}

/// Largest off-diagonal entry of the second-moment matrix accepted by
/// [`eval_reduced_rhs_grid`].
pub const DIAGONAL_TOL: f64 = 1e-10;

/// `Σ_j (d − T_j) ∂_j² f + (d−1) ∇·(vf) + Δ_S f` at each point.
pub fn eval_reduced_rhs_grid(f: &dyn Density, t: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    let d = f.dimension();
    if t.len() != d {
        return Err(OracleError::DimensionMismatch {
            expected: d,
            got: t.len(),
        });
    }
    let s = f.second_moments();
    let mut max_off: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                max_off = max_off.max(s[(i, j)].abs());
            }
        }
    }
    if max_off > DIAGONAL_TOL {
        return Err(OracleError::NonDiagonalMoments(max_off));
    }
    let dm1 = (d - 1) as f64;
    Ok(points
        .par_iter()
        .map(|v| {
            let mut grad = vec![0.0; d];
            let mut hess = vec![0.0; d * d];
            let fv = f.jet(v, &mut grad, &mut hess);
            let mut out = 0.0;
            for j in 0..d {
                out += (d as f64 - t[j]) * hess[j * d + j];
                // ∇·(vf) = d f + v·∇f
                out += dm1 * (fv + v[j] * grad[j]);
            }
            out + laplace_beltrami_from_jet(v, &grad, &hess)
        })
        .collect())
}
