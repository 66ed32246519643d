//! Analytic angular derivatives, evaluated from pointwise jets.
//!
//! `Δ_S F = Σ_{j<k} (v_j∂_k − v_k∂_j)² F`, expanded pair by pair as
//! `v_j²F_kk + v_k²F_jj − 2v_jv_kF_jk − v_jF_j − v_kF_k`.

use super::hermite::{psi_jet, HermiteJet};
use crate::operators::SparseOperator;

/// `(v_j∂_k − v_k∂_j)F`.
pub fn angular_from_jet(v: &[f64], grad: &[f64], j: usize, k: usize) -> f64 {
    v[j] * grad[k] - v[k] * grad[j]
}

/// `Δ_S F` from the pairwise expansion.
pub fn laplace_beltrami_from_jet(v: &[f64], grad: &[f64], hess: &[f64]) -> f64 {
    let d = v.len();
    let mut out = 0.0;
    for j in 0..d {
        for k in j + 1..d {
            out += v[j] * v[j] * hess[k * d + k] + v[k] * v[k] * hess[j * d + j]
                - 2.0 * v[j] * v[k] * hess[j * d + k]
                - v[j] * grad[j]
                - v[k] * grad[k];
        }
    }
    out
}

/// `|v|²ΔF − vᵀ(∇²F)v − (d−1) v·∇F`, an equivalent closed form.
pub fn laplace_beltrami_hessian_form(v: &[f64], grad: &[f64], hess: &[f64]) -> f64 {
    let d = v.len();
    let r2: f64 = v.iter().map(|x| x * x).sum();
    let lap: f64 = (0..d).map(|i| hess[i * d + i]).sum();
    let mut vhv = 0.0;
    for i in 0..d {
        for k in 0..d {
            vhv += v[i] * hess[i * d + k] * v[k];
        }
    }
    let vg: f64 = v.iter().zip(grad).map(|(a, b)| a * b).sum();
    r2 * lap - vhv - (d - 1) as f64 * vg
}

fn jets_at(v: &[f64], n: usize) -> Vec<HermiteJet> {
    v.iter().map(|&x| HermiteJet::new(x, n)).collect()
}

/// `max |(M Ψ_α)(v) − (oracle Ψ_α)(v)|` over every basis function and point,
/// where `M` is a degree-preserving assembled operator and `oracle` evaluates
/// the differential definition from the jet of `Ψ_α`.
pub fn max_route_discrepancy(
    op: &SparseOperator,
    points: &[Vec<f64>],
    oracle: impl Fn(&[f64], &[f64], &[f64]) -> f64,
) -> f64 {
    let basis = op.basis();
    let d = basis.dimension();
    let n = basis.max_degree();
    let mut worst: f64 = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let tr = op.transpose();
    for v in points {
        let jets = jets_at(v, n);
        let psi: Vec<f64> = basis
            .ordering()
            .iter()
            .map(|a| psi_jet(a.entries(), &jets, &mut grad, &mut hess))
            .collect();
        for (col, alpha) in basis.ordering().iter().enumerate() {
            psi_jet(alpha.entries(), &jets, &mut grad, &mut hess);
            let analytic = oracle(v, &grad, &hess);
            // column `col` of M is row `col` of Mᵀ
            let assembled: f64 = tr.row(col).map(|(row, m)| m * psi[row]).sum();
            worst = worst.max((analytic - assembled).abs());
        }
    }
    worst
}
