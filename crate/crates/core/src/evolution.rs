//! Reduced fluctuation dynamics and its fixed-step integrator.
//!
//! In the diagonalizing frame the fluctuation obeys
//!
//! ```text
//! ∂_t g = −K g − e^{−4dt} Σ_j α_j [ (A_{+,j})² g + v_j² μ^{1/2} ],
//! K = (d−1)(ℋ − d/2) − Δ_S,
//! ```
//!
//! with `v_j² μ^{1/2} = √2 Ψ_{2e_j} + Ψ_0`. The `Ψ_0` parts cancel because
//! `Σ α_j = 0`, so only the `Ψ_{2e_j}` sources are kept.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisTruncation, CoeffVector};
use crate::operators::{OperatorError, OperatorSet, SparseOperator, Symmetry};

/// Largest tolerated `|Σ α_j|` when assembling.
pub const ALPHA_SUM_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("reduced dynamics need max degree at least 3, got {0}")]
    TruncationTooSmall(usize),
    #[error("anisotropies must sum to zero, got Σα = {0:e}")]
    AlphaSum(f64),
    #[error("expected {expected} anisotropies, got {got}")]
    AlphaLength { expected: usize, got: usize },
    #[error("invalid integrator setting: {0}")]
    InvalidConfig(String),
    #[error("dt = {dt} exceeds the stability cap {cap}")]
    StabilityCap { dt: f64, cap: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("fractional power must lie in (0, 1], got {0}")]
    InvalidPower(f64),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("semigroup generator must be diagonal")]
    NotDiagonal,
    #[error("generator has negative eigenvalue {0} so a fractional power is undefined")]
    NegativeSpectrum(f64),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Right-hand side of the reduced equation on a fixed truncation.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    basis: Arc<BasisTruncation>,
    autonomous: SparseOperator,
    inflow: Vec<SparseOperator>,
    combined_inflow: SparseOperator,
    alpha: Vec<f64>,
    /// Positions of `Ψ_{2e_j}` with weight `−√2 α_j`.
    source: Vec<(usize, f64)>,
    decay_rate: f64,
}

/// Build the reduced system from freshly assembled operators.
pub fn assemble_reduced_system(
    basis: &Arc<BasisTruncation>,
    alpha: &[f64],
) -> Result<ReducedSystem, EvolutionError> {
    ReducedSystem::from_operators(&OperatorSet::assemble(basis)?, alpha)
}

impl ReducedSystem {
    pub fn from_operators(ops: &OperatorSet, alpha: &[f64]) -> Result<Self, EvolutionError> {
        let basis = ops.basis.clone();
        let d = basis.dimension();
        if basis.max_degree() < 3 {
            return Err(EvolutionError::TruncationTooSmall(basis.max_degree()));
        }
        if alpha.len() != d {
            return Err(EvolutionError::AlphaLength {
                expected: d,
                got: alpha.len(),
            });
        }
        let sum: f64 = alpha.iter().sum();
        if !(sum.abs() <= ALPHA_SUM_TOL) {
            return Err(EvolutionError::AlphaSum(sum));
        }
        let inflow = (0..d)
            .map(|j| ops.raise[j].matmul(&ops.raise[j]))
            .collect::<Result<Vec<_>, _>>()?;
        let mut combined = SparseOperator::from_triplets(basis.clone(), Vec::new(), Symmetry::General)?;
        for (op, &a) in inflow.iter().zip(alpha) {
            combined = combined.lincomb(1.0, op, a)?;
        }
        let source = (0..d)
            .map(|j| {
                let mut e = vec![0u32; d];
                e[j] = 2;
                let pos = basis.position_of(&e).expect("degree 2 is inside the truncation");
                (pos, -SQRT_2 * alpha[j])
            })
            .collect();
        Ok(ReducedSystem {
            basis,
            autonomous: ops.reduced_generator.clone(),
            inflow,
            combined_inflow: combined,
            alpha: alpha.to_vec(),
            source,
            decay_rate: 4.0 * d as f64,
        })
    }

    pub fn basis(&self) -> &Arc<BasisTruncation> {
        &self.basis
    }

    pub fn autonomous_part(&self) -> &SparseOperator {
        &self.autonomous
    }

    /// `(A_{+,j})²` for each axis.
    pub fn inflow_ops(&self) -> &[SparseOperator] {
        &self.inflow
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `(position of Ψ_{2e_j}, −√2 α_j)` pairs.
    pub fn source_modes(&self) -> &[(usize, f64)] {
        &self.source
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    /// `out = RHS(t, c)`.
    pub fn rhs_into(&self, t: f64, c: &[f64], out: &mut [f64]) {
        self.autonomous.apply_into(c, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        let decay = (-self.decay_rate * t).exp();
        self.combined_inflow.apply_add_into(-decay, c, out);
        for &(pos, w) in &self.source {
            out[pos] += decay * w;
        }
    }

    pub fn rhs(&self, t: f64, c: &CoeffVector) -> Result<CoeffVector, EvolutionError> {
        if **c.basis() != *self.basis {
            return Err(BasisError::BasisMismatch.into());
        }
        let mut out = CoeffVector::zeros(self.basis.clone());
        self.rhs_into(t, c.values(), out.values_mut());
        Ok(out)
    }

    /// Upper bound on the spectral radius of the right-hand side Jacobian,
    /// `(d−1)N + N(N+d−2) + 4d sup|α_j| √((N+1)(N+2))`.
    pub fn spectral_radius_bound(&self) -> f64 {
        let d = self.basis.dimension() as f64;
        let n = self.basis.max_degree() as f64;
        let sup = self.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        (d - 1.0) * n + n * (n + d - 2.0) + 4.0 * d * sup * ((n + 1.0) * (n + 2.0)).sqrt()
    }
}

/// Fixed-step classical RK4 settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record every `output_every`-th step.
    pub output_every: usize,
    /// Stability cap is `dt ≤ safety / λ_max`.
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    2.5
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, output_every: usize) -> Self {
        IntegratorConfig {
            dt,
            t_final,
            output_every,
            safety: default_safety(),
        }
    }

    /// Number of steps, rounded so the final time is within `dt/2` of `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive and finite");
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be non-negative and finite");
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1");
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            return bad("safety must be positive and finite");
        }
        if self.steps() % self.output_every != 0 {
            return Err(EvolutionError::InvalidConfig(format!(
                "output_every = {} does not divide the step count {}",
                self.output_every,
                self.steps()
            )));
        }
        Ok(())
    }
}

/// Sampled solution.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CoeffVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &CoeffVector)> {
        self.times.last().copied().zip(self.states.last())
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &CoeffVector)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// Classical RK4 with step times `k·dt`. The initial state is always recorded.
pub fn integrate(
    system: &ReducedSystem,
    g0: &CoeffVector,
    config: &IntegratorConfig,
) -> Result<Trajectory, EvolutionError> {
    config.validate()?;
    if **g0.basis() != *system.basis {
        return Err(BasisError::BasisMismatch.into());
    }
    let cap = config.safety / system.spectral_radius_bound();
    if config.dt > cap {
        return Err(EvolutionError::StabilityCap { dt: config.dt, cap });
    }
    let n = g0.len();
    let dt = config.dt;
    let steps = config.steps();
    let mut y = g0.values().to_vec();
    if !y.iter().all(|x| x.is_finite()) {
        return Err(EvolutionError::NonFinite { step: 0 });
    }
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut times = vec![0.0];
    let mut states = vec![g0.clone()];
    for step in 1..=steps {
        let t = (step - 1) as f64 * dt;
        system.rhs_into(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        system.rhs_into(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        system.rhs_into(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        system.rhs_into(t + dt, &tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !y.iter().all(|x| x.is_finite()) {
            return Err(EvolutionError::NonFinite { step });
        }
        if step % config.output_every == 0 {
            times.push(step as f64 * dt);
            states.push(CoeffVector::new(system.basis.clone(), y.clone())?);
        }
    }
    Ok(Trajectory { times, states })
}

/// `e^{−t G^s} g_0` for a diagonal generator `G`.
pub fn exact_semigroup(
    generator: &SparseOperator,
    g0: &CoeffVector,
    t: f64,
    s: f64,
) -> Result<CoeffVector, EvolutionError> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(EvolutionError::InvalidPower(s));
    }
    if !(t >= 0.0) {
        return Err(EvolutionError::NegativeTime(t));
    }
    if !generator.is_diagonal() {
        return Err(EvolutionError::NotDiagonal);
    }
    if **g0.basis() != **generator.basis() {
        return Err(BasisError::BasisMismatch.into());
    }
    let diag = generator.diagonal_values();
    if s < 1.0 {
        if let Some(&neg) = diag.iter().find(|&&l| l < 0.0) {
            return Err(EvolutionError::NegativeSpectrum(neg));
        }
    }
    let values = g0
        .values()
        .iter()
        .zip(&diag)
        .map(|(c, &l)| c * (-t * if s == 1.0 { l } else { l.powf(s) }).exp())
        .collect();
    Ok(CoeffVector::new(g0.basis().clone(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::operators::build_harmonic;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_alpha_gives_linear_flow() {
        let b = enumerate_basis(2, 5).unwrap();
        let sys = assemble_reduced_system(&b, &[0.0, 0.0]).unwrap();
        let g = CoeffVector::from_entries(b.clone(), [(&[1u32, 1][..], 1.0), (&[3, 0][..], 0.5)]).unwrap();
        let expect = sys.autonomous_part().apply(&g).unwrap().scaled(-1.0);
        for t in [0.0, 0.3] {
            assert_eq!(sys.rhs(t, &g).unwrap().values(), expect.values());
        }
    }

    #[test]
    fn source_at_zero_state() {
        let b = enumerate_basis(2, 3).unwrap();
        let sys = assemble_reduced_system(&b, &[0.2, -0.2]).unwrap();
        let out = sys.rhs(0.0, &CoeffVector::zeros(b.clone())).unwrap();
        assert_abs_diff_eq!(out.get(&[2, 0]), -SQRT_2 * 0.2, epsilon = 1e-16);
        assert_abs_diff_eq!(out.get(&[0, 2]), SQRT_2 * 0.2, epsilon = 1e-16);
        assert_eq!(out.get(&[0, 0]), 0.0);
    }

    #[test]
    fn ground_state_inflow_matches_source_pattern() {
        let b = enumerate_basis(2, 4).unwrap();
        let sys = assemble_reduced_system(&b, &[0.2, -0.2]).unwrap();
        let psi0 = CoeffVector::unit(b.clone(), &[0, 0]).unwrap();
        let zero = sys.rhs(0.0, &CoeffVector::zeros(b.clone())).unwrap();
        let with = sys.rhs(0.0, &psi0).unwrap();
        let inflow = with.sub(&zero).unwrap();
        // (A_{+,j})²Ψ_0 = √2 Ψ_{2e_j}, so the inflow equals the source contribution
        assert!(inflow.sub(&zero).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn assembly_errors() {
        let b = enumerate_basis(2, 2).unwrap();
        assert!(matches!(
            assemble_reduced_system(&b, &[0.0, 0.0]),
            Err(EvolutionError::TruncationTooSmall(2))
        ));
        let b = enumerate_basis(2, 3).unwrap();
        assert!(matches!(
            assemble_reduced_system(&b, &[0.1, 0.0]),
            Err(EvolutionError::AlphaSum(_))
        ));
        assert!(matches!(
            assemble_reduced_system(&b, &[0.0]),
            Err(EvolutionError::AlphaLength { .. })
        ));
    }

    #[test]
    fn inflow_raises_degree_by_two() {
        let b = enumerate_basis(3, 5).unwrap();
        let sys = assemble_reduced_system(&b, &[0.1, -0.05, -0.05]).unwrap();
        for op in sys.inflow_ops() {
            assert_eq!(op.degree_shift(), Some(2));
        }
    }

    #[test]
    fn equilibrium_stays_zero() {
        let b = enumerate_basis(2, 6).unwrap();
        let sys = assemble_reduced_system(&b, &[0.0, 0.0]).unwrap();
        let traj = integrate(&sys, &CoeffVector::zeros(b.clone()), &IntegratorConfig::new(0.01, 0.5, 10)).unwrap();
        assert_eq!(traj.len(), 6);
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
        assert_abs_diff_eq!(traj.times[5], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn integrator_config_checks() {
        let b = enumerate_basis(2, 10).unwrap();
        let sys = assemble_reduced_system(&b, &[0.0, 0.0]).unwrap();
        let g = CoeffVector::zeros(b.clone());
        assert!(matches!(
            integrate(&sys, &g, &IntegratorConfig::new(0.1, 1.0, 1)),
            Err(EvolutionError::StabilityCap { .. })
        ));
        assert!(matches!(
            integrate(&sys, &g, &IntegratorConfig::new(0.001, 0.01, 3)),
            Err(EvolutionError::InvalidConfig(_))
        ));
        assert!(integrate(&sys, &g, &IntegratorConfig::new(-1.0, 1.0, 1)).is_err());
    }

    #[test]
    fn non_finite_state_reports_step() {
        let b = enumerate_basis(2, 3).unwrap();
        let sys = assemble_reduced_system(&b, &[0.0, 0.0]).unwrap();
        let mut g = CoeffVector::zeros(b.clone());
        g.values_mut()[3] = f64::NAN;
        assert!(matches!(
            integrate(&sys, &g, &IntegratorConfig::new(0.01, 0.1, 1)),
            Err(EvolutionError::NonFinite { step: 0 })
        ));
        g.values_mut()[3] = f64::MAX;
        assert!(matches!(
            integrate(&sys, &g, &IntegratorConfig::new(0.01, 0.1, 1)),
            Err(EvolutionError::NonFinite { step: 1 })
        ));
    }

    #[test]
    fn semigroup_examples() {
        let b = enumerate_basis(2, 4).unwrap();
        let h = build_harmonic(&b);
        let g = CoeffVector::unit(b.clone(), &[1, 1]).unwrap();
        assert_eq!(exact_semigroup(&h, &g, 0.0, 1.0).unwrap(), g);
        let out = exact_semigroup(&h, &g, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(out.get(&[1, 1]), (-3.0f64).exp(), epsilon = 1e-16);
        let g = CoeffVector::unit(b.clone(), &[2, 1]).unwrap();
        let out = exact_semigroup(&h, &g, 0.7, 0.5).unwrap();
        assert_abs_diff_eq!(out.get(&[2, 1]), (-0.7 * 4f64.sqrt()).exp(), epsilon = 1e-16);
        assert!(exact_semigroup(&h, &g, 1.0, 0.0).is_err());
        assert!(exact_semigroup(&h, &g, 1.0, 1.5).is_err());
        assert!(exact_semigroup(&h, &g, -1.0, 1.0).is_err());
    }
}
