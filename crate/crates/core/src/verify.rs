//! The invariant battery behind the `verify` command.
//!
//! Every check produces a [`CheckResult`] carrying the measured quantity and
//! the tolerance it was held to. Reference values come from the quadrature
//! oracle or from closed forms, never from the operators under test.

use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{binomial, enumerate_basis, BasisTruncation, CoeffVector, MultiIndex};
use crate::diagnostics::{certify_run, fit_level_decay, DiagnosticsError, MIN_FIT_LEVELS};
use crate::evolution::{integrate, IntegratorConfig, ReducedSystem};
use crate::moments::{
    compute_alpha, extract_moments, prepare_initial_data, GaussianComponent, GaussianMixtureSpec,
    MomentState,
};
use crate::operators::{
    build_laplace_beltrami, collisional_invariants, kernel_basis, subspace_sine, symmetric_spectrum,
    OperatorSet, SparseOperator, DEFAULT_KERNEL_TOL,
};
use crate::oracle::{
    compare_reduction, compare_spectral_vs_direct, hermite_transform_fn, laplace_beltrami_from_jet,
    max_route_discrepancy, mixture_coefficients, psi, synthesize, MixtureDensity, QuadratureGrid,
    DEFAULT_CONVERGENCE_TOL,
};

/// Deliberate defects used to confirm that the battery can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Assemble everything downstream of `Δ_S` with `−Δ_S`.
    FlipLaplaceBeltramiSign,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid verify configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub dimension: usize,
    pub truncation: usize,
    pub seed: u64,
    /// Number of random initial data in the certification check.
    pub random_runs: usize,
    pub random_max_norm: f64,
    pub dt: f64,
    pub output_every: usize,
    pub moment_t_final: f64,
    pub certification_t_final: f64,
    pub eigenmode_t_final: f64,
    pub smoothing_t_final: f64,
    /// Largest degree in the `Δ_S` route comparison.
    pub route_max_degree: usize,
    pub oracle_truncation: usize,
    pub oracle_nodes: usize,
    /// Nodes per axis of the variance-1 grid the oracle compares on.
    pub oracle_eval_nodes: usize,
    #[serde(default)]
    pub fault: Option<Fault>,
}

impl VerifyConfig {
    /// Default suite for `d = 2` or `d = 3`.
    pub fn for_dimension(d: usize) -> Self {
        let (truncation, oracle_truncation, oracle_nodes, oracle_eval_nodes) = if d <= 2 {
            (16, 20, 64, 24)
        } else {
            (10, 8, 32, 10)
        };
        VerifyConfig {
            dimension: d,
            truncation,
            seed: 0,
            random_runs: 10,
            random_max_norm: 0.3,
            dt: 1e-3,
            output_every: 10,
            moment_t_final: 1.0,
            certification_t_final: 2.0,
            eigenmode_t_final: 1.0,
            smoothing_t_final: 0.5,
            route_max_degree: 8,
            oracle_truncation,
            oracle_nodes,
            oracle_eval_nodes,
            fault: None,
        }
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: String| Err(VerifyError::InvalidConfig(m));
        if !(2..=3).contains(&self.dimension) {
            return bad(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if self.truncation < 4 {
            return bad(format!("truncation must be at least 4, got {}", self.truncation));
        }
        if self.oracle_truncation < 4 {
            return bad(format!("oracle_truncation must be at least 4, got {}", self.oracle_truncation));
        }
        if self.oracle_eval_nodes < self.oracle_truncation + 1 {
            return bad(format!(
                "oracle_eval_nodes must exceed oracle_truncation, got {} ≤ {}",
                self.oracle_eval_nodes, self.oracle_truncation
            ));
        }
        if self.oracle_nodes == 0 || self.route_max_degree == 0 {
            return bad("oracle_nodes and route_max_degree must be positive".into());
        }
        if !(self.random_max_norm > 0.0) {
            return bad("random_max_norm must be positive".into());
        }
        for (name, t) in [
            ("dt", self.dt),
            ("moment_t_final", self.moment_t_final),
            ("certification_t_final", self.certification_t_final),
            ("eigenmode_t_final", self.eigenmode_t_final),
            ("smoothing_t_final", self.smoothing_t_final),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {t}"));
            }
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub skipped: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: measured <= tolerance,
            skipped: false,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    /// Passes when `measured ≥ tolerance`.
    pub fn at_least(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            passed: measured >= tolerance,
            ..Self::at_most(name, measured, tolerance, detail)
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            skipped: true,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: reason.into(),
        }
    }

    pub fn errored(name: &str, err: impl std::fmt::Display) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            skipped: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    /// Deviations from the default tolerances or skipped checks, with reasons.
    pub notes: Vec<String>,
    pub checks: Vec<CheckResult>,
    /// Wall-clock seconds per check; not part of the deterministic output.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

type Checks = Vec<CheckResult>;

struct Suite<'a> {
    config: &'a VerifyConfig,
    checks: Checks,
    notes: Vec<String>,
    timings: Vec<(String, f64)>,
}

impl Suite<'_> {
    fn run(&mut self, group: &str, f: impl FnOnce(&mut Checks, &mut Vec<String>)) {
        let start = Instant::now();
        let before = self.checks.len();
        f(&mut self.checks, &mut self.notes);
        let secs = start.elapsed().as_secs_f64();
        info!("{group}: {} checks in {secs:.2} s", self.checks.len() - before);
        self.timings.push((group.to_string(), secs));
    }
}

fn assemble(basis: &Arc<BasisTruncation>, fault: Option<Fault>) -> Result<OperatorSet, String> {
    let ls = build_laplace_beltrami(basis).map_err(|e| e.to_string())?;
    let ls = match fault {
        Some(Fault::FlipLaplaceBeltramiSign) => ls.scaled(-1.0),
        None => ls,
    };
    OperatorSet::assemble_with(basis, ls).map_err(|e| e.to_string())
}

/// `g_0 = ε√2 (Ψ_{2e_0} − Ψ_{2e_1})`, so `α = (2ε, −2ε, 0, …)`.
pub fn anisotropic_data(basis: &Arc<BasisTruncation>, eps: f64) -> CoeffVector {
    let d = basis.dimension();
    let c = eps * std::f64::consts::SQRT_2;
    let a = MultiIndex::unit(d, 0, 2);
    let b = MultiIndex::unit(d, 1, 2);
    CoeffVector::from_entries(basis.clone(), [(a.entries(), c), (b.entries(), -c)])
        .expect("degree-2 indices exist for N ≥ 2")
}

/// Random fluctuation with zero mass, momentum, energy and off-diagonal
/// second moments, and norm in `(max_norm/2, max_norm]`.
pub fn random_admissible_g0(basis: &Arc<BasisTruncation>, rng: &mut impl Rng, max_norm: f64) -> CoeffVector {
    let d = basis.dimension();
    loop {
        let mut values: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut diag = Vec::with_capacity(d);
        for (p, alpha) in basis.ordering().iter().enumerate() {
            if alpha.degree() < 2 || (alpha.degree() == 2 && alpha.entries().iter().all(|&a| a <= 1)) {
                values[p] = 0.0;
            } else if alpha.degree() == 2 {
                diag.push(p);
            }
        }
        let mean = diag.iter().map(|&p| values[p]).sum::<f64>() / d as f64;
        for &p in &diag {
            values[p] -= mean;
        }
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        let target = max_norm * rng.random_range(0.5..=1.0);
        for v in &mut values {
            *v *= target / norm;
        }
        let g = CoeffVector::new(basis.clone(), values).expect("length matches basis");
        let state = MomentState::from_coefficients(&g).expect("N ≥ 2");
        if state.delta.is_some() {
            return g;
        }
    }
}

/// [`random_admissible_g0`] drawn from a ChaCha8 stream seeded with `seed`.
pub fn seeded_admissible_g0(basis: &Arc<BasisTruncation>, seed: u64, max_norm: f64) -> CoeffVector {
    random_admissible_g0(basis, &mut ChaCha8Rng::seed_from_u64(seed), max_norm)
}

/// `(v_0³ − 3v_0v_1²) Ψ_0` normalized to `‖g‖ = amplitude`, by quadrature.
pub fn cubic_harmonic_mode(basis: &Arc<BasisTruncation>, amplitude: f64) -> Result<CoeffVector, String> {
    let d = basis.dimension();
    let grid = QuadratureGrid::new(d, basis.max_degree() + 4, 1.0).map_err(|e| e.to_string())?;
    let zero = vec![0u32; d];
    let g = hermite_transform_fn(
        |v| (v[0].powi(3) - 3.0 * v[0] * v[1] * v[1]) * psi(&zero, v),
        &grid,
        basis,
    )
    .map_err(|e| e.to_string())?
    .coefficients;
    Ok(g.scaled(amplitude / g.norm()))
}

/// Run the full battery.
pub fn run_suite(config: &VerifyConfig) -> Result<VerifyReport, VerifyError> {
    config.validate()?;
    let mut suite = Suite {
        config,
        checks: Vec::new(),
        notes: Vec::new(),
        timings: Vec::new(),
    };
    let d = config.dimension;
    let n = config.truncation;
    let basis = enumerate_basis(d, n).map_err(|e| VerifyError::InvalidConfig(e.to_string()))?;
    if let Some(fault) = config.fault {
        suite.notes.push(format!("fault injected: {fault:?}"));
    }

    suite.run("basis", |c, _| basis_checks(c, &basis, config.seed));
    let ops = match assemble(&basis, config.fault) {
        Ok(ops) => ops,
        Err(e) => {
            suite.checks.push(CheckResult::errored("operators.assemble", e));
            return Ok(finish(suite));
        }
    };
    suite.run("operators", |c, _| operator_checks(c, &ops, config));
    suite.run("moments", |c, _| moment_checks(c, config.dimension));
    suite.run("evolution", |c, _| evolution_checks(c, &ops, config));
    suite.run("certification", |c, _| certification_check(c, &ops, config));
    suite.run("smoothing", |c, notes| smoothing_check(c, notes, &ops, config));
    suite.run("oracle", |c, _| oracle_checks(c, config));
    Ok(finish(suite))
}

fn finish(suite: Suite<'_>) -> VerifyReport {
    VerifyReport {
        config: suite.config.clone(),
        notes: suite.notes,
        checks: suite.checks,
        timings: suite.timings,
    }
}

fn basis_checks(out: &mut Checks, basis: &Arc<BasisTruncation>, seed: u64) {
    let d = basis.dimension();
    let n = basis.max_degree();
    let mut bad_levels = 0usize;
    for k in 0..=n {
        let len = basis.level_range(k).map(|r| r.len()).unwrap_or(0);
        if len != binomial(k + d - 1, d - 1) {
            bad_levels += 1;
        }
    }
    if basis.len() != binomial(n + d, d) {
        bad_levels += 1;
    }
    out.push(CheckResult::at_most(
        "basis.count",
        bad_levels as f64,
        0.0,
        format!("{} functions for d={d}, N={n}", basis.len()),
    ));
    let sorted = basis.ordering().windows(2).all(|w| {
        (w[0].degree(), w[0].entries()) < (w[1].degree(), w[1].entries())
    });
    out.push(CheckResult::at_most(
        "basis.ordering",
        if sorted { 0.0 } else { 1.0 },
        0.0,
        "graded lexicographic",
    ));

    // Parseval: quadrature norm of the synthesized expansion
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..basis.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let c = CoeffVector::new(basis.clone(), values).expect("length matches basis");
    let grid = QuadratureGrid::new(d, n + 2, 1.0).expect("valid grid");
    let samples = synthesize(&c, grid.points());
    let quad: f64 = samples
        .iter()
        .zip(grid.plain_weights())
        .map(|(g, w)| w * g * g)
        .sum::<f64>()
        .sqrt();
    out.push(CheckResult::at_most(
        "basis.parseval",
        (quad - c.norm()).abs() / c.norm(),
        1e-12,
        "relative difference of quadrature and coefficient norms",
    ));
}

fn operator_checks(out: &mut Checks, ops: &OperatorSet, config: &VerifyConfig) {
    let basis = &ops.basis;
    let d = basis.dimension();
    let n = basis.max_degree();

    let adj = (0..d)
        .map(|j| ops.raise[j].max_abs_diff(&ops.lower[j].transpose()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most("operators.ladder_adjoint", adj, 1e-14, "max|A⁺_j − (A⁻_j)ᵀ|"));

    // [A⁻_j, A⁺_k] = δ_jk below the top level
    let mut comm: f64 = 0.0;
    for j in 0..d {
        for k in 0..d {
            let Ok(c) = ops.lower[j].commutator(&ops.raise[k]) else {
                comm = f64::INFINITY;
                continue;
            };
            let c = c.restricted(|k| k < n);
            let expected = if j == k {
                SparseOperator::identity(basis.clone()).restricted(|k| k < n)
            } else {
                SparseOperator::identity(basis.clone()).restricted(|_| false)
            };
            comm = comm.max(c.max_abs_diff(&expected).unwrap_or(f64::INFINITY));
        }
    }
    out.push(CheckResult::at_most(
        "operators.canonical_commutator",
        comm,
        1e-12,
        "max|[A⁻_j, A⁺_k] − δ_jk| below the top level",
    ));

    let harm = ops
        .harmonic
        .diagonal_values()
        .iter()
        .enumerate()
        .map(|(p, h)| (h - (basis.degree_at(p) as f64 + 0.5 * d as f64)).abs())
        .fold(0.0, f64::max)
        .max(if ops.harmonic.is_diagonal() { 0.0 } else { f64::INFINITY });
    out.push(CheckResult::at_most("operators.harmonic_spectrum", harm, 1e-12, "ℋΨ_α = (|α| + d/2)Ψ_α"));

    let mut asym = ops.harmonic.asymmetry().max(ops.laplace_beltrami.asymmetry());
    if let Some(l) = &ops.linearized {
        asym = asym.max(l.asymmetry());
    }
    out.push(CheckResult::at_most("operators.symmetry", asym, 1e-12, "ℋ, Δ_S and ℒ_L"));

    // route equivalence against the analytic-derivative oracle
    let route_n = config.route_max_degree.min(n);
    let route_basis = enumerate_basis(d, route_n).expect("valid truncation");
    // graded ordering: the low-degree block keeps its positions
    let route = ops.laplace_beltrami.restricted(|k| k <= route_n);
    let route = SparseOperator::from_triplets(route_basis, route.triplets().collect(), route.symmetry());
    match route {
        Ok(route) => {
            let grid = QuadratureGrid::new(d, 5, 1.0).expect("valid grid");
            let points: Vec<Vec<f64>> = grid.points().map(|p| p.to_vec()).collect();
            let disc = max_route_discrepancy(&route, &points, laplace_beltrami_from_jet);
            out.push(CheckResult::at_most(
                "operators.laplace_beltrami_route",
                disc,
                1e-8,
                format!("ladder vs analytic Δ_S on |α| ≤ {route_n} at {} points", points.len()),
            ));
        }
        Err(e) => out.push(CheckResult::errored("operators.laplace_beltrami_route", e)),
    }

    let Some(lin) = &ops.linearized else {
        out.push(CheckResult::errored("operators.linearized", "N < 2"));
        return;
    };
    match symmetric_spectrum(lin) {
        Ok(spec) => out.push(CheckResult::at_least(
            "operators.positivity",
            spec.min(),
            -1e-10,
            format!("min eigenvalue of ℒ_L, residual {:.1e}", spec.max_residual),
        )),
        Err(e) => out.push(CheckResult::errored("operators.positivity", e)),
    }
    match (kernel_basis(lin, DEFAULT_KERNEL_TOL), collisional_invariants(basis)) {
        (Ok(kernel), Ok(inv)) => {
            out.push(CheckResult::at_most(
                "operators.kernel_dimension",
                (kernel.len() as f64 - (d + 2) as f64).abs(),
                0.0,
                format!("{} eigenvalues below {DEFAULT_KERNEL_TOL:e}, expected {}", kernel.len(), d + 2),
            ));
            out.push(CheckResult::at_most(
                "operators.kernel_span",
                subspace_sine(&kernel, &inv),
                1e-8,
                "sine of the largest angle to the collisional invariants",
            ));
        }
        (Err(e), _) | (_, Err(e)) => out.push(CheckResult::errored("operators.kernel_dimension", e)),
    }

    // closed-form eigenvalues on off-diagonal ℓ=2 and ℓ=3 harmonics
    let mut e2 = CoeffVector::zeros(basis.clone());
    e2.set(&unit_pair(d, 0, 1), 1.0).expect("degree-2 index");
    out.push(eigen_check("operators.spectrum_l2", lin, &e2, 4.0 * d as f64));
    if n >= 3 {
        match cubic_harmonic_mode(basis, 1.0) {
            Ok(e3) => out.push(eigen_check("operators.spectrum_l3", lin, &e3, 6.0 * d as f64)),
            Err(e) => out.push(CheckResult::errored("operators.spectrum_l3", e)),
        }
    }
}

fn unit_pair(d: usize, j: usize, k: usize) -> Vec<u32> {
    let mut e = vec![0u32; d];
    e[j] += 1;
    e[k] += 1;
    e
}

fn eigen_check(name: &str, op: &SparseOperator, v: &CoeffVector, lambda: f64) -> CheckResult {
    match op.apply(v) {
        Ok(w) => {
            let r = w.sub(&v.scaled(lambda)).map(|r| r.max_abs()).unwrap_or(f64::INFINITY) / v.max_abs();
            CheckResult::at_most(name, r, 1e-10, format!("max|ℒ_L v − {lambda} v| / max|v|"))
        }
        Err(e) => CheckResult::errored(name, e),
    }
}

fn moment_checks(out: &mut Checks, d: usize) {
    let mut mean = vec![0.0; d];
    mean[0] = 0.7;
    let mut cov_a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 + 0.3 * i as f64 } else { 0.0 }).collect())
        .collect();
    cov_a[0][1] = 0.25;
    cov_a[1][0] = 0.25;
    let spec = GaussianMixtureSpec::new(vec![
        GaussianComponent {
            weight: 2.0,
            mean,
            covariance: cov_a,
        },
        GaussianComponent::isotropic(0.5, vec![-0.4; d], 0.6),
    ])
    .expect("valid mixture");
    match prepare_initial_data(&spec) {
        Ok((prepared, _, t0)) => {
            let raw = prepared.raw_moments();
            let mut defect = (raw.mass - 1.0).abs();
            defect = defect.max(raw.first.amax());
            defect = defect.max((raw.second.trace() - d as f64).abs());
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        defect = defect.max(raw.second[(i, j)].abs());
                    }
                }
            }
            out.push(CheckResult::at_most(
                "moments.normalization",
                defect,
                1e-10,
                "mass 1, mean 0, trace d, diagonal second moments",
            ));
            let state = MomentState::from_mixture(&prepared);
            let sum: f64 = state.alpha.iter().sum();
            let t_err = state
                .t0
                .iter()
                .zip(&t0)
                .zip(&state.alpha)
                .map(|((a, b), al)| (a - b).abs().max((a - 1.0 - al).abs()))
                .fold(0.0, f64::max);
            out.push(CheckResult::at_most(
                "moments.alpha",
                sum.abs().max(t_err),
                1e-10,
                "|Σα_j| and |T_j − 1 − α_j|",
            ));
        }
        Err(e) => out.push(CheckResult::errored("moments.normalization", e)),
    }
}

fn evolution_checks(out: &mut Checks, ops: &OperatorSet, config: &VerifyConfig) {
    let basis = &ops.basis;
    let d = basis.dimension() as f64;
    let g0 = anisotropic_data(basis, 0.1);
    let steps = (config.moment_t_final / config.dt).round() as usize;
    let every = largest_divisor_at_most(steps, config.output_every);
    let run = compute_alpha(&g0)
        .map_err(|e| e.to_string())
        .and_then(|alpha| ReducedSystem::from_operators(ops, &alpha).map_err(|e| e.to_string()))
        .and_then(|sys| {
            integrate(&sys, &g0, &IntegratorConfig::new(config.dt, config.moment_t_final, every))
                .map_err(|e| e.to_string())
        });
    match run {
        Ok(traj) => {
            let alpha0 = compute_alpha(&g0).expect("N ≥ 2");
            let mut law: f64 = 0.0;
            let mut cons: f64 = 0.0;
            for (t, g) in traj.iter() {
                let m = extract_moments(g).expect("N ≥ 2");
                cons = cons.max(m.max_conservation_defect());
                for (a, a0) in m.alpha.iter().zip(&alpha0) {
                    if *a0 != 0.0 {
                        let exact = a0 * (-4.0 * d * t).exp();
                        law = law.max(((a - exact) / exact).abs());
                    }
                }
            }
            out.push(CheckResult::at_most(
                "evolution.moment_law",
                law,
                1e-6,
                format!("max relative error of α_j(t) vs α_j(0)e^(−4dt), {} samples", traj.len()),
            ));
            out.push(CheckResult::at_most(
                "evolution.conservation",
                cons,
                1e-9,
                "mass, momentum, energy and off-diagonal defects",
            ));
        }
        Err(e) => {
            out.push(CheckResult::errored("evolution.moment_law", &e));
            out.push(CheckResult::errored("evolution.conservation", e));
        }
    }

    if basis.max_degree() < 3 {
        return;
    }
    let rate = 6.0 * d;
    let t = config.eigenmode_t_final;
    let mode = match cubic_harmonic_mode(basis, 0.1) {
        Ok(m) => m,
        Err(e) => {
            out.push(CheckResult::errored("evolution.eigenmode", e));
            return;
        }
    };
    let error_at = |dt: f64| -> Result<f64, String> {
        let sys = ReducedSystem::from_operators(ops, &vec![0.0; basis.dimension()]).map_err(|e| e.to_string())?;
        let steps = (t / dt).round() as usize;
        let traj = integrate(&sys, &mode, &IntegratorConfig::new(dt, t, steps)).map_err(|e| e.to_string())?;
        let (_, last) = traj.last().ok_or("empty trajectory")?;
        let exact = mode.scaled((-rate * t).exp());
        Ok(last.sub(&exact).map_err(|e| e.to_string())?.norm() / exact.norm())
    };
    match (error_at(config.dt), error_at(0.5 * config.dt)) {
        (Ok(e1), Ok(e2)) => {
            out.push(CheckResult::at_most(
                "evolution.eigenmode",
                e1,
                1e-6,
                format!("relative error vs e^(−{rate}t) at t = {t}"),
            ));
            let ratio = e1 / e2;
            out.push(CheckResult {
                passed: (14.0..=18.0).contains(&ratio),
                ..CheckResult::at_least(
                    "evolution.convergence_order",
                    ratio,
                    14.0,
                    format!("error ratio under dt halving, accepted range [14, 18]; errors {e1:.3e}, {e2:.3e}"),
                )
            });
        }
        (Err(e), _) | (_, Err(e)) => out.push(CheckResult::errored("evolution.eigenmode", e)),
    }
}

fn largest_divisor_at_most(steps: usize, cap: usize) -> usize {
    (1..=cap.max(1)).rev().find(|k| steps % k == 0).unwrap_or(1)
}

fn certification_check(out: &mut Checks, ops: &OperatorSet, config: &VerifyConfig) {
    let basis = &ops.basis;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let steps = (config.certification_t_final / config.dt).round() as usize;
    let every = largest_divisor_at_most(steps, config.output_every);
    for run in 0..config.random_runs {
        let g0 = seeded_admissible_g0(basis, config.seed.wrapping_add(run as u64), config.random_max_norm);
        let result = MomentState::from_coefficients(&g0)
            .map_err(|e| e.to_string())
            .and_then(|state| {
                let sys = ReducedSystem::from_operators(ops, &state.alpha).map_err(|e| e.to_string())?;
                let icfg = IntegratorConfig::new(config.dt, config.certification_t_final, every);
                let traj = integrate(&sys, &g0, &icfg).map_err(|e| e.to_string())?;
                certify_run(&traj, &state).map_err(|e| e.to_string())
            });
        match result {
            Ok(cert) => {
                violations += cert.violations;
                worst = worst.max(cert.max_violation);
            }
            Err(e) => {
                out.push(CheckResult::errored("diagnostics.certification", format!("run {run}: {e}")));
                return;
            }
        }
    }
    out.push(CheckResult::at_most(
        "diagnostics.certification",
        violations as f64,
        0.0,
        format!(
            "{} seeded runs, t ∈ [0, {}], largest value − bound {worst:.3e}",
            config.random_runs, config.certification_t_final
        ),
    ));
}

fn smoothing_check(out: &mut Checks, notes: &mut Vec<String>, ops: &OperatorSet, config: &VerifyConfig) {
    let name = "diagnostics.smoothing";
    let basis = &ops.basis;
    let g0 = anisotropic_data(basis, 0.1);
    let state = MomentState::from_coefficients(&g0).expect("N ≥ 2");
    let Some(delta) = state.delta else {
        out.push(CheckResult::errored(name, "test data is not admissible"));
        return;
    };
    let t = config.smoothing_t_final;
    let steps = (t / config.dt).round() as usize;
    let result = ReducedSystem::from_operators(ops, &state.alpha)
        .map_err(|e| e.to_string())
        .and_then(|sys| {
            integrate(&sys, &g0, &IntegratorConfig::new(config.dt, t, steps)).map_err(|e| e.to_string())
        });
    let traj = match result {
        Ok(traj) => traj,
        Err(e) => {
            out.push(CheckResult::errored(name, e));
            return;
        }
    };
    let (t_end, g) = traj.last().expect("initial state recorded");
    match fit_level_decay(g, t_end) {
        Ok(fit) => out.push(CheckResult::at_most(
            name,
            fit.slope,
            -delta * t_end + 0.1,
            format!("fitted slope of ln‖ℙ_k g‖ on k ∈ [{}, {}], δ = {delta:.4}", fit.window.0, fit.window.1),
        )),
        Err(DiagnosticsError::InsufficientLevels { found, .. }) => {
            let reason = format!(
                "fit window [2, N−2] holds {found} nonzero levels at N = {}, fewer than {MIN_FIT_LEVELS}",
                basis.max_degree()
            );
            notes.push(format!("{name} skipped: {reason}"));
            out.push(CheckResult::skipped(name, reason));
        }
        Err(e) => out.push(CheckResult::errored(name, e)),
    }
}

fn oracle_checks(out: &mut Checks, config: &VerifyConfig) {
    let d = config.dimension;
    let n = config.oracle_truncation;
    let tol = DEFAULT_CONVERGENCE_TOL;
    let eval = QuadratureGrid::new(d, config.oracle_eval_nodes, 1.0).expect("valid grid");
    let mut variances = vec![1.0; d];
    variances[0] = 1.2;
    variances[1] = 0.8;
    let spec = GaussianMixtureSpec::new(vec![GaussianComponent::diagonal(1.0, vec![0.0; d], &variances)])
        .expect("valid mixture");

    let spectral = (|| -> Result<f64, String> {
        let basis = enumerate_basis(d, n).map_err(|e| e.to_string())?;
        let g0 = mixture_coefficients(&spec, &basis, n / 2 + 2)
            .map_err(|e| e.to_string())?
            .coefficients
            .project_cumulative(n - 2)
            .map_err(|e| e.to_string())?;
        let ops = assemble(&basis, config.fault)?;
        let alpha = compute_alpha(&g0).map_err(|e| e.to_string())?;
        let sys = ReducedSystem::from_operators(&ops, &alpha).map_err(|e| e.to_string())?;
        let r = compare_spectral_vs_direct(&g0, &sys, &eval, config.oracle_nodes, tol).map_err(|e| e.to_string())?;
        Ok(r.relative_discrepancy)
    })();
    match spectral {
        Ok(disc) => out.push(CheckResult::at_most(
            "oracle.spectral_vs_direct",
            disc,
            1e-4,
            format!(
                "Gaussian data T = {variances:?} projected to degree {}, N = {n}, {} nodes/axis",
                n - 2,
                config.oracle_nodes
            ),
        )),
        Err(e) => out.push(CheckResult::errored("oracle.spectral_vs_direct", e)),
    }

    let positive = MixtureDensity::new(&spec)
        .map_err(|e| e.to_string())
        .and_then(|f| compare_reduction(&f, &variances, &eval, config.oracle_nodes, tol).map_err(|e| e.to_string()));
    match positive {
        Ok(r) => out.push(CheckResult::at_most(
            "oracle.reduction_identity",
            r.relative_discrepancy,
            1e-4,
            "reduced form vs direct quadrature, normalized data",
        )),
        Err(e) => out.push(CheckResult::errored("oracle.reduction_identity", e)),
    }

    let wide = GaussianMixtureSpec::new(vec![GaussianComponent::isotropic(1.0, vec![0.0; d], 1.5)])
        .expect("valid mixture");
    let negative = MixtureDensity::new(&wide)
        .map_err(|e| e.to_string())
        .and_then(|f| compare_reduction(&f, &vec![1.5; d], &eval, config.oracle_nodes, tol).map_err(|e| e.to_string()));
    match negative {
        Ok(r) => out.push(CheckResult::at_least(
            "oracle.negative_control",
            r.relative_discrepancy,
            1e-2,
            "reduced form applied to unnormalized data (variance 1.5) must disagree",
        )),
        Err(e) => out.push(CheckResult::errored("oracle.negative_control", e)),
    }
}
