//! The four subcommands. Each writes its files into an [`OutputDir`] and
//! returns a verdict; errors carry the exit-code class.

use std::sync::Arc;

use landau_core::basis::{enumerate_basis, BasisTruncation, CoeffVector};
use landau_core::diagnostics::{certify_run, fit_level_decay, WeightedNormReport};
use landau_core::evolution::{assemble_reduced_system, integrate, EvolutionError, IntegratorConfig};
use landau_core::moments::{
    compute_alpha, extract_moments, max_delta, prepare_initial_data, AffineFrame, GaussianComponent,
    GaussianMixtureSpec, MomentState,
};
use landau_core::operators::{
    collisional_invariants, kernel_basis, subspace_sine, symmetric_spectrum, OperatorSet, SparseOperator,
    DEFAULT_KERNEL_TOL,
};
use landau_core::oracle::{
    compare_reduction, compare_spectral_vs_direct, mixture_coefficients, DiscrepancyReport, FluctuationDensity,
    MixtureDensity, OracleError, QuadratureGrid,
};
use landau_core::verify::{run_suite, seeded_admissible_g0};
use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Initial, RunConfig};
use crate::output::{BasisManifest, Csv, OutputDir, PhaseTimer, RunSummary, Verdict};

/// Largest normalization defect accepted for explicit coefficient input.
const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn config_error(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    })
}

fn evolution_error(e: EvolutionError) -> CliError {
    match e {
        EvolutionError::StabilityCap { dt, cap } => config_error(
            "integrator.dt",
            format!("{dt} exceeds the explicit stability cap {cap:.6e}"),
        ),
        EvolutionError::NonFinite { step } => CliError::Numerical(format!("non-finite state at step {step}")),
        e => other(e),
    }
}

/// What a command reports back to `main`.
pub struct Outcome {
    pub verdict: Verdict,
    pub lines: Vec<String>,
}

fn manifest(basis: &BasisTruncation) -> BasisManifest {
    BasisManifest {
        dimension: basis.dimension(),
        truncation: basis.max_degree(),
        ordering: basis.ordering_tuples(),
    }
}

fn triplet_bytes(op: &SparseOperator) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    op.write_triplets(&mut buf)?;
    Ok(buf)
}

fn start(config: &RunConfig, command: &str, out: &mut OutputDir) -> Result<RunSummary, CliError> {
    let mut resolved = config.resolved(command)?;
    resolved.output_dir = None;
    out.write("resolved_config.toml", resolved.to_toml().as_bytes())?;
    Ok(RunSummary::new(command, resolved))
}

pub fn assemble(config: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut timer = PhaseTimer::new();
    let mut summary = start(config, "assemble", out)?;
    let d = config.dimension;
    timer.start("assemble");
    let basis = enumerate_basis(d, config.truncation).map_err(other)?;
    let ops = OperatorSet::assemble(&basis).map_err(other)?;
    let linearized = ops.linearized.as_ref().expect("truncation ≥ 2 is validated");
    timer.start("write");
    out.write("harmonic.txt", &triplet_bytes(&ops.harmonic)?)?;
    out.write("laplace_beltrami.txt", &triplet_bytes(&ops.laplace_beltrami)?)?;
    out.write("linearized.txt", &triplet_bytes(linearized)?)?;
    timer.start("spectrum");
    let spectrum = symmetric_spectrum(linearized).map_err(|e| CliError::Numerical(e.to_string()))?;
    let kernel = kernel_basis(linearized, DEFAULT_KERNEL_TOL).map_err(|e| CliError::Numerical(e.to_string()))?;
    let sine = subspace_sine(&kernel, &collisional_invariants(&basis).map_err(other)?);
    timer.stop();

    #[derive(Serialize)]
    struct SpectraReport {
        dimension: usize,
        truncation: usize,
        kernel_tolerance: f64,
        kernel_dimension: usize,
        expected_kernel_dimension: usize,
        kernel_subspace_sine: f64,
        min_eigenvalue: f64,
        positive_semidefinite: bool,
        smallest_eigenvalues: Vec<f64>,
        max_residual: f64,
    }
    let report = SpectraReport {
        dimension: d,
        truncation: config.truncation,
        kernel_tolerance: DEFAULT_KERNEL_TOL,
        kernel_dimension: kernel.len(),
        expected_kernel_dimension: d + 2,
        kernel_subspace_sine: sine,
        min_eigenvalue: spectrum.min(),
        positive_semidefinite: spectrum.min() >= -DEFAULT_KERNEL_TOL,
        smallest_eigenvalues: spectrum.values.iter().take(10).copied().collect(),
        max_residual: spectrum.max_residual,
    };
    out.write_json("spectra.json", &report)?;
    let pass = report.positive_semidefinite && report.kernel_dimension == d + 2 && sine <= 1e-8;
    summary.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    summary.basis = Some(manifest(&basis));
    let lines = vec![
        format!(
            "kernel dimension {} (expected {}), subspace sine {sine:.2e}",
            report.kernel_dimension,
            d + 2
        ),
        format!(
            "min eigenvalue {:.6e}, positive semidefinite: {}",
            report.min_eigenvalue, report.positive_semidefinite
        ),
    ];
    summary.finish(out, timer)?;
    Ok(Outcome {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        lines,
    })
}

/// Initial fluctuation in the diagonalizing frame with its moment state.
struct InitialData {
    g0: CoeffVector,
    state: MomentState,
    frame: AffineFrame,
}

fn initial_data(config: &RunConfig, basis: &Arc<BasisTruncation>) -> Result<InitialData, CliError> {
    let d = config.dimension;
    match config.initial()? {
        Initial::Coefficients(entries) => {
            let g0 = CoeffVector::from_entries(basis.clone(), entries.iter().map(|e| (&e.index[..], e.value)))
                .map_err(|e| config_error("initial.coefficients", e.to_string()))?;
            let m = extract_moments(&g0).map_err(other)?;
            if m.max_conservation_defect() > NORMALIZATION_TOL {
                return Err(config_error(
                    "initial.coefficients",
                    format!(
                        "fluctuation must carry zero mass, momentum, energy and off-diagonal second moments \
                         (largest is {:.3e}); supply a mixture to have it normalized",
                        m.max_conservation_defect()
                    ),
                ));
            }
            let state = MomentState::from_coefficients(&g0).map_err(other)?;
            Ok(InitialData {
                g0,
                state,
                frame: AffineFrame::identity(d),
            })
        }
        Initial::Mixture(spec) => {
            let (rotated, frame, _) =
                prepare_initial_data(spec).map_err(|e| config_error("initial.mixture", e.to_string()))?;
            let n = basis.max_degree();
            let transform = mixture_coefficients(&rotated, basis, n / 2 + 2).map_err(other)?;
            Ok(InitialData {
                g0: transform.coefficients,
                state: MomentState::from_mixture(&rotated),
                frame,
            })
        }
        Initial::Random(r) => {
            let g0 = seeded_admissible_g0(basis, config.seed, r.max_norm);
            let state = MomentState::from_coefficients(&g0).map_err(other)?;
            Ok(InitialData {
                g0,
                state,
                frame: AffineFrame::identity(d),
            })
        }
    }
}

fn level_header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..=n).map(move |k| format!("{prefix}{k}"))
}

pub fn simulate(config: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut timer = PhaseTimer::new();
    let mut summary = start(config, "simulate", out)?;
    let d = config.dimension;
    let n = config.truncation;
    let icfg = config.integrator()?;

    timer.start("prepare");
    let basis = enumerate_basis(d, n).map_err(other)?;
    let InitialData { g0, mut state, frame } = initial_data(config, &basis)?;
    let mut reason = None;
    match (config.delta, state.delta) {
        (Some(delta), Some(_)) => {
            let cap = max_delta(&state.alpha, d).expect("admissible");
            if delta > cap {
                return Err(config_error(
                    "delta",
                    format!("{delta} exceeds the admissible maximum min(1, d−1−sup|α_j|) = {cap:.6}"),
                ));
            }
            state.delta = Some(delta);
        }
        (override_delta, None) => {
            if override_delta.is_some() {
                warn!("delta override ignored: the initial data admit no weight rate");
            }
            let sup = state.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            reason = Some(format!(
                "sup|α_j| = {sup:.6} is not below d−1 = {}; no admissible weight rate",
                d - 1
            ));
        }
        (None, Some(_)) => {}
    }

    timer.start("assemble");
    let system = assemble_reduced_system(&basis, &state.alpha).map_err(evolution_error)?;
    timer.start("integrate");
    let integrator = IntegratorConfig {
        dt: icfg.dt,
        t_final: icfg.t_final,
        output_every: icfg.output_every,
        safety: icfg.safety,
    };
    let trajectory = integrate(&system, &g0, &integrator).map_err(evolution_error)?;

    timer.start("diagnose");
    let mut header = vec!["t".to_string()];
    header.extend(
        basis
            .ordering()
            .iter()
            .map(|a| format!("c_{}", a.entries().iter().map(|x| x.to_string()).collect::<Vec<_>>().join("_"))),
    );
    let mut traj_csv = Csv::new(&header);
    let mut diag_header: Vec<String> = ["t", "norm", "weighted_norm", "bound", "margin", "slope"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    diag_header.extend(level_header("level_", n));
    let mut diag_csv = Csv::new(&diag_header);
    let mut moment_header = vec!["t".to_string(), "mass".to_string()];
    moment_header.extend((0..d).map(|j| format!("momentum_{j}")));
    moment_header.push("energy".into());
    for j in 0..d {
        for k in j + 1..d {
            moment_header.push(format!("second_{j}{k}"));
        }
    }
    moment_header.extend((0..d).map(|j| format!("alpha_{j}")));
    moment_header.extend((0..d).map(|j| format!("alpha_law_{j}")));
    let mut moment_csv = Csv::new(&moment_header);
    let g0_norm = g0.norm();
    let rate = 4.0 * d as f64;
    for (t, g) in trajectory.iter() {
        traj_csv.row(std::iter::once(Some(t)).chain(g.values().iter().map(|&x| Some(x))));
        let report = state
            .delta
            .map(|delta| WeightedNormReport::new(g, t, delta, g0_norm))
            .transpose()
            .map_err(other)?;
        let slope = fit_level_decay(g, t).ok().map(|f| f.slope);
        let mut row = vec![
            Some(t),
            Some(g.norm()),
            report.as_ref().map(|r| r.value),
            report.as_ref().map(|r| r.bound),
            report.as_ref().map(|r| r.margin),
            slope,
        ];
        row.extend(g.level_norms().into_iter().map(Some));
        diag_csv.row(row);
        let m = extract_moments(g).map_err(other)?;
        let mut row = vec![Some(t), Some(m.mass)];
        row.extend(m.momentum.iter().map(|&x| Some(x)));
        row.push(Some(m.energy));
        row.extend(m.off_diagonal.iter().map(|&x| Some(x)));
        row.extend(m.alpha.iter().map(|&x| Some(x)));
        row.extend(state.alpha.iter().map(|a| Some(a * (-rate * t).exp())));
        moment_csv.row(row);
    }
    out.write("trajectory.csv", &traj_csv.into_bytes())?;
    out.write("diagnostics.csv", &diag_csv.into_bytes())?;
    out.write("moments.csv", &moment_csv.into_bytes())?;

    timer.start("certify");
    let mut lines = Vec::new();
    if state.delta.is_some() {
        let cert = certify_run(&trajectory, &state).map_err(other)?;
        out.write_json("certification.json", &cert)?;
        summary.verdict = if cert.passed() { Verdict::Pass } else { Verdict::Fail };
        summary.max_margin_violation = Some(cert.max_violation);
        lines.push(format!(
            "certification {}: {} violations over {} samples, δ = {:.6}, max(value − bound) {:.3e}",
            if cert.passed() { "passed" } else { "FAILED" },
            cert.violations,
            cert.reports.len(),
            cert.delta,
            cert.max_violation
        ));
    } else {
        summary.verdict = Verdict::NotApplicable;
        lines.push(format!("certification not applicable: {}", reason.as_deref().unwrap_or("")));
        summary.verdict_reason = reason;
    }
    timer.stop();
    let (t_end, g_end) = trajectory.last().expect("initial state recorded");
    lines.insert(
        0,
        format!("{} samples to t = {t_end}, final ‖g‖ = {:.6e}", trajectory.len(), g_end.norm()),
    );
    summary.basis = Some(manifest(&basis));
    summary.moment_state = Some(state);
    summary.frame = Some(frame);
    let verdict = summary.verdict;
    summary.finish(out, timer)?;
    Ok(Outcome { verdict, lines })
}

pub fn verify(config: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut timer = PhaseTimer::new();
    let mut summary = start(config, "verify", out)?;
    let vcfg = config.verify_config()?;
    let report = run_suite(&vcfg).map_err(other)?;
    out.write_json("verify.json", &report)?;
    for (name, secs) in &report.timings {
        timer.timings.insert(name.clone(), *secs);
    }
    let lines = report
        .checks
        .iter()
        .map(|c| {
            let status = if c.skipped {
                "SKIP"
            } else if c.passed {
                "PASS"
            } else {
                "FAIL"
            };
            format!("{status} {:<34} {:>11.3e} (tol {:.1e}) {}", c.name, c.measured, c.tolerance, c.detail)
        })
        .chain(report.notes.iter().map(|n| format!("note: {n}")))
        .collect();
    summary.verdict = if report.passed() { Verdict::Pass } else { Verdict::Fail };
    summary.checks = report.checks;
    let verdict = summary.verdict;
    summary.finish(out, timer)?;
    Ok(Outcome { verdict, lines })
}

#[derive(Serialize)]
struct Comparison {
    name: String,
    passed: bool,
    threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<DiscrepancyReport>,
}

fn comparison(
    name: &str,
    result: Result<DiscrepancyReport, OracleError>,
    threshold: f64,
    accept: impl Fn(f64) -> bool,
) -> Comparison {
    match result {
        Ok(report) => Comparison {
            name: name.into(),
            passed: accept(report.relative_discrepancy),
            threshold,
            error: None,
            report: Some(report),
        },
        Err(e) => Comparison {
            name: name.into(),
            passed: false,
            threshold,
            error: Some(e.to_string()),
            report: None,
        },
    }
}

pub fn oracle(config: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut timer = PhaseTimer::new();
    let mut summary = start(config, "oracle", out)?;
    let d = config.dimension;
    let n = config.truncation;
    if n < 4 {
        return Err(config_error("truncation", "the oracle needs at least 4 (top two levels must stay empty)"));
    }
    timer.start("prepare");
    let basis = enumerate_basis(d, n).map_err(other)?;
    let InitialData { g0, state, frame } = initial_data(config, &basis)?;
    let dropped = g0.level_norms()[n - 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if dropped > 0.0 {
        warn!("projecting the initial data to degree {} drops norm {dropped:.3e}", n - 2);
    }
    let g0 = g0.project_cumulative(n - 2).map_err(other)?;
    let alpha = compute_alpha(&g0).map_err(other)?;
    let system = assemble_reduced_system(&basis, &alpha).map_err(evolution_error)?;
    let eval = QuadratureGrid::new(d, config.oracle_eval_nodes(), 1.0).map_err(other)?;
    let nodes = config.oracle_nodes();
    let tol = config.oracle.tolerance;
    let max = config.oracle.max_discrepancy;
    let min = config.oracle.control_min;

    timer.start("spectral_vs_direct");
    let spectral = comparison(
        "spectral_vs_direct",
        compare_spectral_vs_direct(&g0, &system, &eval, nodes, tol),
        max,
        |x| x <= max,
    );
    timer.start("reduction_identity");
    let t: Vec<f64> = alpha.iter().map(|a| 1.0 + a).collect();
    let reduction = comparison(
        "reduction_identity",
        FluctuationDensity::new(&g0).and_then(|f| compare_reduction(&f, &t, &eval, nodes, tol)),
        max,
        |x| x <= max,
    );
    timer.start("negative_control");
    let wide = GaussianMixtureSpec::new(vec![GaussianComponent::isotropic(1.0, vec![0.0; d], 1.5)])
        .expect("valid mixture");
    let control = comparison(
        "negative_control",
        MixtureDensity::new(&wide).and_then(|f| compare_reduction(&f, &vec![1.5; d], &eval, nodes, tol)),
        min,
        |x| x > min,
    );
    timer.stop();

    let results = [spectral, reduction, control];
    let lines = results
        .iter()
        .map(|c| {
            let value = c
                .report
                .as_ref()
                .map(|r| format!("{:.3e}", r.relative_discrepancy))
                .unwrap_or_else(|| c.error.clone().unwrap_or_default());
            format!("{} {}: {value} (threshold {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.threshold)
        })
        .collect();
    let pass = results.iter().all(|c| c.passed);
    out.write_json("oracle.json", &results)?;
    summary.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    summary.basis = Some(manifest(&basis));
    summary.moment_state = Some(state);
    summary.frame = Some(frame);
    let verdict = summary.verdict;
    summary.finish(out, timer)?;
    Ok(Outcome { verdict, lines })
}
