use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_landau");

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn landau(&self, command: &str, config: Option<&Path>, out: &str, extra: &[&str]) -> Output {
        let mut cmd = Command::new(BIN);
        cmd.arg(command).arg("--out").arg(self.out(out)).args(extra);
        if let Some(c) = config {
            cmd.arg("--config").arg(c);
        }
        cmd.output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|f| if f.is_empty() { None } else { Some(f.parse().unwrap()) }).collect())
        .collect();
    (header, rows)
}

fn simulate_config(initial: &str, t_final: f64) -> String {
    format!(
        "dimension = 2\ntruncation = 10\n\n[initial]\n{initial}\n\n[integrator]\ndt = 1e-3\nt_final = {t_final}\noutput_every = 10\n"
    )
}

#[test]
fn assemble_reports_kernel_of_collision_invariants() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("coefficients = []", 0.01));
    let o = run.landau("assemble", Some(&cfg), "out", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spectra: Value =
        serde_json::from_str(&fs::read_to_string(run.out("out/spectra.json")).unwrap()).unwrap();
    assert_eq!(spectra["kernel_dimension"], 4);
    assert_eq!(spectra["positive_semidefinite"], true);
    assert_eq!(summary(&run.out("out"))["verdict"], "pass");
    let triplets = fs::read_to_string(run.out("out/linearized.txt")).unwrap();
    assert!(triplets.lines().count() > 66);
}

#[test]
fn truncation_below_two_is_a_config_error() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("coefficients = []", 0.01).replace("truncation = 10", "truncation = 1"));
    let o = run.landau("assemble", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("truncation"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let run = Run::new();
    let cases = [
        (simulate_config("coefficients = []", 0.01).replace("dt = 1e-3", "dt = -1.0"), "integrator.dt"),
        (simulate_config("coefficients = [{ index = [1], value = 0.1 }]", 0.01), "initial.coefficients"),
        (simulate_config("coefficients = []\nrandom = { max_norm = 0.1 }", 0.01), "initial"),
        (simulate_config("coefficients = []", 0.01).replace("dimension = 2", "dimension = 2\ncolour = 1"), "colour"),
        (simulate_config("coefficients = []", 0.01).replace("dt = 1e-3", "dt = 0.5"), "integrator.dt"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let cfg = run.config(&format!("c{i}.toml"), text);
        let o = run.landau("simulate", Some(&cfg), &format!("o{i}"), &[]);
        assert_eq!(code(&o), 3, "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "case {i}: {}", stderr(&o));
    }
}

#[test]
fn unnormalized_coefficients_are_rejected() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("coefficients = [{ index = [1, 0], value = 0.1 }]", 0.01));
    let o = run.landau("simulate", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("initial.coefficients"));
}

#[test]
fn equilibrium_stays_at_rest() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("coefficients = []", 0.1));
    let o = run.landau("simulate", Some(&cfg), "out", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(summary(&run.out("out"))["verdict"], "pass");
    let (_, rows) = csv_rows(&run.out("out/trajectory.csv"));
    assert_eq!(rows.len(), 11);
    for row in rows {
        assert!(row[1..].iter().all(|x| *x == Some(0.0)));
    }
}

#[test]
fn harmonic_mode_decays_at_its_eigenvalue() {
    // (v₀³ − 3v₀v₁²)Ψ₀ = √6 Ψ_(3,0) − 3√2 Ψ_(1,2): an ℓ = 3 harmonic of degree 3.
    let run = Run::new();
    let c30 = 0.1;
    let c12 = -0.1 * 3f64.sqrt();
    let cfg = run.config(
        "a.toml",
        &simulate_config(
            &format!("coefficients = [{{ index = [3, 0], value = {c30} }}, {{ index = [1, 2], value = {c12} }}]"),
            0.2,
        ),
    );
    let o = run.landau("simulate", Some(&cfg), "out", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&run.out("out/diagnostics.csv"));
    assert_eq!(header[1], "norm");
    let n0 = rows[0][1].unwrap();
    for row in &rows {
        let t = row[0].unwrap();
        let exact = n0 * (-12.0 * t).exp();
        assert!((row[1].unwrap() - exact).abs() <= 1e-7 * n0, "t = {t}");
    }
}

#[test]
fn large_perturbation_is_not_applicable_but_still_evolves() {
    let run = Run::new();
    let cfg = run.config(
        "a.toml",
        &simulate_config(
            "coefficients = [{ index = [2, 0], value = 0.8 }, { index = [0, 2], value = -0.8 }]",
            0.05,
        ),
    );
    let o = run.landau("simulate", Some(&cfg), "out", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&run.out("out"));
    assert_eq!(s["verdict"], "not-applicable");
    assert!(s["verdict_reason"].as_str().unwrap().contains("d−1"));
    assert!(!run.out("out/certification.json").exists());
    let (_, rows) = csv_rows(&run.out("out/trajectory.csv"));
    assert_eq!(rows.len(), 6);
    let (_, diag) = csv_rows(&run.out("out/diagnostics.csv"));
    assert!(diag.iter().all(|r| r[2].is_none() && r[3].is_none()));
}

#[test]
fn delta_override_above_the_admissible_maximum_is_rejected() {
    let run = Run::new();
    let text = simulate_config(
        "coefficients = [{ index = [2, 0], value = 0.3 }, { index = [0, 2], value = -0.3 }]",
        0.05,
    )
    .replace("truncation = 10", "truncation = 10\ndelta = 0.99");
    let cfg = run.config("a.toml", &text);
    let o = run.landau("simulate", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn mixture_input_is_normalized_and_certified() {
    let run = Run::new();
    let initial = "[initial.mixture]\ncomponents = [\n  { weight = 0.5, mean = [0.4, 0.0], covariance = [[0.9, 0.1], [0.1, 0.8]] },\n  { weight = 0.5, mean = [-0.4, 0.2], covariance = [[1.0, 0.0], [0.0, 1.1]] },\n]";
    let text = simulate_config("", 0.1).replace("[initial]\n", initial);
    let cfg = run.config("a.toml", &text);
    let o = run.landau("simulate", Some(&cfg), "out", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&run.out("out"));
    assert_eq!(s["verdict"], "pass");
    assert!(s["frame"].is_object());
    let (header, rows) = csv_rows(&run.out("out/moments.csv"));
    let e = header.iter().position(|h| h == "energy").unwrap();
    assert!(rows.iter().all(|r| r[1].unwrap().abs() < 1e-10 && r[e].unwrap().abs() < 1e-10));
}

#[test]
fn runs_are_byte_identical_and_hashes_match() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("random = { max_norm = 0.2 }", 0.05));
    for out in ["x", "y"] {
        let o = run.landau("simulate", Some(&cfg), out, &["--quiet", "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = summary(&run.out("x"))["files"].as_array().unwrap().clone();
    assert!(files.len() >= 5);
    for f in &files {
        let name = f["path"].as_str().unwrap();
        let a = fs::read(run.out("x").join(name)).unwrap();
        let b = fs::read(run.out("y").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        assert_eq!(hex::encode(Sha256::digest(&a)), f["sha256"].as_str().unwrap());
        assert_eq!(a.len() as u64, f["bytes"].as_u64().unwrap());
    }
    let o = run.landau("simulate", Some(&cfg), "z", &["--quiet", "--seed", "8"]);
    assert_eq!(code(&o), 0);
    assert_ne!(
        fs::read(run.out("x/trajectory.csv")).unwrap(),
        fs::read(run.out("z/trajectory.csv")).unwrap()
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let run = Run::new();
    let cfg = run.config("a.toml", &simulate_config("random = { max_norm = 0.2 }", 0.05));
    let o = run.landau("simulate", Some(&cfg), "first", &["--quiet", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let resolved = run.out("first/resolved_config.toml");
    let o = run.landau("simulate", Some(&resolved), "second", &["--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["trajectory.csv", "resolved_config.toml", "certification.json"] {
        assert_eq!(
            fs::read(run.out("first").join(name)).unwrap(),
            fs::read(run.out("second").join(name)).unwrap(),
            "{name}"
        );
    }
}

const SMALL_VERIFY: &str = "dimension = 2\ntruncation = 8\n\n[verify]\nrandom_runs = 2\noracle_truncation = 8\noracle_nodes = 32\noracle_eval_nodes = 12\n";

#[test]
fn verify_passes_on_a_small_battery() {
    let run = Run::new();
    let cfg = run.config("v.toml", SMALL_VERIFY);
    let o = run.landau("verify", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS operators.positivity"));
    assert!(!stdout.contains("FAIL"));
    let s = summary(&run.out("out"));
    assert_eq!(s["verdict"], "pass");
    assert!(s["checks"].as_array().unwrap().len() > 20);
    assert!(run.out("out/verify.json").exists());
}

#[test]
fn injected_fault_fails_verification() {
    let run = Run::new();
    let cfg = run.config("v.toml", &format!("{SMALL_VERIFY}fault = \"flip-laplace-beltrami-sign\"\n"));
    let o = run.landau("verify", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL operators.positivity"));
    assert_eq!(summary(&run.out("out"))["verdict"], "fail");
}

#[test]
fn oracle_agrees_for_random_data() {
    let run = Run::new();
    let text = simulate_config("random = { max_norm = 0.2 }", 0.05).replace("truncation = 10", "truncation = 8")
        + "\n[oracle]\nnodes_per_axis = 40\neval_nodes = 12\n";
    let cfg = run.config("o.toml", &text);
    let o = run.landau("oracle", Some(&cfg), "out", &[]);
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let results: Value = serde_json::from_str(&fs::read_to_string(run.out("out/oracle.json")).unwrap()).unwrap();
    let results = results.as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r["passed"] == true));
}

#[test]
fn commands_other_than_verify_need_a_config() {
    let run = Run::new();
    let o = run.landau("simulate", None, "out", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--config"));
}
