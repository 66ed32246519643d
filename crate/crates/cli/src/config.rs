//! Run configuration: a TOML document validated before any computation.
//!
//! ```toml
//! dimension = 2
//! truncation = 16
//! seed = 0
//! delta = 0.5                 # optional weight-rate override
//!
//! [initial]                   # exactly one of coefficients / mixture / random
//! coefficients = [ { index = [2, 0], value = 0.1414 }, { index = [0, 2], value = -0.1414 } ]
//!
//! [integrator]
//! dt = 1e-3
//! t_final = 1.0
//! output_every = 10
//!
//! [oracle]
//! nodes_per_axis = 64
//! eval_nodes = 24
//!
//! [verify]                    # any field of the verification suite
//! random_runs = 10
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use landau_core::moments::GaussianMixtureSpec;
use landau_core::verify::VerifyConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    pub index: Vec<u32>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInitial {
    /// Upper bound on `‖g_0‖`.
    pub max_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<CoefficientEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<GaussianMixtureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomInitial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn one() -> usize {
    1
}

fn default_safety() -> f64 {
    2.5
}

fn default_oracle_tolerance() -> f64 {
    landau_core::oracle::DEFAULT_CONVERGENCE_TOL
}

fn default_max_discrepancy() -> f64 {
    1e-4
}

fn default_control_min() -> f64 {
    1e-2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Quadrature nodes per axis for the collision integral.
    #[serde(default)]
    pub nodes_per_axis: Option<usize>,
    /// Nodes per axis of the comparison grid.
    #[serde(default)]
    pub eval_nodes: Option<usize>,
    #[serde(default = "default_oracle_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_discrepancy")]
    pub max_discrepancy: f64,
    /// The negative control must exceed this discrepancy.
    #[serde(default = "default_control_min")]
    pub control_min: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            nodes_per_axis: None,
            eval_nodes: None,
            tolerance: default_oracle_tolerance(),
            max_discrepancy: default_max_discrepancy(),
            control_min: default_control_min(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    pub truncation: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    /// Partial overrides of the verification suite; resolved to every field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<toml::Table>,
}

/// Which initial-condition variant a config selects.
#[derive(Clone, Debug, PartialEq)]
pub enum Initial<'a> {
    Coefficients(&'a [CoefficientEntry]),
    Mixture(&'a GaussianMixtureSpec),
    Random(&'a RandomInitial),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Structural validation shared by all commands.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(2..=3).contains(&self.dimension) {
            return Err(invalid("dimension", format!("must be 2 or 3, got {}", self.dimension)));
        }
        if self.truncation < 2 {
            return Err(invalid(
                "truncation",
                format!("must be at least 2 (the level-2 projector is undefined below), got {}", self.truncation),
            ));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(invalid("delta", format!("must lie in (0, 1], got {delta}")));
            }
        }
        if let Some(initial) = &self.initial {
            self.validate_initial(initial)?;
        }
        if let Some(i) = &self.integrator {
            if !(i.dt > 0.0 && i.dt.is_finite()) {
                return Err(invalid("integrator.dt", format!("must be positive and finite, got {}", i.dt)));
            }
            if !(i.t_final > 0.0 && i.t_final.is_finite()) {
                return Err(invalid(
                    "integrator.t_final",
                    format!("must be positive and finite, got {}", i.t_final),
                ));
            }
            if i.output_every == 0 {
                return Err(invalid("integrator.output_every", "must be at least 1"));
            }
            if !(i.safety > 0.0 && i.safety.is_finite()) {
                return Err(invalid("integrator.safety", format!("must be positive, got {}", i.safety)));
            }
            let steps = (i.t_final / i.dt).round() as usize;
            if steps % i.output_every != 0 {
                return Err(invalid(
                    "integrator.output_every",
                    format!("{} does not divide the step count {steps}", i.output_every),
                ));
            }
        }
        let o = &self.oracle;
        if o.nodes_per_axis == Some(0) {
            return Err(invalid("oracle.nodes_per_axis", "must be positive"));
        }
        if let Some(e) = o.eval_nodes {
            if e < self.truncation + 1 {
                return Err(invalid(
                    "oracle.eval_nodes",
                    format!("must be at least truncation + 1 = {}, got {e}", self.truncation + 1),
                ));
            }
        }
        for (field, x) in [
            ("oracle.tolerance", o.tolerance),
            ("oracle.max_discrepancy", o.max_discrepancy),
            ("oracle.control_min", o.control_min),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {x}")));
            }
        }
        if self.verify.is_some() {
            self.verify_config()?;
        }
        Ok(())
    }

    fn validate_initial(&self, initial: &InitialCondition) -> Result<(), ConfigError> {
        let present: Vec<&str> = [
            ("coefficients", initial.coefficients.is_some()),
            ("mixture", initial.mixture.is_some()),
            ("random", initial.random.is_some()),
        ]
        .iter()
        .filter(|(_, p)| *p)
        .map(|(n, _)| *n)
        .collect();
        if present.len() != 1 {
            return Err(invalid(
                "initial",
                format!(
                    "exactly one of coefficients, mixture, random must be given, found {}",
                    if present.is_empty() { "none".to_string() } else { present.join(", ") }
                ),
            ));
        }
        if let Some(entries) = &initial.coefficients {
            let mut seen = BTreeSet::new();
            for (i, e) in entries.iter().enumerate() {
                let field = format!("initial.coefficients[{i}]");
                if e.index.len() != self.dimension {
                    return Err(invalid(
                        format!("{field}.index"),
                        format!("has {} entries, dimension is {}", e.index.len(), self.dimension),
                    ));
                }
                let degree: u32 = e.index.iter().sum();
                if degree as usize > self.truncation {
                    return Err(invalid(
                        format!("{field}.index"),
                        format!("degree {degree} exceeds truncation {}", self.truncation),
                    ));
                }
                if !e.value.is_finite() {
                    return Err(invalid(format!("{field}.value"), "must be finite"));
                }
                if !seen.insert(e.index.clone()) {
                    return Err(invalid(format!("{field}.index"), format!("{:?} appears twice", e.index)));
                }
            }
        }
        if let Some(m) = &initial.mixture {
            if m.dimension() != self.dimension {
                return Err(invalid(
                    "initial.mixture",
                    format!("has dimension {}, config has {}", m.dimension(), self.dimension),
                ));
            }
            m.validate().map_err(|e| invalid("initial.mixture", e.to_string()))?;
        }
        if let Some(r) = &initial.random {
            if !(r.max_norm > 0.0 && r.max_norm.is_finite()) {
                return Err(invalid("initial.random.max_norm", format!("must be positive, got {}", r.max_norm)));
            }
        }
        Ok(())
    }

    pub fn initial(&self) -> Result<Initial<'_>, ConfigError> {
        let i = self
            .initial
            .as_ref()
            .ok_or_else(|| invalid("initial", "this command needs an initial condition"))?;
        Ok(if let Some(c) = &i.coefficients {
            Initial::Coefficients(c)
        } else if let Some(m) = &i.mixture {
            Initial::Mixture(m)
        } else {
            Initial::Random(i.random.as_ref().expect("validated"))
        })
    }

    pub fn integrator(&self) -> Result<&IntegratorSection, ConfigError> {
        self.integrator
            .as_ref()
            .ok_or_else(|| invalid("integrator", "this command needs an [integrator] section"))
    }

    pub fn oracle_nodes(&self) -> usize {
        self.oracle
            .nodes_per_axis
            .unwrap_or(if self.dimension == 2 { 64 } else { 32 })
    }

    pub fn oracle_eval_nodes(&self) -> usize {
        self.oracle.eval_nodes.unwrap_or(self.truncation + 4)
    }

    /// The default suite for this dimension, truncation and seed with the
    /// `[verify]` table laid over it.
    pub fn verify_config(&self) -> Result<VerifyConfig, ConfigError> {
        let mut base = VerifyConfig::for_dimension(self.dimension);
        base.truncation = self.truncation;
        base.seed = self.seed;
        let mut table = toml::Table::try_from(&base).expect("verify config is representable as TOML");
        if let Some(overrides) = &self.verify {
            for (k, v) in overrides {
                table.insert(k.clone(), v.clone());
            }
        }
        let config: VerifyConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| invalid("verify", e.message().to_string()))?;
        if config.dimension != self.dimension {
            return Err(invalid("verify.dimension", "must match the top-level dimension"));
        }
        config.validate().map_err(|e| invalid("verify", e.to_string()))?;
        Ok(config)
    }

    /// Fill every default so the document reproduces the run on its own.
    pub fn resolved(&self, command: &str) -> Result<RunConfig, ConfigError> {
        let mut r = self.clone();
        r.oracle.nodes_per_axis = Some(self.oracle_nodes());
        r.oracle.eval_nodes = Some(self.oracle_eval_nodes());
        if command == "verify" {
            let v = self.verify_config()?;
            r.verify = Some(toml::Table::try_from(&v).expect("verify config is representable as TOML"));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "dimension = 2\ntruncation = 8\n";

    fn err(text: &str) -> String {
        RunConfig::from_toml(text).unwrap_err().to_string()
    }

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(c.oracle_nodes(), 64);
        assert_eq!(c.oracle_eval_nodes(), 12);
        assert!(c.initial().is_err());
    }

    #[test]
    fn field_paths_in_errors() {
        assert!(err("dimension = 4\ntruncation = 8\n").starts_with("dimension:"));
        assert!(err("dimension = 2\ntruncation = 1\n").starts_with("truncation:"));
        let e = err(&format!("{BASE}[integrator]\ndt = -1.0\nt_final = 1.0\n"));
        assert!(e.starts_with("integrator.dt:"), "{e}");
        let e = err(&format!("{BASE}[integrator]\ndt = 0.001\nt_final = 1.0\noutput_every = 7\n"));
        assert!(e.starts_with("integrator.output_every:"), "{e}");
        let e = err(&format!(
            "{BASE}[initial]\ncoefficients = [{{ index = [2, 0], value = 0.1 }}, {{ index = [9, 0], value = 0.1 }}]\n"
        ));
        assert!(e.starts_with("initial.coefficients[1].index:"), "{e}");
        let e = err(&format!("{BASE}[verify]\nrandom_runz = 3\n"));
        assert!(e.starts_with("verify:") && e.contains("random_runz"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(err(&format!("{BASE}colour = 1\n")).contains("colour"));
    }

    #[test]
    fn exactly_one_initial_condition() {
        let e = err(&format!(
            "{BASE}[initial]\ncoefficients = []\n[initial.random]\nmax_norm = 0.3\n"
        ));
        assert!(e.starts_with("initial:") && e.contains("coefficients, random"), "{e}");
        let e = err(&format!("{BASE}[initial]\n"));
        assert!(e.contains("found none"), "{e}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::from_toml(&format!(
            "{BASE}[initial.random]\nmax_norm = 0.3\n[integrator]\ndt = 0.001\nt_final = 0.1\n[verify]\nrandom_runs = 2\n"
        ))
        .unwrap();
        let r = c.resolved("verify").unwrap();
        let back = RunConfig::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.verify_config().unwrap().random_runs, 2);
        assert_eq!(back.verify_config().unwrap().truncation, 8);
    }
}
