//! Output directory bookkeeping, CSV emission and the run summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use landau_core::io::fmt_f64;
use landau_core::moments::{AffineFrame, MomentState};
use landau_core::verify::CheckResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Writes files under one directory and records their hashes.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<()> {
        fs::write(self.root.join(name), contents)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn inventory(&self) -> Vec<FileEntry> {
        let mut files = self.files.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Comma-separated rows with a fixed numeric format.
#[derive(Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut csv = Csv::default();
        csv.text.push_str(&header.join(","));
        csv.text.push('\n');
        csv
    }

    /// `None` becomes an empty field.
    pub fn row(&mut self, values: impl IntoIterator<Item = Option<f64>>) {
        let fields: Vec<String> = values.into_iter().map(|v| v.map(fmt_f64).unwrap_or_default()).collect();
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Wall-clock seconds per named phase.
pub struct PhaseTimer {
    current: Option<(String, Instant)>,
    pub timings: BTreeMap<String, f64>,
}

impl PhaseTimer {
    pub fn new() -> Self {
        PhaseTimer {
            current: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn start(&mut self, phase: &str) {
        self.stop();
        self.current = Some((phase.to_string(), Instant::now()));
    }

    pub fn stop(&mut self) {
        if let Some((name, start)) = self.current.take() {
            *self.timings.entry(name).or_default() += start.elapsed().as_secs_f64();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisManifest {
    pub dimension: usize,
    pub truncation: usize,
    /// Multi-indices in coefficient order.
    pub ordering: Vec<Vec<u32>>,
}

/// Non-deterministic data, kept apart from everything else.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub finished_unix_seconds: u64,
    pub timings_seconds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict_reason: Option<String>,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_state: Option<MomentState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<AffineFrame>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_margin_violation: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub checks: Vec<CheckResult>,
    pub files: Vec<FileEntry>,
    pub metadata: Metadata,
}

impl RunSummary {
    pub fn new(command: &str, config: RunConfig) -> Self {
        RunSummary {
            command: command.to_string(),
            verdict: Verdict::NotApplicable,
            verdict_reason: None,
            config,
            basis: None,
            moment_state: None,
            frame: None,
            max_margin_violation: None,
            checks: Vec::new(),
            files: Vec::new(),
            metadata: Metadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                finished_unix_seconds: 0,
                timings_seconds: BTreeMap::new(),
            },
        }
    }

    /// Record the inventory and timings, then write `summary.json` (which is
    /// not itself part of the inventory).
    pub fn finish(mut self, out: &OutputDir, timer: PhaseTimer) -> std::io::Result<Self> {
        self.files = out.inventory();
        self.metadata.timings_seconds = timer.timings;
        self.metadata.finished_unix_seconds = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(out.root().join("summary.json"), text)?;
        Ok(self)
    }
}
