use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use tagvocab::{CleaningPolicy, DatasetSummary};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    /// What the file is for, e.g. `global_growth` or `user_accumulation`.
    pub role: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedStage {
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: Option<String>,
}

/// Machine-readable account of one run. `report` writes it as its manifest
/// without timings; `--json-report` includes them.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub input: Option<InputInfo>,
    pub cleaning_policy: Option<CleaningPolicy>,
    pub summary: Option<DatasetSummary>,
    pub artifacts: Vec<Artifact>,
    pub parameters: BTreeMap<String, Value>,
    pub skipped: Vec<SkippedStage>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
    #[serde(skip)]
    timings: Vec<(String, f64)>,
    #[serde(skip)]
    quiet: bool,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, quiet: bool) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            input: None,
            cleaning_policy: None,
            summary: None,
            artifacts: Vec::new(),
            parameters: BTreeMap::new(),
            skipped: Vec::new(),
            warnings: Vec::new(),
            timings_ms: None,
            timings: Vec::new(),
            quiet,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.to_string(), v);
    }

    pub fn artifact(&mut self, path: impl Into<String>, role: &str) {
        let path = path.into();
        if path != "-" {
            self.artifacts.push(Artifact { path, role: role.to_string() });
        }
    }

    pub fn skip(&mut self, stage: &str, reason: impl Into<String>) {
        let reason = reason.into();
        self.note(&format!("skipped {stage}: {reason}"));
        self.skipped.push(SkippedStage { stage: stage.to_string(), reason });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        self.note(&format!("warning: {msg}"));
        self.warnings.push(msg);
    }

    pub fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Runs `f` and records its wall time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self);
        self.timings.push((name.to_string(), t0.elapsed().as_secs_f64() * 1e3));
        out
    }

    /// Artifacts listed in the report must exist and be non-empty.
    pub fn check_artifacts(&self, base: &Path) -> Result<()> {
        for a in &self.artifacts {
            let p = base.join(&a.path);
            let len = std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0);
            if len == 0 {
                return Err(CliError::Analysis(format!("artifact {} is missing or empty", p.display())));
            }
        }
        Ok(())
    }

    /// JSON without timings, stable across runs.
    pub fn to_manifest(&self) -> String {
        let mut r = self.clone();
        r.timings_ms = None;
        serde_json::to_string_pretty(&r).expect("report serializes") + "\n"
    }

    pub fn to_json_with_timings(&self) -> String {
        let mut r = self.clone();
        let mut t = BTreeMap::new();
        for (name, ms) in &self.timings {
            *t.entry(name.clone()).or_insert(0.0) += ms;
        }
        r.timings_ms = Some(t);
        serde_json::to_string_pretty(&r).expect("report serializes") + "\n"
    }
}
