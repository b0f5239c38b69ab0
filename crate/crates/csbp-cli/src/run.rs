//! Run directories: runs/<UTC time>-<config digest>/.
//!
//! Artifacts are buffered and written by a single writer once all paths have
//! been aggregated.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    started_utc: String,
    elapsed_seconds: f64,
    artifacts: Vec<&'a str>,
    /// sha256 of the primary report (summary.json or report.json)
    report_digest: String,
}

pub struct Run {
    command: String,
    config: RunConfig,
    resolved: String,
    started: DateTime<Utc>,
    clock: Instant,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Run {
    pub fn start(command: &str, config: RunConfig) -> Self {
        let resolved = config.to_toml();
        Run { command: command.into(), config, resolved, started: Utc::now(), clock: Instant::now(), artifacts: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("summaries serialise");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    fn directory(&self) -> PathBuf {
        let digest = sha256_hex(format!("{}\n{}", self.command, self.resolved).as_bytes());
        let stem = format!("{}-{}", self.started.format("%Y%m%dT%H%M%SZ"), &digest[..12]);
        let base = self.config.out.join(&stem);
        let mut dir = base.clone();
        let mut k = 2;
        while dir.exists() {
            dir = PathBuf::from(format!("{}-{k}", base.display()));
            k += 1;
        }
        dir
    }

    /// Write everything; returns the run directory.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let dir = self.directory();
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        write(&dir.join("config.resolved"), self.resolved.as_bytes())?;
        for (name, bytes) in &self.artifacts {
            write(&dir.join(name), bytes)?;
        }
        let primary = self.artifacts.iter().find(|a| a.0 == "report.json" || a.0 == "summary.json");
        let record = RunRecord {
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config: &self.config,
            started_utc: self.started.to_rfc3339(),
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            artifacts: std::iter::once("config.resolved").chain(self.artifacts.iter().map(|a| a.0.as_str())).collect(),
            report_digest: primary.map(|a| sha256_hex(&a.1)).unwrap_or_default(),
        };
        let text = serde_json::to_string_pretty(&record).expect("run records serialise") + "\n";
        write(&dir.join("run.json"), text.as_bytes())?;
        Ok(dir)
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
