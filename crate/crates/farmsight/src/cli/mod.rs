//! Shared command plumbing: error-to-exit-code mapping, leveled logging,
//! seed derivation, and the run manifest that records what every invocation
//! read and wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU8, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub mod commands;
pub mod config;
pub mod ingest;

use config::AppConfig;

/// Validation errors exit 1, runtime faults exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

static LOG_LEVEL: AtomicU8 = AtomicU8::new(2);

pub fn set_log_level(level: LogLevel) {
    LOG_LEVEL.store(level as u8, Ordering::Relaxed);
}

fn enabled(level: LogLevel) -> bool {
    level as u8 <= LOG_LEVEL.load(Ordering::Relaxed)
}

pub fn warn(msg: impl AsRef<str>) {
    if enabled(LogLevel::Warn) {
        eprintln!("warn: {}", msg.as_ref());
    }
}

pub fn info(msg: impl AsRef<str>) {
    if enabled(LogLevel::Info) {
        eprintln!("info: {}", msg.as_ref());
    }
}

pub fn debug(msg: impl AsRef<str>) {
    if enabled(LogLevel::Debug) {
        eprintln!("debug: {}", msg.as_ref());
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Module seed derived from the single config seed by stable hashing, so
/// every subsystem gets an independent but reproducible stream.
pub fn derive_seed(seed: u64, module: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(module.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Written for every run; rerunning with an identical manifest's inputs
/// reproduces identical outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Digest of the effective config; changes iff a semantic parameter does.
    pub config_hash: String,
    /// Input path -> content digest.
    pub inputs: BTreeMap<String, String>,
    /// Files written under the output directory.
    pub outputs: Vec<String>,
}

/// Per-invocation state threaded through every command: the effective
/// config, the output directory, and the input/output ledger for the
/// manifest.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub config: AppConfig,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(out_dir: &Path, config: &AppConfig) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads an input file whole, recording its digest in the manifest.
    /// Missing or unreadable inputs are validation errors.
    pub fn read_input(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    /// Records an input that is consumed incrementally (daemon streams); the
    /// digest reflects the content at start of run.
    pub fn record_input(&mut self, path: &Path) {
        let digest = std::fs::read(path)
            .map(|b| sha256_hex(&b))
            .unwrap_or_else(|_| "unavailable".to_string());
        self.inputs.insert(path.display().to_string(), digest);
    }

    /// Writes a file into the output directory and records it.
    pub fn write_output(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Records an output produced by a component that writes incrementally
    /// (the alert sink appends to its log itself).
    pub fn note_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.write_output(name, &text)
    }

    pub fn manifest(&self, command: &str) -> RunManifest {
        let config_json =
            serde_json::to_vec(&self.config).expect("config serializes");
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config_hash: sha256_hex(&config_json),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }

    /// Writes `manifest.json` without consuming the context; used by the
    /// follow-mode alert loop so a stop at any point leaves a valid record.
    pub fn manifest_now(&self, command: &str) -> Result<(), CliError> {
        let manifest = self.manifest(command);
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("serialize manifest: {e}")))?;
        text.push('\n');
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Writes `manifest.json` and ends the run.
    pub fn finish(self, command: &str) -> Result<(), CliError> {
        self.manifest_now(command)
    }
}
