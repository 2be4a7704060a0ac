use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cqrlab_core::harness::ExperimentConfig;

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the fully resolved configuration; stamped into checkpoints.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(
        serde_json::to_string(cfg)
            .expect("config serializes")
            .as_bytes(),
    )
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub tool_version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub output_dir: PathBuf,
    pub config_file: Option<PathBuf>,
    pub config_file_sha256: String,
    pub resolved_config_sha256: Option<String>,
    pub resolved_config: Option<&'a ExperimentConfig>,
    pub inputs: Vec<PathBuf>,
}

impl<'a> RunManifest<'a> {
    pub fn new(
        command: &'a str,
        cfg: Option<&'a ExperimentConfig>,
        config_file: Option<&Path>,
        raw: &[u8],
        out: &Path,
    ) -> Self {
        Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            output_dir: out.to_path_buf(),
            config_file: config_file.map(Path::to_path_buf),
            config_file_sha256: sha256_hex(raw),
            resolved_config_sha256: cfg.map(config_hash),
            resolved_config: cfg,
            inputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}
