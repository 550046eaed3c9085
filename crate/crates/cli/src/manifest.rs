//! Run manifest written next to every result. It is created with status
//! `running` before the experiment starts and finalised afterwards, so an
//! interrupted run leaves a visible trace.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub tool_version: String,
    pub config_path: Option<String>,
    /// SHA-256 of the raw configuration bytes.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub started_unix_s: u64,
    pub wall_time_s: Option<f64>,
    pub status: Status,
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ManifestWriter {
    dir: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl ManifestWriter {
    pub fn start(dir: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let w = ManifestWriter { dir: dir.to_path_buf(), manifest, start: Instant::now() };
        w.write()?;
        Ok(w)
    }

    pub fn new_manifest(experiment: &str, config_path: Option<&Path>, bytes: &[u8]) -> RunManifest {
        RunManifest {
            experiment: experiment.to_string(),
            tool_version: format!("trimon {}", trimon_core::VERSION),
            config_path: config_path.map(|p| p.display().to_string()),
            config_sha256: config_hash(bytes),
            seed: None,
            threads: None,
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_s: None,
            status: Status::Running,
            error: None,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, outputs: Vec<String>, error: Option<&CliError>) -> Result<RunManifest, CliError> {
        self.manifest.wall_time_s = Some(self.start.elapsed().as_secs_f64());
        self.manifest.outputs = outputs;
        self.manifest.status = if error.is_some() { Status::Failed } else { Status::Completed };
        self.manifest.error = error.map(|e| e.to_string());
        self.write()?;
        Ok(self.manifest)
    }

    fn write(&self) -> Result<(), CliError> {
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}
