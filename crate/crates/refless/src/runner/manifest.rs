//! Run manifests: every output directory carries exactly one, recording
//! the command, config snapshot, seeds, input hashes and outcome.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Completed,
    /// A stage failed; outputs may be partial.
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub seed_override: Option<u64>,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub status: RunStatus,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn begin(
        command: impl Into<String>,
        seed: u64,
        seed_override: Option<u64>,
        config: serde_json::Value,
    ) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            seed,
            seed_override,
            config,
            input_hashes: BTreeMap::new(),
            status: RunStatus::Running,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn finish(&mut self, status: RunStatus) {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.status = status;
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::begin("run", 42, None, serde_json::json!({"a": 1}));
        manifest
            .input_hashes
            .insert("x.jsonl".into(), "abc".into());
        manifest.write(dir.path()).unwrap();
        let loaded = RunManifest::read(dir.path()).unwrap();
        assert_eq!(loaded.status, RunStatus::Running);
        manifest.finish(RunStatus::Completed);
        manifest.write(dir.path()).unwrap();
        let loaded = RunManifest::read(dir.path()).unwrap();
        assert_eq!(loaded.status, RunStatus::Completed);
        assert!(loaded.finished_at.is_some());
    }

    #[test]
    fn file_hashing_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        std::fs::write(&path, "hello").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }
}
