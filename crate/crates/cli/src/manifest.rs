use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fogclear_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// One per run, written next to the outputs as `<command>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<Artifact>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Collects artifacts as they are written.
pub struct Outputs {
    artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn new() -> Self {
        Outputs { artifacts: Vec::new() }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes)?;
        self.artifacts.push(Artifact {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn finish(
        self,
        out_dir: &Path,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        started: f64,
    ) -> Result<PathBuf> {
        let m = RunManifest {
            command: command.to_string(),
            seed,
            config,
            started_unix_s: started,
            finished_unix_s: unix_now(),
            outputs: self.artifacts,
        };
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(format!("{command}.manifest.json"));
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
