use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::AppResult;
use crate::io::{sha256_file, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// One per command invocation, written last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub out_dir: PathBuf,
    pub exit_code: i32,
    pub artifacts: Vec<Artifact>,
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn begin(
        command: &str,
        config_path: Option<&Path>,
        seed: Option<u64>,
        out_dir: &Path,
    ) -> Self {
        Self {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            started_at: timestamp(),
            finished_at: String::new(),
            out_dir: out_dir.to_path_buf(),
            exit_code: 0,
            artifacts: Vec::new(),
        }
    }

    /// Checksums `files` (relative to the output directory) and writes the
    /// manifest next to them.
    pub fn finish(mut self, files: &[&str], exit_code: i32) -> AppResult<Self> {
        self.finished_at = timestamp();
        self.exit_code = exit_code;
        for f in files {
            let p = self.out_dir.join(f);
            if !p.exists() {
                continue;
            }
            let bytes = std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0);
            self.artifacts.push(Artifact {
                path: f.to_string(),
                sha256: sha256_file(&p)?,
                bytes,
            });
        }
        write_json(&self.out_dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }
}
