//! Output directory for one run, named by config hash and seed.
//!
//! Matrix and CSV artifacts are write-once: rewriting one with identical
//! bytes is allowed, anything else is an I/O error. Reports carry timings
//! and are always replaced.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
}

/// First 12 hex digits of the SHA-256 of `parts`, fed in order.
pub fn content_hash(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher
        .finalize()
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunDir {
    pub fn create(root: &Path, hash: &str, seed: u64) -> Result<Self, CliError> {
        let path = root.join(format!("{hash}-s{seed}"));
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_artifact(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let target = self.path.join(name);
        match fs::read(&target) {
            Ok(existing) if existing == content.as_bytes() => return Ok(target),
            Ok(_) => {
                return Err(CliError::io(
                    &target,
                    "refusing to overwrite an artifact with different content",
                ))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(&target, e)),
        }
        fs::write(&target, content).map_err(|e| CliError::io(&target, e))?;
        Ok(target)
    }

    pub fn write_report(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let target = self.path.join(name);
        fs::write(&target, content).map_err(|e| CliError::io(&target, e))?;
        Ok(target)
    }
}
