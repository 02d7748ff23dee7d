//! Sidecar manifests and atomic artifact writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Artifact role (`grid`, `model`, `dataset`, ...) to file name and sha256.
    pub artifacts: BTreeMap<String, ArtifactHash>,
    pub tool_version: String,
    pub duration_s: f64,
    /// Only set for grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub file: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, elapsed: Duration) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            artifacts: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_s: elapsed.as_secs_f64(),
            converged: None,
        }
    }

    pub fn add(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.artifacts.insert(
            role.to_string(),
            ArtifactHash {
                file: file_name(path),
                sha256: sha256_hex(bytes),
            },
        );
    }

    /// Writes the manifest next to `primary`.
    pub fn write_for(&self, primary: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary);
        write_atomic(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Write-temp-then-rename in the destination directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Reads an artifact and, when a manifest sits next to it, checks the hash
/// recorded under `role`. Returns the bytes and the manifest if any.
pub fn read_verified(path: &Path, role: &str) -> Result<(Vec<u8>, Option<RunManifest>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mpath = manifest_path(path);
    if !mpath.exists() {
        return Ok((bytes, None));
    }
    let text = fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", mpath.display()))?;
    let Some(entry) = manifest.artifacts.get(role) else {
        bail!("{} lists no {role} artifact", mpath.display());
    };
    let actual = sha256_hex(&bytes);
    if entry.sha256 != actual {
        bail!(
            "{} does not match its manifest: sha256 {actual}, recorded {}",
            path.display(),
            entry.sha256
        );
    }
    Ok((bytes, Some(manifest)))
}
