//! Artifact bookkeeping: every command records what it wrote, with content
//! hashes, into `manifest.json`. The creation timestamp lives only here, so
//! all other artifacts are byte-identical across reruns.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
    /// Volatile artifacts (wall-clock timings) are expected to differ
    /// between reruns; everything else must be byte-identical.
    pub volatile: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub created_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Collects artifacts for one command invocation and writes the manifest
/// last.
pub struct ArtifactSet {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seed: Option<u64>,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactSet {
    pub fn create(dir: &Path, command: &str, config_hash: String, seed: Option<u64>) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash,
            seed,
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        self.write_entry(name, bytes, false)
    }

    pub fn write_volatile(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        self.write_entry(name, bytes, true)
    }

    fn write_entry(&mut self, name: &str, bytes: &[u8], volatile: bool) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.entries.push(ArtifactEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
            volatile,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(self) -> io::Result<Manifest> {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            command: self.command,
            config_hash: self.config_hash,
            seed: self.seed,
            created_unix,
            artifacts: self.entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> io::Result<Manifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
