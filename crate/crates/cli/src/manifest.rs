//! Run manifests: what was run, with which parameters, and digests of every
//! file it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub terminations: Vec<String>,
    pub notes: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into one directory and remembers their digests.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &str, rows: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = String>,
    {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn into_files(self) -> Vec<OutputFile> {
        self.files
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not a run manifest: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub enum FileStatus {
    Ok,
    Missing,
    Changed { expected: String, found: String },
}

/// Recomputes the digest of every output listed in the manifest at `path`.
pub fn check_manifest(path: &Path) -> Result<Vec<(String, FileStatus)>, CheckError> {
    let text = fs::read_to_string(path).map_err(|source| CheckError::Io { path: path.into(), source })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|source| CheckError::Parse { path: path.into(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(manifest
        .outputs
        .iter()
        .map(|f| {
            let status = match fs::read(base.join(&f.path)) {
                Err(_) => FileStatus::Missing,
                Ok(bytes) => {
                    let found = sha256_hex(&bytes);
                    if found == f.sha256 {
                        FileStatus::Ok
                    } else {
                        FileStatus::Changed { expected: f.sha256.clone(), found }
                    }
                }
            };
            (f.path.clone(), status)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_csv("a.csv", "x,y", ["1,2".to_string(), "3,4".to_string()]).unwrap();
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text, "x,y\n1,2\n3,4\n");
        assert_eq!(out.into_files()[0].sha256, sha256_hex(text.as_bytes()));
    }
}
