use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::detector::temp_path;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary file and rename into place. Returns the SHA-256 of the content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_path(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub name: String,
    pub sha256: String,
}

/// Key-value record of a run: settings plus the hash of every artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact.{} = sha256:{}", a.name, a.sha256);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Format {
                offset: i as u64 + 1,
                message: format!("manifest line {} is not `key = value`", i + 1),
            })?;
            match k.strip_prefix("artifact.") {
                Some(name) => m.artifacts.push(Artifact {
                    name: name.to_string(),
                    sha256: v.strip_prefix("sha256:").unwrap_or(v).to_string(),
                }),
                None => {
                    m.entries.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(m)
    }

    /// Re-hash every artifact under `dir`; returns `(name, matches)` pairs.
    pub fn verify(&self, dir: &Path) -> Result<Vec<(String, bool)>> {
        self.artifacts
            .iter()
            .map(|a| {
                let p = dir.join(&a.name);
                let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                Ok((a.name.clone(), sha256_hex(&bytes) == a.sha256))
            })
            .collect()
    }
}

/// Collects artifacts written into one output directory.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputDir {
            dir,
            manifest: Manifest::default(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let sha256 = write_atomic(&path, bytes)?;
        self.record(name, sha256);
        Ok(path)
    }

    pub fn record(&mut self, name: &str, sha256: String) {
        self.manifest.artifacts.retain(|a| a.name != name);
        self.manifest.artifacts.push(Artifact {
            name: name.to_string(),
            sha256,
        });
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_NAME);
        write_atomic(&path, self.manifest.to_text().as_bytes())?;
        Ok(path)
    }
}
