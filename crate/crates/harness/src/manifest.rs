//! Output manifests and atomic file writes.
//!
//! Every command writes its files first and its `manifest.json` last, so a
//! manifest only ever lists files that exist with the recorded digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{bail, Context};
use calconf_core::digest::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Write through a sibling temp file and rename, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

/// Forward-slash path of `path` relative to `root`.
pub fn rel_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: Value,
    /// Digests of upstream manifests this output was derived from.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Relative path to sha256 of the file bytes.
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub episodes: BTreeMap<String, EpisodeStatus>,
}

impl Manifest {
    pub fn new(kind: &str, seed: Option<u64>, config: Value) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            kind: kind.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: BTreeMap::new(),
            files: BTreeMap::new(),
            episodes: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Digest of the manifest file in `dir`, used to link outputs to inputs.
    pub fn digest_of(dir: &Path) -> anyhow::Result<String> {
        file_digest(&dir.join(MANIFEST_FILE))
    }

    /// Record `path` (inside `root`) with the digest of its current bytes.
    pub fn record(&mut self, root: &Path, path: &Path) -> anyhow::Result<()> {
        self.files.insert(rel_path(root, path), file_digest(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }

    /// Read a listed file, refusing it if its bytes no longer match.
    pub fn read_verified(&self, root: &Path, rel: &str) -> anyhow::Result<Vec<u8>> {
        let Some(expected) = self.files.get(rel) else {
            bail!("{rel} is not listed in {}", root.join(MANIFEST_FILE).display());
        };
        let path = root.join(rel);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            bail!("{} digest {actual} does not match manifest digest {expected}", path.display());
        }
        Ok(bytes)
    }

    pub fn read_verified_json<T: DeserializeOwned>(&self, root: &Path, rel: &str) -> anyhow::Result<T> {
        let bytes = self.read_verified(root, rel)?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", root.join(rel).display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a/b.json");
        write_json(&f, &serde_json::json!({"x": 1})).unwrap();
        let mut m = Manifest::new("test", Some(1), Value::Null);
        m.record(dir.path(), &f).unwrap();
        assert!(m.files.contains_key("a/b.json"));
        m.write(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let v: Value = back.read_verified_json(dir.path(), "a/b.json").unwrap();
        assert_eq!(v["x"], 1);
        fs::write(&f, b"{\"x\": 2}").unwrap();
        assert!(back.read_verified(dir.path(), "a/b.json").is_err());
        assert!(back.read_verified(dir.path(), "missing.json").is_err());
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
