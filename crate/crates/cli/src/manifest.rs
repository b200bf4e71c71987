use crate::config::sha256_hex;
use relboltz::io::write_atomic;
use relboltz::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
    pub stage: String,
    /// Hash of the inputs the file was produced from.
    pub key: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub files: BTreeMap<String, FileEntry>,
    /// Wall-clock seconds per stage of the latest command.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    fn fresh(config_hash: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("relboltz".into(), relboltz::VERSION.into());
        versions.insert("relboltz-cli".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("container".into(), relboltz::io::VERSION.to_string());
        let t = now();
        Self { config_hash: config_hash.into(), versions, created_unix: t, updated_unix: t, files: BTreeMap::new(), timings: BTreeMap::new() }
    }

    /// Entries whose file is still present with the recorded checksum.
    fn verified(mut self, dir: &Path) -> Self {
        self.files.retain(|name, e| std::fs::read(dir.join(name)).map(|b| sha256_hex(&b) == e.sha256).unwrap_or(false));
        self
    }
}

/// Output directory plus the manifest being built for it.
pub struct Output {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl Output {
    pub fn open(dir: PathBuf, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let previous = std::fs::read(dir.join(MANIFEST)).ok().and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok());
        let mut manifest = match previous {
            Some(m) => m.verified(&dir),
            None => RunManifest::fresh(config_hash),
        };
        manifest.config_hash = config_hash.into();
        manifest.timings.clear();
        Ok(Self { dir, manifest })
    }

    /// Contents of `name` if the manifest lists it under `key` and the checksum matches.
    pub fn staged(&self, name: &str, key: &str) -> Option<Vec<u8>> {
        let e = self.manifest.files.get(name)?;
        if e.key != key {
            return None;
        }
        let bytes = std::fs::read(self.dir.join(name)).ok()?;
        (sha256_hex(&bytes) == e.sha256).then_some(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], stage: &str, key: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        let entry = FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() as u64, stage: stage.into(), key: key.into() };
        self.manifest.files.insert(name.into(), entry);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, stage: &str, key: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(name, text.as_bytes(), stage, key)
    }

    pub fn save_manifest(&mut self) -> Result<()> {
        self.manifest.updated_unix = now();
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staging_requires_key_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::open(dir.path().to_path_buf(), "h").unwrap();
        out.write("a.bin", b"abc", "assemble", "k1").unwrap();
        out.save_manifest().unwrap();
        let out = Output::open(dir.path().to_path_buf(), "h").unwrap();
        assert_eq!(out.staged("a.bin", "k1").unwrap(), b"abc");
        assert!(out.staged("a.bin", "k2").is_none());
        std::fs::write(dir.path().join("a.bin"), b"tampered").unwrap();
        let out = Output::open(dir.path().to_path_buf(), "h").unwrap();
        assert!(out.staged("a.bin", "k1").is_none());
        assert!(out.manifest.files.is_empty());
    }
}
