//! Output directories: refuse to clobber, stage everything in memory, write
//! through temporary files, finish with a manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::UsageError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub model_version: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Files read by a command, kept so the manifest can digest them.
#[derive(Default)]
pub struct Inputs {
    digests: Vec<FileDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.digests.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }
}

pub struct Staged {
    dir: PathBuf,
    force: bool,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Staged {
    /// Fails up front if any of `names` (or the manifest) already exists in
    /// `dir` and `force` is off.
    pub fn new(dir: &Path, names: &[&str], force: bool) -> Result<Self> {
        if !force {
            for name in names.iter().chain(&[MANIFEST]) {
                let p = dir.join(name);
                if p.exists() {
                    return Err(UsageError(format!("{} exists; pass --force to overwrite", p.display())).into());
                }
            }
        }
        Ok(Self { dir: dir.to_owned(), force, files: Vec::new() })
    }

    pub fn add(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &'static str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_jsonl<'a, T: Serialize + 'a>(&mut self, name: &'static str, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
        let mut bytes = Vec::new();
        dto_core::io::write_jsonl(&mut bytes, items)?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn commit(self, mut manifest: RunManifest) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        manifest.outputs =
            self.files.iter().map(|(n, b)| FileDigest { path: (*n).to_owned(), sha256: sha256_hex(b) }).collect();
        manifest.finished_unix_ms = now_ms();
        let mut m = serde_json::to_vec_pretty(&manifest)?;
        m.push(b'\n');
        for (name, bytes) in self.files.iter().map(|(n, b)| (*n, b)).chain([(MANIFEST, &m)]) {
            let target = self.dir.join(name);
            if !self.force && target.exists() {
                return Err(UsageError(format!("{} appeared while running; not overwriting", target.display())).into());
            }
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(bytes)?;
            tmp.persist(&target).with_context(|| format!("writing {}", target.display()))?;
        }
        Ok(())
    }
}

pub fn manifest<C: Serialize>(command: &'static str, config: &C, inputs: Inputs, started: u128) -> Result<RunManifest> {
    let config = serde_json::to_value(config)?;
    let config_digest = sha256_hex(&serde_json::to_vec(&config)?);
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        config_digest,
        seed: None,
        model_version: None,
        inputs: inputs.digests,
        outputs: Vec::new(),
        started_unix_ms: started,
        finished_unix_ms: 0,
    })
}
