//! Run manifests: a JSON record written next to each artifact describing how it was made.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// The argument vector the run was started with.
    pub command: Vec<String>,
    pub config: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub seed: Option<u64>,
    pub artifacts: BTreeMap<String, String>,
    /// Counts and statistics reported by the run.
    pub summary: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: std::env::args().collect(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed,
            artifacts: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.config.insert(key.to_owned(), to_value(value));
        self
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.summary.insert(key.to_owned(), to_value(value));
        self
    }

    pub fn input(&mut self, key: &str, path: &Path) -> io::Result<&mut Self> {
        let digest = InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        };
        self.inputs.insert(key.to_owned(), digest);
        Ok(self)
    }

    pub fn artifact(&mut self, key: &str, path: &Path) -> &mut Self {
        self.artifacts.insert(key.to_owned(), path.display().to_string());
        self
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_beside(&self, primary: &Path) -> io::Result<PathBuf> {
        let path = manifest_path(primary);
        let mut json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

fn to_value(value: impl Serialize) -> Value {
    serde_json::to_value(value).expect("manifest values are plain data")
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
