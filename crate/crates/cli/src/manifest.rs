//! Run manifests: enough to re-run a command and check its outputs byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use affine_dpm::io;
use affine_dpm::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Command-line arguments without `--workers` and `--out-dir`.
    pub args: Vec<String>,
    pub master_seed: u64,
    pub version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

/// Drops the flags that may change between runs without changing outputs.
pub fn portable_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--workers" || a == "--out-dir" {
            it.next();
        } else if !(a.starts_with("--workers=") || a.starts_with("--out-dir=")) {
            out.push(a.clone());
        }
    }
    out
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(format!("{command}_manifest.json"))
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        io::write_json(&manifest_path(out_dir, &self.command), self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    /// Output files in `out_dir` whose hash differs from the manifest.
    pub fn mismatches(&self, out_dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            let p = out_dir.join(&f.path);
            if !p.exists() || sha256_file(&p)? != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn check_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            if sha256_file(Path::new(&f.path))? != f.sha256 {
                return Err(Error::InvalidParameter(format!(
                    "input {} changed since the manifest was written",
                    f.path
                )));
            }
        }
        Ok(())
    }
}
