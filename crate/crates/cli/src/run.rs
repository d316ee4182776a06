use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use graspkit_core::geom::io::{read_ply, write_ply, PlyData};

/// Invalid invocation (as opposed to invalid data); exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'a str,
    config: &'a serde_json::Value,
    inputs: &'a [FileHash],
    outputs: &'a [FileHash],
}

/// Tracks what one subcommand reads and writes. Every input is hashed as it is read;
/// `finish` writes `config.json` and `manifest.json` next to the outputs.
pub struct Run {
    subcommand: &'static str,
    out: Option<PathBuf>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Run {
    pub fn new(subcommand: &'static str, out: Option<&Path>) -> Result<Self> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        }
        Ok(Self {
            subcommand,
            out: out.map(Path::to_path_buf),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Like `new` but the output directory is mandatory.
    pub fn with_out(subcommand: &'static str, out: Option<&Path>) -> Result<Self> {
        match out {
            Some(dir) => Self::new(subcommand, Some(dir)),
            None => usage(format!("{subcommand} requires --out <DIR>")),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        if !self.inputs.iter().any(|f| Path::new(&f.path) == path) {
            self.inputs.push(FileHash {
                path: path.display().to_string(),
                sha256: sha256(&bytes),
            });
        }
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).with_context(|| format!("invalid JSON in {}", path.display()))
    }

    pub fn read_ply(&mut self, path: &Path) -> Result<PlyData> {
        let bytes = self.read(path)?;
        read_ply(bytes.as_slice()).with_context(|| format!("invalid PLY {}", path.display()))
    }

    /// Hashes a file some other writer produced in the output directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).with_context(|| format!("cannot read back {}", path.display()))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256(&bytes),
        });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.as_deref().unwrap_or(Path::new(".")).join(name)
    }

    pub fn has_out(&self) -> bool {
        self.out.is_some()
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_ply(&mut self, name: &str, data: &PlyData) -> Result<()> {
        let mut bytes = Vec::new();
        write_ply(&mut bytes, data)?;
        self.write(name, &bytes)
    }

    /// Echoes the effective config and writes the manifest. Without an output directory
    /// nothing is written.
    pub fn finish(mut self, config: &serde_json::Value) -> Result<()> {
        if self.out.is_none() {
            return Ok(());
        }
        self.write_json("config.json", config)?;
        let manifest = Manifest {
            tool: "graspkit",
            version: env!("CARGO_PKG_VERSION"),
            core_version: graspkit_core::VERSION,
            subcommand: self.subcommand,
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.path("manifest.json");
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
    }
}
