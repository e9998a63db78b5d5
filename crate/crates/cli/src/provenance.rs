use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Everything needed to re-run a command: its resolved configuration and
/// digests of the files it read and wrote. No timestamps, so identical runs
/// produce identical records.
#[derive(Debug, Serialize)]
pub struct RunRecord<C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: C,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn digests(paths: &[&Path]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl<C: Serialize> RunRecord<C> {
    pub fn new(command: &'static str, config: C, inputs: &[&Path], outputs: &[&Path]) -> anyhow::Result<Self> {
        Ok(RunRecord {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `<file>.run.json` next to a single-file output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    path.with_file_name(name)
}
