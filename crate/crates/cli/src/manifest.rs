use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::output::OutputDir;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub runs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// Covers the resolved settings and the content of every input file.
    pub config_hash: String,
    pub seeds: Seeds,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub elapsed_ms: u128,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    Ok(FileEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Hash of the canonical JSON of `settings` followed by the input hashes.
pub fn config_hash<T: Serialize>(settings: &T, inputs: &[FileEntry]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(settings).expect("settings serialize"));
    for i in inputs {
        h.update(i.sha256.as_bytes());
    }
    format!("{:x}", h.finalize())
}

impl RunManifest {
    /// Hashes every file written to `out` and writes the manifest next to
    /// them.
    pub fn finish(
        command: &str,
        config_hash: String,
        seeds: Seeds,
        inputs: Vec<FileEntry>,
        out: &mut OutputDir,
        started: std::time::Instant,
    ) -> Result<RunManifest, CliError> {
        let outputs = out
            .written()
            .iter()
            .map(|rel| {
                let mut e = hash_file(&out.root().join(rel))?;
                e.path = rel.display().to_string();
                Ok(e)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let m = RunManifest {
            version: format!("textcast {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_hash,
            seeds,
            inputs,
            outputs,
            elapsed_ms: started.elapsed().as_millis(),
        };
        out.write_json(MANIFEST_FILE, &m)?;
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<RunManifest, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::bad_input(&path, e))
    }
}
