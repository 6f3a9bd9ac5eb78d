//! Run manifests: a JSON sidecar next to every output artifact recording how
//! it was produced.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

/// Collects inputs while a command runs, then writes the manifest.
pub struct Recorder {
    command: String,
    params: serde_json::Value,
    inputs: Vec<InputDigest>,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, params: &impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            params: serde_json::to_value(params).expect("parameters serialize"),
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Reads an input file, remembering its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|_| CliError::validation(format!("{} is not UTF-8", path.display())))
    }

    /// Writes the artifacts and, next to the first, `<name>.manifest.json`.
    pub fn finish(self, outputs: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
        for (path, bytes) in outputs {
            std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        }
        let manifest = RunManifest {
            command: self.command,
            params: self.params,
            inputs: self.inputs,
            outputs: outputs.iter().map(|(p, _)| p.clone()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(&outputs[0].0);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
