//! Run manifests: every command records its resolved configuration and the
//! SHA-256 of each input next to its primary output, so any artifact can be
//! traced back and any run replayed. Manifests carry no wall-clock state;
//! re-running a command with identical inputs reproduces them byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, args: serde_json::Value) -> Manifest {
        Manifest {
            command: command.to_string(),
            args,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::io(format!("reading input {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(path.display().to_string(), format!("sha256:{hex}"));
        Ok(())
    }

    /// Checksum every regular file under a directory input.
    pub fn input_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(format!("reading input dir {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            self.input(&file)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `<primary>.manifest.json` (or `manifest.json` inside a
    /// directory output).
    pub fn write(&self, primary_output: &Path) -> Result<(), CliError> {
        let path = if primary_output.is_dir() {
            primary_output.join("manifest.json")
        } else {
            let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            primary_output.with_file_name(name)
        };
        let body = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::internal(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, body)
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}
