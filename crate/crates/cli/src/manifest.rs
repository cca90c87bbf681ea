//! Per-run manifest written next to the outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use sketchlattice::Result;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub checkpoint: Option<String>,
    /// `sha256:<hex>` of `"blob <len>\0" + bytes`, git-style.
    pub checkpoint_hash: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoint: None,
            checkpoint_hash: None,
        }
    }

    pub fn inputs(mut self, paths: &[PathBuf]) -> Self {
        self.inputs = paths.iter().map(|p| p.display().to_string()).collect();
        self
    }

    pub fn checkpoint(&mut self, path: &Path) -> Result<()> {
        self.checkpoint = Some(path.display().to_string());
        self.checkpoint_hash = Some(content_hash(&std::fs::read(path)?));
        Ok(())
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_empty_blob() {
        // sha256 of the 7 bytes "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "sha256:473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
