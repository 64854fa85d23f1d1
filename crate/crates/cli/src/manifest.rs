use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Resolved settings plus content hashes of every input and output.
pub struct Manifest {
    command: String,
    config: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> Self {
        Manifest {
            command: command.into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn note(&mut self, key: &str, v: Value) {
        self.extra.insert(key.into(), v);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let hashes = |ps: &[PathBuf]| -> std::io::Result<BTreeMap<String, String>> {
            ps.iter()
                .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
                .collect()
        };
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "inputs": hashes(&self.inputs)?,
            "outputs": hashes(&self.outputs)?,
            "notes": self.extra,
        });
        std::fs::write(
            path,
            serde_json::to_string_pretty(&doc).expect("json value") + "\n",
        )
    }
}
