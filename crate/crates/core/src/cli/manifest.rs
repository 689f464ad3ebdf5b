use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// What produced a directory of outputs. Contains no timestamps or thread
/// counts, so identical runs write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub config: RunConfig,
    pub input_digests: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: &RunConfig) -> Self {
        let config_text = serde_json::to_string(config).expect("config serializes");
        RunManifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_digest: sha256_hex(config_text.as_bytes()),
            config: config.clone(),
            input_digests: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let digest = sha256_file(path)?;
        self.input_digests.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Records an output by file name relative to the output directory.
    pub fn add_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
    }
}
