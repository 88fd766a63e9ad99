//! Provenance headers stamped on every output file: config hash, seed and
//! crate version, so any artifact can be traced back to the run that made it.

use powerprior::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_json: &str, seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_json.as_bytes());
        let digest = hasher.finalize();
        Self {
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Comment lines prefixed to CSV outputs.
    pub fn csv_header(&self) -> String {
        format!(
            "# config_hash: {}\n# seed: {}\n# version: {}\n",
            self.config_hash, self.seed, self.version
        )
    }

    /// Write a CSV produced by `body` with the provenance comment block.
    pub fn write_csv<F>(&self, path: &Path, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        buf.extend_from_slice(self.csv_header().as_bytes());
        body(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Write a JSON document with an embedded provenance object.
    pub fn write_json<T: Serialize>(&self, path: &Path, payload: &T) -> Result<()> {
        let doc = serde_json::json!({
            "provenance": self,
            "data": payload,
        });
        let mut out = serde_json::to_vec_pretty(&doc)
            .map_err(|e| powerprior::Error::Numerical(format!("json serialisation failed: {e}")))?;
        out.push(b'\n');
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }
}
