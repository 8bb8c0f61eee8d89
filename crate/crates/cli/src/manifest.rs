//! Run manifests: every output directory gets a JSON record of the
//! command, parameters, seed, and content digests of inputs and outputs,
//! sufficient to reproduce the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pathclust::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parameters: serde_json::Value,
    seed: Option<u64>,
    /// Path → SHA-256 of each input file.
    inputs: BTreeMap<String, String>,
    /// Path → SHA-256 of each output file.
    outputs: BTreeMap<String, String>,
    created: String,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Creation timestamp; honors `SOURCE_DATE_EPOCH` so runs can be made
/// byte-reproducible.
fn created_at() -> String {
    let dt = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .and_then(|epoch| OffsetDateTime::from_unix_timestamp(epoch).ok())
        .unwrap_or_else(OffsetDateTime::now_utc);
    dt.format(&Rfc3339).expect("RFC 3339 formatting cannot fail")
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            tool: "pathclust",
            version: env!("CARGO_PKG_VERSION"),
            command,
            parameters: serde_json::Value::Null,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            created: created_at(),
        }
    }

    pub fn parameters(mut self, parameters: serde_json::Value) -> Self {
        self.parameters = parameters;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn inputs(self, input: Option<&Path>) -> Result<Self> {
        match input {
            Some(path) => self.inputs_many(&[path]),
            None => Ok(self),
        }
    }

    pub fn inputs_many(mut self, inputs: &[&Path]) -> Result<Self> {
        for path in inputs {
            self.inputs.insert(path.display().to_string(), sha256_hex(path)?);
        }
        Ok(self)
    }

    pub fn outputs(mut self, outputs: &[PathBuf]) -> Result<Self> {
        for path in outputs {
            self.outputs.insert(path.display().to_string(), sha256_hex(path)?);
        }
        Ok(self)
    }

    pub fn write(self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(&self).map_err(Error::Json)?;
        json.push(b'\n');
        fs::write(path, json)?;
        Ok(())
    }
}
