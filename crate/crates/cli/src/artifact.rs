//! Output provenance: every artifact carries the artifact version and a
//! hash of the effective configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};
use sfwm_core::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamp derived from the effective (post-override) config.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Result<Self> {
        // The output directory never influences an artifact's content, so it
        // stays out of the hash: runs into different directories compare equal.
        let mut canonical = config.clone();
        canonical.run.out_dir = String::new();
        let text = canonical.to_toml().context("serializing config for hashing")?;
        let digest = Sha256::digest(text.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Provenance { config_sha256: hex })
    }

    /// Comment-header lines for text outputs.
    pub fn header(&self, extra: &[String]) -> Vec<String> {
        let mut lines = vec![
            format!("artifact_version: {VERSION}"),
            format!("config_sha256: {}", self.config_sha256),
        ];
        lines.extend(extra.iter().cloned());
        lines
    }

    /// Wrap a JSON payload with the provenance fields.
    pub fn embed(&self, mut value: Value) -> Value {
        if let Value::Object(map) = &mut value {
            map.insert("artifact_version".into(), Value::String(VERSION.into()));
            map.insert(
                "config_sha256".into(),
                Value::String(self.config_sha256.clone()),
            );
        }
        value
    }
}

/// Create the output directory and return the path for one artifact file.
pub fn out_path(config: &RunConfig, name: &str) -> Result<PathBuf> {
    let dir = Path::new(&config.run.out_dir);
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir.join(name))
}

/// Write a text artifact through a buffered writer.
pub fn write_text(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> sfwm_core::error::Result<()>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

/// Write a pretty-printed JSON artifact.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
