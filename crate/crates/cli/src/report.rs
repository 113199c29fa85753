//! Versioned JSON reports. Field order is fixed by declaration, so a fixed
//! seed and config produce byte-identical files (modulo the timestamp,
//! which `--no-timestamp` removes).

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub condition: String,
    pub model: ModelInfo,
    pub config: C,
    pub result: R,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

#[derive(Serialize, Clone)]
pub struct ModelInfo {
    pub source: String,
    pub family: String,
    /// SHA-256 of the model JSON text.
    pub digest: String,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(
        command: &str,
        condition: &str,
        model: ModelInfo,
        config: C,
        result: R,
        with_timestamp: bool,
    ) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            condition: condition.to_string(),
            model,
            config,
            result,
            timestamp_unix: with_timestamp.then(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            }),
        }
    }

    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(path)
    }
}

pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(7 + 2 * digest.len());
    out.push_str("sha256:");
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
