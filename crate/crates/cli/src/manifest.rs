use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub operation: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the raw configuration bytes.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub parameters: serde_json::Value,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects output files in memory so a failed run leaves nothing half-written.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn add_csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> anyhow::Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in rows {
            writer.serialize(row)?;
        }
        self.add(name, writer.into_inner()?);
        Ok(())
    }

    /// Table with a header decided at run time.
    pub fn add_table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> anyhow::Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row.iter().map(|x| format!("{x:e}")))?;
        }
        self.add(name, writer.into_inner()?);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}
