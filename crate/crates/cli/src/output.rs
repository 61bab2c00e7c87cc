use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Output directory that remembers every file it wrote.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_path(self.path(name)?)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pretty JSON with object keys sorted.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = pretty_sorted(value)?;
        text.push('\n');
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn pretty_sorted<T: Serialize>(value: &T) -> Result<String, CliError> {
    // `Value` keeps objects in a BTreeMap, so the round trip sorts keys.
    let v: Value = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip decimal form; empty for missing values.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn opt_period(v: Option<usize>) -> String {
    v.map(|p| p.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub engine_version: &'static str,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn write(
        out: &mut OutputDir,
        command: &str,
        config_hash: &str,
        seed: Option<u64>,
        started: Instant,
    ) -> Result<(), CliError> {
        let mut outputs = out.written().to_vec();
        outputs.push("manifest.json".into());
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            outputs,
            engine_version: env!("CARGO_PKG_VERSION"),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        };
        out.json("manifest.json", &manifest)
    }
}
