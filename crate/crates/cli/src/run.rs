//! Output directory bookkeeping: hashed file names, metadata headers and the
//! run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use nucdecay::output::{json_envelope, write_json, CsvTable, SCHEMA_VERSION};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub kind: String,
    pub sha256: String,
}

/// Collects the files written by one command.
pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub command: &'static str,
    pub hash: String,
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl<'a> RunContext<'a> {
    pub fn new(config: &'a RunConfig, command: &'static str) -> Result<Self, CliError> {
        let dir = config.output.dir.clone();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            config,
            command,
            hash: config.hash(),
            dir,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_name(&self, stem: &str, ext: &str) -> String {
        format!("{stem}_{}.{ext}", &self.hash[..8])
    }

    fn header(&self) -> Vec<(String, String)> {
        vec![
            ("schema_version".into(), SCHEMA_VERSION.to_string()),
            ("command".into(), self.command.into()),
            ("config_hash".into(), self.hash.clone()),
            ("convention_factor".into(), self.config.couplings.convention_factor.to_string()),
            ("ns_per_inverse_gamma".into(), self.config.ns_per_inverse_gamma().to_string()),
        ]
    }

    fn record(&mut self, name: String, kind: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(&name);
        std::fs::write(&path, bytes)?;
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(ManifestEntry {
            file: name,
            kind: kind.into(),
            sha256,
        });
        Ok(path)
    }

    /// Writes `table` as `{stem}_{hash8}.csv` with the run header prepended.
    pub fn write_csv(&mut self, stem: &str, kind: &str, mut table: CsvTable) -> Result<PathBuf, CliError> {
        let mut meta = self.header();
        meta.push(("kind".into(), kind.into()));
        meta.append(&mut table.metadata);
        table.metadata = meta;
        let text = table.to_csv_string()?;
        let name = self.file_name(stem, "csv");
        self.record(name, kind, text.as_bytes())
    }

    /// Writes `data` wrapped in the JSON envelope as `{stem}_{hash8}.json`.
    pub fn write_json(&mut self, stem: &str, kind: &str, data: impl Serialize) -> Result<PathBuf, CliError> {
        let metadata: BTreeMap<String, serde_json::Value> = self
            .header()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        let value = json_envelope(kind, &metadata, data)?;
        let mut text = serde_json::to_string_pretty(&value).map_err(nucdecay::Error::from)?;
        text.push('\n');
        let name = self.file_name(stem, "json");
        self.record(name, kind, text.as_bytes())
    }

    /// Writes `manifest.json` and returns the paths of all files written.
    pub fn finish(self) -> Result<Vec<PathBuf>, CliError> {
        let manifest = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.hash,
            "config": self.config,
            "files": self.files,
        });
        let path = self.dir.join("manifest.json");
        write_json(&path, &manifest)?;
        let mut out: Vec<PathBuf> = self.files.iter().map(|f| self.dir.join(&f.file)).collect();
        out.push(path);
        Ok(out)
    }
}
