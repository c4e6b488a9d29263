use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use gravhom::io::{self, TableSchema, SCHEMA_VERSION};
use gravhom::synth::experiments::THREADS_ENV;
use serde::Serialize;

use crate::args::{Common, Format};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_FILE: &str = "schema.json";

/// Provenance of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub threads: Option<String>,
    pub started: String,
    pub finished: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Output directory plus the list of files written so far.
pub struct Run {
    dir: PathBuf,
    format: Format,
    subcommand: &'static str,
    config: serde_json::Value,
    seed: u64,
    started: String,
    outputs: Vec<String>,
}

impl Run {
    pub fn start<C: Serialize>(subcommand: &'static str, common: &Common, config: &C) -> Result<Self, CliError> {
        fs::create_dir_all(&common.output)
            .map_err(|e| CliError::io(format!("{}: {e}", common.output.display())))?;
        Ok(Self {
            dir: common.output.clone(),
            format: common.format,
            subcommand,
            config: serde_json::to_value(config).map_err(|e| CliError::io(e.to_string()))?,
            seed: common.seed,
            started: now(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: String) {
        if !self.outputs.contains(&name) {
            self.outputs.push(name);
        }
    }

    /// Writes a per-instance table as `<stem>.csv` or `<stem>.json`.
    pub fn table<T: Serialize>(&mut self, stem: &str, schema: &TableSchema, rows: &[T]) -> Result<PathBuf, CliError> {
        let name = match self.format {
            Format::Csv => format!("{stem}.csv"),
            Format::Json => format!("{stem}.json"),
        };
        let path = self.path(&name);
        match self.format {
            Format::Csv => io::write_table(&path, schema, rows)?,
            Format::Json => io::write_json(&path, &rows)?,
        }
        self.record(name);
        Ok(path)
    }

    /// JSON document tagged with the manifest it belongs to.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            manifest: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.path(name);
        io::write_json(&path, &Tagged { manifest: MANIFEST_FILE, body: value })?;
        self.record(name.to_string());
        Ok(path)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.record(name.to_string());
        Ok(path)
    }

    /// Files written by someone else (e.g. the correspondence writer).
    pub fn external(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.record(name.to_string_lossy().into_owned());
        }
    }

    /// Writes the schema manifest and the run manifest.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        io::write_json(&self.path(SCHEMA_FILE), &io::schema_manifest())?;
        self.record(SCHEMA_FILE.to_string());
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            subcommand: self.subcommand.to_string(),
            config: self.config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: std::env::var(THREADS_ENV).ok(),
            started: self.started,
            finished: now(),
            outputs: self.outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        io::write_json(&path, &manifest)?;
        Ok(path)
    }
}
