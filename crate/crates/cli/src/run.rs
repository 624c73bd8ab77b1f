use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::{json, Value};

use crate::Command;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_INGEST: u8 = 2;
pub const EXIT_DIVERGENT: u8 = 3;
pub const EXIT_EVALUATOR: u8 = 4;
pub const EXIT_ALL_CELLS_FAILED: u8 = 5;

/// A failure that maps to a process exit code and a one-line JSON report.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
    pub details: Value,
}

impl CliError {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into(), details: Value::Null }
    }

    pub fn with(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_OTHER, "usage", message)
    }

    pub fn other(message: impl std::fmt::Display) -> Self {
        Self::new(EXIT_OTHER, "error", message.to_string())
    }

    pub fn json_line(&self) -> String {
        let mut obj = json!({ "error": self.kind, "exit_code": self.code, "message": self.message });
        if !self.details.is_null() {
            obj["details"] = self.details.clone();
        }
        obj.to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_OTHER, "io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(EXIT_OTHER, "json", e.to_string())
    }
}

pub struct Log {
    pub verbose: bool,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[haptic] {}", msg.as_ref());
        }
    }
}

pub struct RunDir {
    path: PathBuf,
    id: String,
}

impl RunDir {
    pub fn create(root: &Path, run_id: Option<&str>, command: &str) -> Result<Self, CliError> {
        let id = match run_id {
            Some(id) if !id.is_empty() && !id.contains(['/', '\\']) => id.to_string(),
            Some(id) => return Err(CliError::usage(format!("invalid run id `{id}`"))),
            None => format!("{command}-{}", Utc::now().format("%Y%m%dT%H%M%S%.3fZ")),
        };
        let path = root.join(&id);
        std::fs::create_dir_all(&path)?;
        Ok(Self { path, id })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, body: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        std::fs::write(&p, body)?;
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    /// Run metadata that is allowed to differ between invocations.
    pub fn write_run_record(
        &self,
        command: &str,
        started: DateTime<Utc>,
        threads: Option<usize>,
        error: Option<&CliError>,
    ) -> Result<(), CliError> {
        let record = json!({
            "run_id": self.id,
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "started_at": started.to_rfc3339(),
            "finished_at": Utc::now().to_rfc3339(),
            "threads": threads.unwrap_or_else(rayon::current_num_threads),
            "machine": haptic_core::bench::machine_info(),
            "exit_code": error.map_or(0, |e| e.code),
            "error": error.map(|e| e.message.clone()),
        });
        self.write_json("run.json", &record)?;
        Ok(())
    }
}

pub fn load_effective_config(path: &Path) -> Result<Command, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
