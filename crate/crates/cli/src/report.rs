use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Common wrapper of every report. `generated_at` is the only field that
/// differs between identical invocations.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub invocation: &'a [String],
    pub seed: u64,
    pub generated_at: u64,
    pub result: T,
}

pub struct Context {
    pub command: &'static str,
    pub invocation: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn envelope<T: Serialize>(&self, result: T) -> Envelope<'_, T> {
        Envelope {
            schema_version: SCHEMA_VERSION,
            tool: "textcap",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            invocation: &self.invocation,
            seed: self.seed,
            generated_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            result,
        }
    }

    pub fn render<T: Serialize>(&self, result: T) -> Result<String, CliError> {
        serde_json::to_string_pretty(&self.envelope(result))
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::runtime("report", e.to_string()))
    }

    /// Writes `<out>/<name>` and returns its path.
    pub fn write<T: Serialize>(&self, name: &str, result: T) -> Result<PathBuf, CliError> {
        let body = self.render(result)?;
        ensure_dir(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
