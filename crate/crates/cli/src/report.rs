use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::args::OutputArgs;
use crate::CliError;

/// Machine-readable record of one command. Non-finite numbers serialize
/// as `null`.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub command: &'static str,
    pub inputs: Value,
    pub result: T,
    /// Wall-clock seconds; `null` in deterministic mode.
    pub duration_seconds: Option<f64>,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, inputs: Value, result: T, started: Instant, output: &OutputArgs) -> Self {
        Self {
            command,
            inputs,
            result,
            duration_seconds: (!output.deterministic).then(|| started.elapsed().as_secs_f64()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Writes the report file (if requested) and prints either the JSON or
    /// the text produced by `text`.
    pub fn emit(
        &self,
        output: &OutputArgs,
        out: &mut dyn Write,
        text: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let json = self.to_json();
        if let Some(path) = &output.report {
            write_file(path, json.as_bytes())?;
        }
        if output.json {
            out.write_all(json.as_bytes())?;
        } else {
            text(out)?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    softreg::data_io::write_atomically(path, bytes)?;
    Ok(())
}
