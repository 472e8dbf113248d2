use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use meso_core::report::{sha256_file, RunManifest};

/// A failed command: a stable code plus one line of text.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(e: &clap::Error) -> Self {
        let text = e.to_string();
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid usage");
        Self::new("E_USAGE", first.trim_start_matches("error: "))
    }

    pub fn line(&self) -> String {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {flat}", self.code)
    }

    pub fn exit_code(&self) -> u8 {
        if self.code == "E_USAGE" {
            2
        } else {
            1
        }
    }
}

impl From<meso_core::Error> for Failure {
    fn from(e: meso_core::Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Provenance shared by the outputs of one command.
pub struct Context {
    pub manifest: RunManifest,
    started: Instant,
    timing: bool,
}

impl Context {
    pub fn new(command: &str, params: &impl Serialize, timing: bool) -> CliResult<Self> {
        let parameters = serde_json::to_value(params).map_err(|e| Failure::new("E_FAILED", e.to_string()))?;
        Ok(Self {
            manifest: RunManifest::new(command, parameters),
            started: Instant::now(),
            timing,
        })
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> CliResult {
        let path = path.as_ref();
        self.manifest.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seeds.push(seed);
    }

    /// `{"manifest": …, "result": …}` to `path`, or stdout without one.
    pub fn write_json(&self, path: Option<&Path>, result: &impl Serialize) -> CliResult {
        let mut manifest = self.manifest.clone();
        if self.timing {
            manifest.wall_seconds = Some(self.started.elapsed().as_secs_f64());
        }
        let doc = json!({ "manifest": manifest, "result": result });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::new("E_FAILED", e.to_string()))?;
        text.push('\n');
        write_text(path, &text)
    }
}

pub fn write_text(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::new("E_IO", format!("io error on {}: {e}", p.display())))?;
            log::info!("wrote {}", p.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV from a header and rows of already formatted cells.
pub fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_line_is_single_line() {
        let f = Failure::new("E_PARSE", "bad\nvalue   here");
        assert_eq!(f.line(), "error[E_PARSE]: bad value here");
        assert_eq!(f.exit_code(), 1);
    }
}
