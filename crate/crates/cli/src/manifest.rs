use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Run record written as `manifest.json` in the output directory.
///
/// `config` is a complete config file for the same command with every input
/// inlined or made absolute, so feeding it back through `--config`
/// reproduces the run.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub config_file: Option<&'a Path>,
    pub inputs: &'a [PathBuf],
    pub config: &'a Value,
    pub outputs: &'a [PathBuf],
    pub wall_clock_seconds: f64,
    #[serde(flatten)]
    pub results: &'a Map<String, Value>,
    pub status: &'a str,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<&'a str>,
}

pub struct Run {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub config_file: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: Value,
    pub results: Map<String, Value>,
}

impl Run {
    pub fn new(command: &'static str, out_dir: &Path, config_file: Option<&Path>) -> Self {
        Self {
            command,
            out_dir: std::path::absolute(out_dir).unwrap_or_else(|_| out_dir.to_path_buf()),
            config_file: config_file.map(|p| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Value::Null,
            results: Map::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        let p = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
        if !self.inputs.contains(&p) {
            self.inputs.push(p);
        }
    }

    /// Path of an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> Result<PathBuf, Failure> {
        let p = self.out_dir.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::validation(format!("cannot create {}: {e}", dir.display())))?;
        }
        self.outputs.push(p.clone());
        Ok(p)
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn finish(&self, elapsed: Duration, failure: Option<Failure>) -> std::io::Result<()> {
        let status = match &failure {
            None => "ok",
            Some(f) if f.code == 3 => "numerical-failure",
            Some(_) => "validation-failure",
        };
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_file: self.config_file.as_deref(),
            inputs: &self.inputs,
            config: &self.config,
            outputs: &self.outputs,
            wall_clock_seconds: elapsed.as_secs_f64(),
            results: &self.results,
            status,
            exit_code: failure.as_ref().map_or(0, |f| f.code),
            error: failure.as_ref().map(|f| f.message.as_str()),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out_dir.join("manifest.json"), text)
    }
}
