//! Versioned JSON envelopes, config hashing and output placement.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA: &str = "v1";
pub const CACHE_ENV: &str = "SCRAMBLE_FORGE_CACHE";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything that determines a command's output.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub command: &'a str,
    pub args: &'a A,
    /// Input label to content digest.
    pub inputs: BTreeMap<String, String>,
}

impl<A: Serialize> RunConfig<'_, A> {
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&canonical)
    }
}

pub fn read_input(path: &Path, label: &str, inputs: &mut BTreeMap<String, String>) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    inputs.insert(label.to_string(), sha256_hex(text.as_bytes()));
    Ok(text)
}

pub fn envelope(command: &str, config_hash: &str, metric_depth: usize, tolerances: Value, result: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "config_hash": config_hash,
        "metric_depth": metric_depth,
        "truncation_bound": (-(metric_depth as f64)).exp2(),
        "tolerances": tolerances,
        "result": result,
    })
}

pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Named reports, written under `out` or printed to stdout.
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, v: &Value) {
        self.files.push((name.to_string(), render(v)));
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text));
    }

    pub fn emit(&self, out: Option<&Path>) -> Result<(), CliError> {
        match out {
            Some(dir) => write_all(dir, &self.files),
            None => {
                for (name, text) in &self.files {
                    if name.ends_with(".json") {
                        print!("{text}");
                    }
                }
                Ok(())
            }
        }
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Cached report set for a config hash, if the cache is enabled.
pub fn cache_dir(config_hash: &str) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(|root| PathBuf::from(root).join(config_hash))
}

pub fn cache_load(dir: &Path, names: &[&str]) -> Option<Outputs> {
    let mut out = Outputs::new();
    for name in names {
        out.add_text(name, fs::read_to_string(dir.join(name)).ok()?);
    }
    Some(out)
}

pub fn cache_store(dir: &Path, outputs: &Outputs) -> Result<(), CliError> {
    write_all(dir, &outputs.files)
}
