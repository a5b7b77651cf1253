//! Run manifests and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hackwatch::episode::fnv1a64;
use serde::Serialize;

use crate::CliError;

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// FNV-1a of the configuration's canonical JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configs serialize");
    format!("{:016x}", fnv1a64(&json))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Seconds per phase.
    pub wall_times: BTreeMap<String, f64>,
    /// Timing-dependent results kept out of the primary outputs.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub measurements: BTreeMap<String, f64>,
}

/// Accumulates a manifest while a command runs.
pub struct Run {
    manifest: RunManifest,
    phase_start: Instant,
}

impl Run {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> Self {
        Run {
            manifest: RunManifest {
                tool: "hackwatch",
                tool_version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                config_hash: config_hash(config),
                seed,
                inputs: vec![],
                outputs: vec![],
                wall_times: BTreeMap::new(),
                measurements: BTreeMap::new(),
            },
            phase_start: Instant::now(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    /// Writes an output file atomically and records it.
    pub fn output(&mut self, p: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(p, bytes)?;
        self.manifest.outputs.push(p.display().to_string());
        Ok(())
    }

    /// Ends the current phase under `name`.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.wall_times.insert(name.to_string(), (now - self.phase_start).as_secs_f64());
        self.phase_start = now;
    }

    pub fn measure(&mut self, name: &str, value: f64) {
        self.manifest.measurements.insert(name.to_string(), value);
    }

    pub fn finish(self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(path, &json)
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn manifest_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
