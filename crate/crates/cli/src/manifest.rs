use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Hardware {
    pub logical_cpus: usize,
    pub os: &'static str,
    pub arch: &'static str,
}

impl Hardware {
    pub fn detect() -> Self {
        Self {
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
        }
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved arguments and configs.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifact_version: &'static str,
    pub hardware: Hardware,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, started: f64) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            artifact_version: env!("CARGO_PKG_VERSION"),
            hardware: Hardware::detect(),
            started_unix_s: started,
            finished_unix_s: unix_now(),
        }
    }

    /// Writes `manifest.json` into `dir`, or to stderr when there is no
    /// output directory.
    pub fn emit(&self, dir: Option<&Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        match dir {
            Some(d) => std::fs::write(d.join("manifest.json"), text + "\n"),
            None => {
                eprintln!(
                    "{}",
                    serde_json::to_string(self).expect("manifest serializes")
                );
                Ok(())
            }
        }
    }
}
