use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Outputs;
use crate::config::Config;
use crate::error::CliError;

/// Record of one run, written as `manifest_<subcommand>.json`. Everything
/// except `wall_clock_secs` is reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration serialized as TOML.
    pub config_hash: String,
    pub paper_scale: bool,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    /// Largest fraction of episodes that hit the horizon cap, when episodes
    /// were simulated.
    pub cap_fraction: Option<f64>,
    /// Parameter resets during Q-learning, when training ran.
    pub resets: Option<u64>,
}

pub fn config_hash(cfg: &Config) -> String {
    Sha256::digest(cfg.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunManifest {
    pub fn new(subcommand: &str, cfg: &Config, paper_scale: bool, out: Outputs, elapsed: Duration) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed: cfg.seed,
            config_hash: config_hash(cfg),
            paper_scale,
            outputs: out.files,
            wall_clock_secs: elapsed.as_secs_f64(),
            cap_fraction: out.cap_fraction,
            resets: out.resets,
        }
    }

    pub fn file_name(subcommand: &str) -> String {
        format!("manifest_{subcommand}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(Self::file_name(&self.subcommand));
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
