use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use takeover_core::io::{load_toml, save_toml};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Record of one invocation, written before any output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Full argument list after the program name.
    pub args: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: u64, out: &Path, args: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            seed,
            out: out.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            args,
        }
    }

    pub fn write(&self) -> takeover_core::Result<()> {
        std::fs::create_dir_all(&self.out)?;
        save_toml(self, &self.out.join(MANIFEST_FILE))
    }

    pub fn load(path: &Path) -> takeover_core::Result<Self> {
        load_toml(path)
    }
}
