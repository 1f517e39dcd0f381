//! Run manifests: a JSON record of the fully resolved parameter set written
//! next to every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Manifest accompanying one output file. Field order and contents are
/// stable so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema: String,
    pub subcommand: String,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub output: PathBuf,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, output: &Path) -> Self {
        Self {
            tool: "cfosim",
            version: env!("CARGO_PKG_VERSION"),
            schema: format!("cfosim-{subcommand}-v1"),
            subcommand: subcommand.to_string(),
            seed,
            params: BTreeMap::new(),
            output: output.to_path_buf(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).expect("serializable parameter");
        self.params.insert(key.to_string(), value);
        self
    }

    /// Write `<output>.manifest.json` next to the output file.
    pub fn write(&self) -> std::io::Result<()> {
        let mut path = self.output.clone().into_os_string();
        path.push(".manifest.json");
        let body = serde_json::to_string_pretty(self).expect("serializable manifest");
        std::fs::write(PathBuf::from(path), body + "\n")
    }
}
