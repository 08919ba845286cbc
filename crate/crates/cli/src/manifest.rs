use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Record of one run, written as `<command>.manifest.toml` beside the
/// outputs. Holds no timestamps so reruns give identical files.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub parameters: BTreeMap<String, toml::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
            parameters: BTreeMap::new(),
            config: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn param(&mut self, name: &str, value: impl Into<toml::Value>) -> &mut Self {
        self.parameters.insert(name.into(), value.into());
        self
    }

    pub fn write(&self, out_dir: &Path) -> CliResult<PathBuf> {
        let path = out_dir.join(format!("{}.manifest.toml", self.command));
        let text = toml::to_string(self).map_err(|e| CliError::Internal(format!("manifest: {e}")))?;
        std::fs::write(&path, text).map_err(|e| CliError::write(&path, e))?;
        Ok(path)
    }
}
