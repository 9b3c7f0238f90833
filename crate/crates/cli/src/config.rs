use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Settings read from `--config`. Every key is optional and, when present,
/// wins over the matching command-line flag.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must name the subcommand being run when given.
    pub subcommand: Option<String>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub sequence: Option<String>,
    pub samples: Option<usize>,
    pub cache: Option<PathBuf>,
    pub tolerance: Option<f64>,
    pub check_points: Option<usize>,
    pub max_iterations: Option<usize>,
    pub max_junctions: Option<usize>,
    pub oracle_nodes: Option<usize>,
    pub seed: Option<u64>,
    pub population: Option<usize>,
    pub max_generations: Option<usize>,
    pub elites: Option<usize>,
    pub stall_generations: Option<usize>,
    pub dt: Option<f64>,
    pub terminal_penalty: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Reject a config written for another subcommand.
    pub fn check_subcommand(&self, name: &str) -> Result<(), String> {
        match &self.subcommand {
            Some(s) if s != name => Err(format!("config is for `{s}`, not `{name}`")),
            _ => Ok(()),
        }
    }
}

/// Config value if present, flag value otherwise.
pub fn pick<T: Clone>(config: &Option<T>, flag: T) -> T {
    config.clone().unwrap_or(flag)
}
