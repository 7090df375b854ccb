//! TOML run configuration. Every table is optional; missing keys take
//! their defaults.
//!
//! ```toml
//! [train]
//! dim = 32
//! replay_fraction = 0.3
//!
//! [engine.condition]
//! kind = "quota"
//! n = 10
//!
//! [server]
//! port = 8080
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use kgcl::engine::EngineConfig;
use kgcl::longrun::{toml_message, LongrunConfig, WorldSpec};
use kgcl::train::TrainConfig;

use crate::{io_error, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Simulated minutes advance once per interval; 0 disables the clock.
    pub tick_interval_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080, tick_interval_ms: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// World used by `generate` and `simulate`.
    pub world: WorldSpec,
    /// Trainer settings for `train`.
    pub train: TrainConfig,
    /// Engine settings for `teach`.
    pub engine: EngineConfig,
    /// Long-run settings for `simulate`.
    pub longrun: LongrunConfig,
    pub server: ServerConfig,
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config { path: origin.to_path_buf(), message: toml_message(text, &e) })?;
        config.validate(origin)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Self::parse(&text, path)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn validate(&self, origin: &Path) -> Result<(), CliError> {
        let wrap = |e: &dyn std::fmt::Display| CliError::Config { path: origin.to_path_buf(), message: e.to_string() };
        self.world.validate().map_err(|e| wrap(&e))?;
        self.train.validate().map_err(|e| wrap(&e))?;
        self.engine.train.validate().map_err(|e| wrap(&e))?;
        self.engine.condition.validate().map_err(|e| wrap(&e))?;
        self.longrun.validate().map_err(|e| wrap(&e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgcl::longrun::Condition;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("", Path::new("c.toml")).unwrap(), Config::default());
    }

    #[test]
    fn nested_tables_override() {
        let text = "[train]\ndim = 16\nblocks = 4\n\n[engine.condition]\nkind = \"battery\"\nthreshold = 20.0\ndrain = 1.0\ncharge = 5.0\n\n[server]\nport = 9000\n";
        let c = Config::parse(text, Path::new("c.toml")).unwrap();
        assert_eq!((c.train.dim, c.train.blocks), (16, 4));
        assert_eq!(c.engine.condition, Condition::Battery { threshold: 20.0, drain: 1.0, charge: 5.0 });
        assert_eq!(c.server.port, 9000);
    }

    #[test]
    fn unknown_keys_and_invalid_values_name_the_file() {
        let err = Config::parse("[server]\nprot = 1\n", Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.starts_with("bad.toml:"), "{err}");
        let err = Config::parse("[train]\ndim = 7\nblocks = 4\n", Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.starts_with("bad.toml:"), "{err}");
    }
}
