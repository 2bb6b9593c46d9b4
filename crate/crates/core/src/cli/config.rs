//! Experiment configuration files.
//!
//! TOML with optional top-level `seed`, `trials`, `format`, `out`, a
//! `[params]` table of experiment parameters, and one `[[level]]` table per
//! cache level, fastest first:
//!
//! ```toml
//! seed = 7
//!
//! [params]
//! n = 65536
//!
//! [[level]]
//! capacity = 32768
//! block = 32
//! assoc = 1
//! latency = 100
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheLevelSpec, HierarchySpec, SpecError};

pub const SEED_ENV: &str = "CACHELAB_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("level {index}: {source}")]
    Level { index: usize, source: SpecError },
    #[error("{SEED_ENV}={value:?} is not an unsigned integer")]
    SeedEnv { value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub capacity: u64,
    pub block: u64,
    #[serde(default = "one")]
    pub assoc: u64,
    pub latency: u64,
}

fn one() -> u64 {
    1
}

/// Experiment parameters; anything left out takes the experiment default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub n: Option<u64>,
    pub sizes: Option<Vec<u64>>,
    pub memory: Option<u64>,
    pub block: Option<u64>,
    pub latency: Option<u64>,
    pub degree: Option<u64>,
    pub k: Option<u64>,
    pub s: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub format: Option<String>,
    pub out: Option<String>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub level: Vec<LevelConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: ConfigFile = toml::from_str(text)?;
        c.hierarchy()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The configured hierarchy, if any levels were given.
    pub fn hierarchy(&self) -> Result<Option<HierarchySpec>, ConfigError> {
        if self.level.is_empty() {
            return Ok(None);
        }
        let levels = self
            .level
            .iter()
            .enumerate()
            .map(|(i, l)| {
                CacheLevelSpec::new(l.capacity, l.block, l.assoc, l.latency).map_err(|source| {
                    ConfigError::Level {
                        index: i + 1,
                        source,
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        HierarchySpec::new(levels)
            .map(Some)
            .map_err(|source| ConfigError::Level { index: 0, source })
    }
}

/// Flag, then config file, then `CACHELAB_SEED`, then the default.
pub fn resolve_seed(
    flag: Option<u64>,
    file: Option<u64>,
    env: Option<&str>,
) -> Result<u64, ConfigError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| ConfigError::SeedEnv {
            value: v.to_string(),
        }),
        None => Ok(DEFAULT_SEED),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_levels_and_params() {
        let c = ConfigFile::parse(
            "seed = 3\n[params]\nn = 1024\n[[level]]\ncapacity = 512\nblock = 8\nlatency = 10\n\
             [[level]]\ncapacity = 8192\nblock = 32\nassoc = 2\nlatency = 100\n",
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.params.n, Some(1024));
        let h = c.hierarchy().unwrap().unwrap();
        assert_eq!(h.depth(), 2);
        assert_eq!(h.level(1).assoc, 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConfigFile::parse("[[level]]\ncapacity = 100\nblock = 8\nlatency = 1\n").is_err());
        assert!(ConfigFile::parse("[params]\nbogus = 1\n").is_err());
        assert!(ConfigFile::parse("seed = \"x\"").is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, None, Some("x")).is_err());
    }
}
