//! The operator's TOML file: data directory, engine sections and service settings.

use std::path::{Path, PathBuf};

use radsearch_core::config::EngineConfig;
use radsearch_service::config::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_ENV: &str = "RADSEARCH_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    /// tracing filter such as `info` or `radsearch_core=debug`.
    pub log: Option<String>,
    /// Drop directory of `.jsonl` batches the refresh scheduler polls while serving.
    pub source_dir: Option<PathBuf>,
    pub engine: EngineConfig,
    pub service: ServiceConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            data_dir: PathBuf::from("radsearch-data"),
            log: None,
            source_dir: None,
            engine: EngineConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

/// A parsed configuration with paths resolved against the file's directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: CliConfig,
    pub path: Option<PathBuf>,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn data_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.data_dir)
    }

    pub fn index_dir(&self) -> PathBuf {
        self.data_dir().join("index")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.data_dir().join(&self.config.service.audit_path)
    }

    pub fn users_path(&self) -> PathBuf {
        self.data_dir().join(&self.config.service.users_path)
    }

    pub fn source_dir(&self) -> Option<PathBuf> {
        self.config.source_dir.as_ref().map(|p| self.base_dir.join(p))
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse(text: &str, origin: &str) -> Result<CliConfig, CliError> {
    let config: CliConfig = toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        CliError::User(format!("{origin}:{line}:{col}: {}", e.message()))
    })?;
    config.engine.validate().map_err(|e| CliError::User(format!("{origin}: {e}")))?;
    config.service.validate().map_err(|e| CliError::User(format!("{origin}: service: {e}")))?;
    Ok(config)
}

/// Reads `explicit`, else the file named by `RADSEARCH_CONFIG`, else defaults
/// rooted at the working directory.
pub fn load(explicit: Option<&Path>) -> Result<Loaded, CliError> {
    let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let Some(path) = explicit.map(Path::to_path_buf).or(from_env) else {
        return Ok(Loaded { config: CliConfig::default(), path: None, base_dir: PathBuf::from(".") });
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse(&text, &path.display().to_string())?;
    let base_dir = path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok(Loaded { config, path: Some(path), base_dir })
}
