//! Engine settings as read from the TOML configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{parse_stopwords, AnalysisError, AnalyzerConfig, FieldOverride, DEFAULT_STOPWORDS};
use crate::index::WildcardPolicy;
use crate::ingest::{CanonicalizeConfig, RefreshSchedule};
use crate::query::SanitizeLimits;
use crate::ranking::{RankingConfig, SearchConfig};
use crate::schema::names;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// One word per line; relative paths resolve against the config file's directory.
    pub stopwords_path: Option<PathBuf>,
    pub stemming: bool,
    pub shingle_sizes: Vec<usize>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { stopwords_path: None, stemming: true, shingle_sizes: vec![2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub analysis: AnalysisSection,
    pub ranking: RankingConfig<f64>,
    pub limits: SanitizeLimits,
    pub wildcard: WildcardPolicy,
    pub schedule: RefreshSchedule,
    pub ingest: CanonicalizeConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("{section}: {message}")]
    Invalid { section: &'static str, message: String },
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section| move |message| ConfigError::Invalid { section, message };
        self.ranking.validate().map_err(invalid("ranking"))?;
        self.schedule.validate().map_err(invalid("schedule"))?;
        if self.limits.max_chars == 0 || self.limits.max_clauses == 0 {
            return Err(invalid("limits")("limits must be positive".into()));
        }
        if self.wildcard.max_expansions == 0 {
            return Err(invalid("wildcard")("max_expansions must be positive".into()));
        }
        Ok(())
    }

    /// Builds the analyzer, reading the stopword file relative to `base_dir`.
    pub fn analyzer(&self, base_dir: &Path) -> Result<AnalyzerConfig, ConfigError> {
        let a = &self.analysis;
        let stopwords = match &a.stopwords_path {
            Some(p) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
                parse_stopwords(&text)
            }
            None => parse_stopwords(DEFAULT_STOPWORDS),
        };
        let no_stem = FieldOverride { stemming: Some(false), ..Default::default() };
        Ok(AnalyzerConfig::new(stopwords, a.stemming, a.shingle_sizes.iter().copied().collect())?
            .with_override(names::PATIENT_NAME, no_stem.clone())?
            .with_override(names::AUTHOR, no_stem)?)
    }

    pub fn search_config(&self) -> SearchConfig<f64> {
        SearchConfig { ranking: self.ranking.clone(), limits: self.limits, wildcard: self.wildcard.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_builtin_analyzer() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.analyzer(Path::new(".")).unwrap(), AnalyzerConfig::default());
        assert_eq!(cfg.search_config(), SearchConfig::default());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: EngineConfig = toml::from_str("[ranking]\nw_passage = 2.0\n[limits]\nmax_wildcards = 2\n").unwrap();
        assert_eq!(cfg.ranking.w_passage, 2.0);
        assert_eq!(cfg.ranking.k1, 1.2);
        assert_eq!(cfg.limits.max_wildcards, 2);
        assert_eq!(cfg.limits.max_chars, 1024);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(toml::from_str::<EngineConfig>("[ranking]\nk3 = 1\n").is_err());
        let cfg: EngineConfig = toml::from_str("[ranking]\nb = 2.0\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: EngineConfig = toml::from_str("[analysis]\nshingle_sizes = [4]\n").unwrap();
        assert!(cfg.analyzer(Path::new(".")).is_err());
    }

    #[test]
    fn stopword_file_is_read_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("stop.txt"), "the\nto\nthere\nscan\n").unwrap();
        let cfg: EngineConfig = toml::from_str("[analysis]\nstopwords_path = \"stop.txt\"\n").unwrap();
        let a = cfg.analyzer(dir.path()).unwrap();
        assert!(a.is_stopword("scan"));
        assert!(!a.is_stopword("of"));
        let missing: EngineConfig = toml::from_str("[analysis]\nstopwords_path = \"nope.txt\"\n").unwrap();
        assert!(matches!(missing.analyzer(dir.path()), Err(ConfigError::Io { .. })));
    }
}
