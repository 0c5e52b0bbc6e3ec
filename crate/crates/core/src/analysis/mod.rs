//! Analyzer chain: tokenize, drop stopwords, stem, and build word shingles.

mod porter;
mod tokenizer;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{names, FieldDef, FieldKind, Schema, SchemaError};

pub use porter::stem;
pub use tokenizer::{fold, has_wildcard, tokenize, tokenize_with, Token, TokenizeMode};

/// Joins the words of a shingle. Control characters never survive tokenization,
/// so shingle terms cannot collide with word terms.
pub const SHINGLE_SEPARATOR: char = '\u{1F}';

pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

const REQUIRED_STOPWORDS: [&str; 3] = ["the", "to", "there"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("stopword list must contain `{0}`")]
    MissingRequiredStopword(&'static str),
    #[error("unsupported shingle size {0}; only 2 and 3 are allowed")]
    ShingleSize(usize),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Parses a stopword file: one word per line, `#` comments, blank lines ignored.
pub fn parse_stopwords(source: &str) -> BTreeSet<String> {
    source
        .lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|w| !w.is_empty())
        .map(fold)
        .collect()
}

/// Per-field overrides; unset values fall back to the global setting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldOverride {
    pub stemming: Option<bool>,
    pub remove_stopwords: Option<bool>,
    pub shingle_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AnalyzerConfigRepr", into = "AnalyzerConfigRepr")]
pub struct AnalyzerConfig {
    stopwords: BTreeSet<String>,
    stemming: bool,
    shingle_sizes: BTreeSet<usize>,
    overrides: BTreeMap<String, FieldOverride>,
}

#[derive(Serialize, Deserialize)]
struct AnalyzerConfigRepr {
    stopwords: BTreeSet<String>,
    stemming: bool,
    shingle_sizes: BTreeSet<usize>,
    #[serde(default)]
    overrides: BTreeMap<String, FieldOverride>,
}

impl TryFrom<AnalyzerConfigRepr> for AnalyzerConfig {
    type Error = AnalysisError;

    fn try_from(r: AnalyzerConfigRepr) -> Result<Self, Self::Error> {
        let mut config = AnalyzerConfig::new(r.stopwords, r.stemming, r.shingle_sizes)?;
        for (field, o) in r.overrides {
            config = config.with_override(&field, o)?;
        }
        Ok(config)
    }
}

impl From<AnalyzerConfig> for AnalyzerConfigRepr {
    fn from(c: AnalyzerConfig) -> Self {
        AnalyzerConfigRepr {
            stopwords: c.stopwords,
            stemming: c.stemming,
            shingle_sizes: c.shingle_sizes,
            overrides: c.overrides,
        }
    }
}

fn check_shingle_sizes<'a>(sizes: impl IntoIterator<Item = &'a usize>) -> Result<(), AnalysisError> {
    for &n in sizes {
        if n != 2 && n != 3 {
            return Err(AnalysisError::ShingleSize(n));
        }
    }
    Ok(())
}

impl AnalyzerConfig {
    pub fn new(
        stopwords: BTreeSet<String>,
        stemming: bool,
        shingle_sizes: BTreeSet<usize>,
    ) -> Result<Self, AnalysisError> {
        for w in REQUIRED_STOPWORDS {
            if !stopwords.contains(w) {
                return Err(AnalysisError::MissingRequiredStopword(w));
            }
        }
        check_shingle_sizes(&shingle_sizes)?;
        Ok(AnalyzerConfig { stopwords, stemming, shingle_sizes, overrides: BTreeMap::new() })
    }

    pub fn with_override(mut self, field: &str, o: FieldOverride) -> Result<Self, AnalysisError> {
        if let Some(sizes) = &o.shingle_sizes {
            check_shingle_sizes(sizes)?;
        }
        self.overrides.insert(field.to_lowercase(), o);
        Ok(self)
    }

    pub fn with_stopwords(mut self, stopwords: BTreeSet<String>) -> Result<Self, AnalysisError> {
        for w in REQUIRED_STOPWORDS {
            if !stopwords.contains(w) {
                return Err(AnalysisError::MissingRequiredStopword(w));
            }
        }
        self.stopwords = stopwords;
        Ok(self)
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Effective analysis settings for one field.
    pub fn for_field(&self, def: &FieldDef) -> FieldAnalysis {
        if def.kind != FieldKind::AnalyzedText {
            return FieldAnalysis { kind: def.kind, stem: false, remove_stopwords: false, shingle_sizes: vec![] };
        }
        let o = self.overrides.get(&def.name.to_lowercase()).cloned().unwrap_or_default();
        let shingle_sizes = if def.shingled {
            o.shingle_sizes.unwrap_or_else(|| self.shingle_sizes.iter().copied().collect())
        } else {
            vec![]
        };
        FieldAnalysis {
            kind: def.kind,
            stem: o.stemming.unwrap_or(self.stemming),
            remove_stopwords: o.remove_stopwords.unwrap_or(true),
            shingle_sizes,
        }
    }
}

impl Default for AnalyzerConfig {
    /// Default stopword list, Porter stemming, bigram and trigram shingles,
    /// and no stemming on person-name fields.
    fn default() -> Self {
        let no_stem = FieldOverride { stemming: Some(false), ..Default::default() };
        AnalyzerConfig::new(parse_stopwords(DEFAULT_STOPWORDS), true, [2, 3].into_iter().collect())
            .and_then(|c| c.with_override(names::PATIENT_NAME, no_stem.clone()))
            .and_then(|c| c.with_override(names::AUTHOR, no_stem))
            .expect("default analyzer config is valid")
    }
}

/// Resolved analysis recipe for one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldAnalysis {
    pub kind: FieldKind,
    pub stem: bool,
    pub remove_stopwords: bool,
    pub shingle_sizes: Vec<usize>,
}

impl FieldAnalysis {
    /// Normalises one query word (no wildcards) the way this field's index terms were built.
    pub fn normalize_word(&self, word: &str) -> String {
        if self.stem && !has_wildcard(word) {
            stem(word)
        } else {
            word.to_string()
        }
    }
}

/// Drops stopword tokens, leaving the positions of the survivors untouched.
pub fn remove_stopwords(tokens: Vec<Token>, config: &AnalyzerConfig) -> Vec<Token> {
    tokens.into_iter().filter(|t| !config.is_stopword(&t.text)).collect()
}

/// Contiguous word n-grams. Tokens must be adjacent by position, so n-grams
/// never bridge a removed stopword.
pub fn shingle(tokens: &[Token], n: usize) -> Vec<String> {
    shingle_positions(tokens, n).into_iter().map(|(s, _)| s).collect()
}

fn shingle_positions(tokens: &[Token], n: usize) -> Vec<(String, u32)> {
    if n < 2 || tokens.len() < n {
        return Vec::new();
    }
    tokens
        .windows(n)
        .filter(|w| w.windows(2).all(|p| p[1].position == p[0].position + 1))
        .map(|w| {
            let joined = w.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(&SHINGLE_SEPARATOR.to_string());
            (joined, w[0].position)
        })
        .collect()
}

/// Terms of one field value, with positions. Shingle terms carry the position of their first word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalyzedField {
    pub words: Vec<(String, u32)>,
    pub shingles: Vec<(String, u32)>,
    /// Removed stopwords, normalised like words. Indexed so phrases and
    /// Boolean queries can still match them, but not counted in the length.
    pub stopwords: Vec<(String, u32)>,
}

impl AnalyzedField {
    /// Number of word positions, used as the field length for length normalisation.
    pub fn length(&self) -> u32 {
        self.words.len() as u32
    }
}

/// Index-side analysis of a stored field value.
pub fn analyze_value(text: &str, analysis: &FieldAnalysis, config: &AnalyzerConfig) -> AnalyzedField {
    match analysis.kind {
        FieldKind::Datetime => AnalyzedField::default(),
        FieldKind::ExactKeyword | FieldKind::Identifier => {
            let term = fold(text.trim());
            if term.is_empty() {
                AnalyzedField::default()
            } else {
                AnalyzedField { words: vec![(term, 0)], ..Default::default() }
            }
        }
        FieldKind::AnalyzedText => {
            let mut tokens = tokenize_with(text, TokenizeMode::Document);
            let mut removed = Vec::new();
            if analysis.remove_stopwords {
                (removed, tokens) = tokens.into_iter().partition(|t| config.is_stopword(&t.text));
            }
            if analysis.stem {
                for t in tokens.iter_mut().chain(removed.iter_mut()) {
                    t.text = stem(&t.text);
                }
            }
            let shingles = analysis
                .shingle_sizes
                .iter()
                .flat_map(|&n| shingle_positions(&tokens, n))
                .collect();
            let words = tokens.into_iter().map(|t| (t.text, t.position)).collect();
            let stopwords = removed.into_iter().map(|t| (t.text, t.position)).collect();
            AnalyzedField { words, shingles, stopwords }
        }
    }
}

/// tokenize → remove stopwords → stem → shingles (when the field requests them).
pub fn analyze(
    text: &str,
    field: &str,
    schema: &Schema,
    config: &AnalyzerConfig,
) -> Result<Vec<String>, AnalysisError> {
    let (_, def) = schema.resolve(field)?;
    let analyzed = analyze_value(text, &config.for_field(def), config);
    Ok(analyzed.words.into_iter().chain(analyzed.shingles).map(|(t, _)| t).collect())
}
