use serde::{Deserialize, Serialize};

use super::lexer::{lex, Lexeme};
use super::DEFAULT_MAX_QUERY_CHARS;
use crate::analysis::has_wildcard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SanitizeLimits {
    pub max_chars: usize,
    pub max_clauses: usize,
    pub max_wildcards: usize,
}

impl Default for SanitizeLimits {
    fn default() -> Self {
        SanitizeLimits { max_chars: DEFAULT_MAX_QUERY_CHARS, max_clauses: 64, max_wildcards: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RejectReason {
    #[error("query is {length} characters long, the limit is {max}")]
    TooLong { length: usize, max: usize },
    #[error("query has {count} clauses, the limit is {max}")]
    TooManyClauses { count: usize, max: usize },
    #[error("query has {count} wildcard terms, the limit is {max}")]
    TooManyWildcards { count: usize, max: usize },
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::TooLong { .. } => "query_too_long",
            RejectReason::TooManyClauses { .. } => "too_many_clauses",
            RejectReason::TooManyWildcards { .. } => "too_many_wildcards",
        }
    }
}

/// Strips control characters and enforces the size limits. Never rewrites
/// beyond the stripping; a query over any limit is rejected whole.
pub fn sanitize(raw: &str, limits: &SanitizeLimits) -> Result<String, RejectReason> {
    let cleaned: String = raw
        .chars()
        .filter_map(|c| match c {
            '\t' | '\n' | '\r' => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect();
    let length = cleaned.chars().count();
    if length > limits.max_chars {
        return Err(RejectReason::TooLong { length, max: limits.max_chars });
    }
    let lexed = lex(&cleaned, true).unwrap_or_default();
    let clauses = lexed.iter().filter(|l| matches!(l.lexeme, Lexeme::Word(_) | Lexeme::Phrase(_))).count();
    if clauses > limits.max_clauses {
        return Err(RejectReason::TooManyClauses { count: clauses, max: limits.max_clauses });
    }
    let wildcards = lexed.iter().filter(|l| matches!(&l.lexeme, Lexeme::Word(w) if has_wildcard(w))).count();
    if wildcards > limits.max_wildcards {
        return Err(RejectReason::TooManyWildcards { count: wildcards, max: limits.max_wildcards });
    }
    Ok(cleaned)
}
