//! Query language: lexing, parsing, planning and input checkpoints.

pub mod ast;
pub mod lexer;
mod parser;
pub(crate) mod plan;
mod sanitize;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub use ast::{Node, PhraseNode, QueryAst, Span, TermNode};
pub use parser::{parse_query, parse_query_with_limit};
pub use plan::{plan_query, Keyword, PlanMode, QueryPlan};
pub use sanitize::{sanitize, RejectReason, SanitizeLimits};

pub const DEFAULT_MAX_QUERY_CHARS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("query is empty")]
    Empty,
    #[error("query is {length} characters long, the limit is {max}")]
    TooLong { length: usize, max: usize },
    #[error("unbalanced quote at position {position}")]
    UnbalancedQuote { position: usize },
    #[error("unbalanced parenthesis at position {position}")]
    UnbalancedParen { position: usize },
    #[error("operator at position {position} has no operand")]
    DanglingOperator { position: usize },
    #[error("field {field} at position {position} has no value")]
    EmptyFieldValue { field: String, position: usize },
    #[error("phrase at position {position} has no words")]
    EmptyPhrase { position: usize },
    #[error("empty parentheses at position {position}")]
    EmptyGroup { position: usize },
    #[error("unexpected input at position {position}")]
    Unexpected { position: usize },
    #[error("unknown field {0}")]
    UnknownField(String),
    #[error("no searchable keywords left after stopword removal")]
    NoKeywords,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}

impl QueryError {
    /// Byte offset into the raw query, when the error has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            QueryError::UnbalancedQuote { position }
            | QueryError::UnbalancedParen { position }
            | QueryError::DanglingOperator { position }
            | QueryError::EmptyFieldValue { position, .. }
            | QueryError::EmptyPhrase { position }
            | QueryError::EmptyGroup { position }
            | QueryError::Unexpected { position } => Some(*position),
            _ => None,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            QueryError::Empty => "empty_query",
            QueryError::TooLong { .. } => "query_too_long",
            QueryError::UnbalancedQuote { .. } => "unbalanced_quote",
            QueryError::UnbalancedParen { .. } => "unbalanced_paren",
            QueryError::DanglingOperator { .. } => "dangling_operator",
            QueryError::EmptyFieldValue { .. } => "empty_field_value",
            QueryError::EmptyPhrase { .. } => "empty_phrase",
            QueryError::EmptyGroup { .. } => "empty_group",
            QueryError::Unexpected { .. } => "syntax_error",
            QueryError::UnknownField(_) => "unknown_field",
            QueryError::NoKeywords => "no_keywords",
            QueryError::InvalidFilter(_) => "invalid_filter",
        }
    }
}

/// True when the query carries a Boolean operator outside quoted phrases.
///
/// Lowercase `and`/`or`/`not` are plain words, and operator symbols only count
/// where they bind (word boundaries), so `T2-weighted` stays a regular search.
pub fn detect_boolean(raw: &str) -> bool {
    lexer::lex(raw, true)
        .map(|lexed| lexed.iter().any(|l| matches!(l.lexeme, lexer::Lexeme::Op(_))))
        .unwrap_or(false)
}

/// Number of keywords that may be left unmatched in a regular search of `n` keywords.
pub fn optional_budget(n: usize) -> usize {
    match n {
        0..=4 => 0,
        5..=9 => (n / 5).min(2),
        _ => n * 3 / 10,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub modality: Option<BTreeSet<String>>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub collapse_field: Option<String>,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), QueryError> {
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from > to {
                return Err(QueryError::InvalidFilter(format!("from {from} is after to {to}")));
            }
        }
        if self.modality.as_ref().is_some_and(|m| m.is_empty()) {
            return Err(QueryError::InvalidFilter("empty modality set".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.modality.is_none() && self.from.is_none() && self.to.is_none() && self.collapse_field.is_none()
    }
}
