use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{Node, PhraseNode, QueryAst};
use super::{detect_boolean, optional_budget, parse_query_with_limit, FilterSpec, QueryError};
use crate::analysis::{fold, has_wildcard, tokenize_with, AnalyzerConfig, TokenizeMode};
use crate::schema::{FieldKind, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Regular,
    Boolean,
}

/// One query word after folding; stemming happens per field at execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub field: Option<String>,
    pub text: String,
    pub wildcard: bool,
    /// Ordinal among the query's keywords, left to right.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub mode: PlanMode,
    /// Parsed query with field names resolved to their schema spelling.
    pub ast: QueryAst,
    /// Every keyword in source order. In boolean mode only those outside `NOT`.
    pub keywords: Vec<Keyword>,
    pub mandatory: Vec<Keyword>,
    pub optional: Vec<Keyword>,
    pub min_match: usize,
    pub wildcard_terms: Vec<Keyword>,
    pub phrases: Vec<PhraseNode>,
    pub field_scopes: BTreeMap<String, Vec<String>>,
    pub filters: FilterSpec,
}

/// Splits a term leaf into keywords. Keyword and identifier fields keep the
/// value whole; text fields are tokenized like documents, wildcards kept.
pub(crate) fn term_words(term: &str, kind: Option<FieldKind>) -> Vec<String> {
    match kind {
        Some(FieldKind::Identifier | FieldKind::ExactKeyword) => {
            let folded = fold(term.trim());
            if folded.is_empty() { vec![] } else { vec![folded] }
        }
        _ => tokenize_with(term, TokenizeMode::Query).into_iter().map(|t| t.text).collect(),
    }
}

fn resolve_fields(ast: &mut QueryAst, schema: &Schema) -> Result<(), QueryError> {
    let fix = |field: &mut Option<String>| -> Result<(), QueryError> {
        if let Some(name) = field {
            let (_, def) = schema.resolve(name).map_err(|_| QueryError::UnknownField(name.clone()))?;
            *name = def.name.clone();
        }
        Ok(())
    };
    match &mut ast.node {
        Node::Term(t) => fix(&mut t.field),
        Node::Phrase(p) => fix(&mut p.field),
        Node::And { children } | Node::Or { children } => children.iter_mut().try_for_each(|c| resolve_fields(c, schema)),
        Node::Not { child } | Node::Group { child } => resolve_fields(child, schema),
    }
}

/// Parses and plans a raw query.
///
/// Regular searches drop stopwords and let the `optional_budget` most common
/// keywords go unmatched; `doc_freq` ranks them. Boolean searches keep the
/// tree exactly as written.
pub fn plan_query(
    raw: &str,
    filters: FilterSpec,
    schema: &Schema,
    analyzer: &AnalyzerConfig,
    max_chars: usize,
    doc_freq: &dyn Fn(&Keyword) -> u64,
) -> Result<QueryPlan, QueryError> {
    filters.validate()?;
    if let Some(field) = &filters.collapse_field {
        schema.resolve(field).map_err(|_| QueryError::UnknownField(field.clone()))?;
    }
    let boolean = detect_boolean(raw);
    let mut ast = parse_query_with_limit(raw, max_chars)?;
    resolve_fields(&mut ast, schema)?;

    let leaves: Vec<&QueryAst> = if boolean { ast.positive_leaves() } else { ast.leaves() };
    let mut keywords = Vec::new();
    let mut phrases = Vec::new();
    for leaf in leaves {
        match &leaf.node {
            Node::Term(t) => {
                let kind = t.field.as_deref().and_then(|f| schema.lookup(f)).map(|(_, d)| d.kind);
                for word in term_words(&t.text, kind) {
                    if analyzer.is_stopword(&word) {
                        continue;
                    }
                    let position = keywords.len();
                    keywords.push(Keyword { field: t.field.clone(), wildcard: has_wildcard(&word), text: word, position });
                }
            }
            Node::Phrase(p) => phrases.push(p.clone()),
            _ => unreachable!("leaves are terms or phrases"),
        }
    }

    let mut wildcard_terms = Vec::new();
    ast.walk(&mut |n| {
        if let Node::Term(t) = &n.node {
            if t.wildcard {
                wildcard_terms.push(Keyword { field: t.field.clone(), text: fold(&t.text), wildcard: true, position: 0 });
            }
        }
    });
    for (i, k) in wildcard_terms.iter_mut().enumerate() {
        k.position = i;
    }
    let mut field_scopes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for k in &keywords {
        if let Some(f) = &k.field {
            field_scopes.entry(f.clone()).or_default().push(k.text.clone());
        }
    }

    if boolean {
        return Ok(QueryPlan {
            mode: PlanMode::Boolean,
            ast,
            keywords,
            mandatory: Vec::new(),
            optional: Vec::new(),
            min_match: 0,
            wildcard_terms,
            phrases,
            field_scopes,
            filters,
        });
    }

    if keywords.is_empty() && phrases.is_empty() {
        return Err(QueryError::NoKeywords);
    }
    let budget = optional_budget(keywords.len());
    let mut order: Vec<(u64, usize)> = keywords.iter().map(|k| (doc_freq(k), k.position)).collect();
    // most common first, rightmost first among equals
    order.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
    let optional_positions: Vec<usize> = order.iter().take(budget).map(|&(_, p)| p).collect();
    let (optional, mandatory): (Vec<Keyword>, Vec<Keyword>) =
        keywords.iter().cloned().partition(|k| optional_positions.contains(&k.position));
    Ok(QueryPlan {
        mode: PlanMode::Regular,
        ast,
        min_match: mandatory.len(),
        keywords,
        mandatory,
        optional,
        wildcard_terms,
        phrases,
        field_scopes,
        filters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::DEFAULT_MAX_QUERY_CHARS;

    fn plan(raw: &str, df: &dyn Fn(&Keyword) -> u64) -> Result<QueryPlan, QueryError> {
        plan_query(raw, FilterSpec::default(), &Schema::radiology(), &AnalyzerConfig::default(), DEFAULT_MAX_QUERY_CHARS, df)
    }

    fn texts(ks: &[Keyword]) -> Vec<&str> {
        ks.iter().map(|k| k.text.as_str()).collect()
    }

    #[test]
    fn regular_drops_stopwords() {
        let p = plan("the liver lesion", &|_| 1).unwrap();
        assert_eq!(p.mode, PlanMode::Regular);
        assert_eq!(texts(&p.keywords), ["liver", "lesion"]);
        assert_eq!(p.min_match, 2);
        assert!(p.optional.is_empty());
    }

    #[test]
    fn ten_keywords_three_optional() {
        let q = "k0 k1 k2 k3 k4 k5 k6 k7 k8 k9";
        // df grows with position, so the last three are the most common
        let p = plan(q, &|k| k.position as u64).unwrap();
        assert_eq!(p.mandatory.len(), 7);
        assert_eq!(p.min_match, 7);
        assert_eq!(texts(&p.optional), ["k7", "k8", "k9"]);
    }

    #[test]
    fn optional_tie_break_is_rightmost() {
        let p = plan("a1 b1 c1 d1 e1", &|_| 5).unwrap();
        assert_eq!(texts(&p.optional), ["e1"]);
        let p = plan("a1 b1 c1 d1 e1", &|k| if k.text == "a1" { 9 } else { 1 }).unwrap();
        assert_eq!(texts(&p.optional), ["a1"]);
    }

    #[test]
    fn boolean_is_verbatim() {
        let p = plan("a OR b", &|_| 1).unwrap();
        assert_eq!(p.mode, PlanMode::Boolean);
        assert!(p.optional.is_empty());
        assert_eq!(p.min_match, 0);
        let p = plan("liver NOT the", &|_| 1).unwrap();
        assert_eq!(texts(&p.keywords), ["liver"]);
    }

    #[test]
    fn all_stopwords_rejected() {
        assert_eq!(plan("the to there", &|_| 1), Err(QueryError::NoKeywords));
    }

    #[test]
    fn fields_resolved_case_insensitively() {
        let p = plan("patientid:123456 findings:Filter", &|_| 1).unwrap();
        assert_eq!(p.keywords[0].field.as_deref(), Some("PatientID"));
        assert_eq!(p.field_scopes["Findings"], vec!["filter"]);
        assert_eq!(plan("Nope:1", &|_| 1).unwrap_err(), QueryError::UnknownField("Nope".into()));
    }

    #[test]
    fn wildcards_collected() {
        let p = plan("hyp* h?patic injury", &|_| 1).unwrap();
        assert_eq!(texts(&p.wildcard_terms), ["hyp*", "h?patic"]);
        assert!(p.keywords[0].wildcard);
    }
}
