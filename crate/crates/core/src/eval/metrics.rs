//! Operator counting and set-based retrieval metrics.

use std::collections::BTreeSet;

use crate::query::lexer::{lex, Lexeme, Op};
use crate::query::{parse_query, Node, QueryAst, QueryError};

/// Number of Boolean operators, quoted phrases and wildcard characters in a query.
///
/// Counting walks the parsed tree, so operator words inside quotes never count and
/// plain adjacency (the implicit AND) is free. An explicit `AND`, `&` or `+` between
/// two clauses counts once.
pub fn operator_count(raw: &str) -> Result<usize, QueryError> {
    let ast = parse_query(raw)?;
    Ok(count_node(&ast, raw))
}

fn count_node(ast: &QueryAst, raw: &str) -> usize {
    match &ast.node {
        Node::Term(t) => t.text.chars().filter(|c| matches!(c, '?' | '*')).count(),
        Node::Phrase(_) => 1,
        Node::Not { child } => 1 + count_node(child, raw),
        Node::Group { child } => count_node(child, raw),
        Node::Or { children } => children.len() - 1 + children.iter().map(|c| count_node(c, raw)).sum::<usize>(),
        Node::And { children } => {
            let explicit = children
                .windows(2)
                .filter(|w| {
                    let gap = raw.get(w[0].span.end..w[1].span.start).unwrap_or("");
                    lex(gap, true)
                        .map(|ls| ls.iter().any(|l| matches!(l.lexeme, Lexeme::Op(Op::And | Op::Plus))))
                        .unwrap_or(false)
                })
                .count();
            explicit + children.iter().map(|c| count_node(c, raw)).sum::<usize>()
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// |retrieved ∩ positives| / |positives|; `None` when there are no positives.
pub fn sensitivity(retrieved: &BTreeSet<String>, positives: &BTreeSet<String>) -> Option<f64> {
    ratio(retrieved.intersection(positives).count(), positives.len())
}

/// True negatives over all negatives of `universe`. Retrieved documents outside the
/// universe are ignored. `None` when every universe document is positive.
pub fn specificity(
    retrieved: &BTreeSet<String>,
    positives: &BTreeSet<String>,
    universe: &BTreeSet<String>,
) -> Option<f64> {
    let negatives = universe.iter().filter(|d| !positives.contains(*d));
    let (mut all, mut kept_out) = (0, 0);
    for d in negatives {
        all += 1;
        if !retrieved.contains(d) {
            kept_out += 1;
        }
    }
    ratio(kept_out, all)
}

/// |retrieved ∩ positives| / |retrieved|; `None` when nothing was retrieved.
pub fn precision(retrieved: &BTreeSet<String>, positives: &BTreeSet<String>) -> Option<f64> {
    ratio(retrieved.intersection(positives).count(), retrieved.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn operator_examples() {
        assert_eq!(operator_count("anoxic OR hypoxic").unwrap(), 1);
        assert_eq!(operator_count("NOT \"filter placement\"").unwrap(), 2);
        assert_eq!(operator_count("anoxic").unwrap(), 0);
        assert_eq!(operator_count("anoxic brain injury").unwrap(), 0);
        assert_eq!(operator_count("a AND b & c + d").unwrap(), 3);
        assert_eq!(operator_count("\"a AND b\"").unwrap(), 1);
        assert_eq!(operator_count("retriev* OR h?poxic").unwrap(), 3);
        assert_eq!(operator_count("(a | b) -c !\"d e\"").unwrap(), 4);
        assert!(operator_count("a AND").is_err());
    }

    #[test]
    fn metric_examples() {
        let gold = set(&["d1", "d2"]);
        let universe: BTreeSet<String> = (1..=10).map(|i| format!("d{i}")).collect();
        assert_eq!(sensitivity(&set(&["d1", "d2", "d3"]), &gold), Some(1.0));
        assert_eq!(sensitivity(&set(&["d1"]), &gold), Some(0.5));
        assert_eq!(sensitivity(&set(&[]), &gold), Some(0.0));
        assert_eq!(sensitivity(&set(&["d1"]), &set(&[])), None);
        assert_eq!(specificity(&set(&["d1", "d2", "d3"]), &gold, &universe), Some(7.0 / 8.0));
        assert_eq!(specificity(&gold, &gold, &universe), Some(1.0));
        assert_eq!(specificity(&universe, &gold, &universe), Some(0.0));
        assert_eq!(specificity(&gold, &gold, &gold), None);
        assert_eq!(precision(&set(&["d1", "d3"]), &gold), Some(0.5));
        assert_eq!(precision(&set(&[]), &gold), None);
    }
}
