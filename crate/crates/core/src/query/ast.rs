use std::fmt;

use serde::{Deserialize, Serialize};

/// Byte range `[start, end)` in the raw query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermNode {
    pub field: Option<String>,
    /// The word as typed.
    pub text: String,
    pub wildcard: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseNode {
    pub field: Option<String>,
    /// Folded words of the phrase, at least one.
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Term(TermNode),
    Phrase(PhraseNode),
    And { children: Vec<QueryAst> },
    Or { children: Vec<QueryAst> },
    Not { child: Box<QueryAst> },
    Group { child: Box<QueryAst> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAst {
    pub node: Node,
    pub span: Span,
}

impl QueryAst {
    pub fn new(node: Node, span: Span) -> Self {
        QueryAst { node, span }
    }

    pub fn term(text: &str) -> Self {
        let wildcard = crate::analysis::has_wildcard(text);
        QueryAst::new(Node::Term(TermNode { field: None, text: text.into(), wildcard }), Span::default())
    }

    /// Structural equality ignoring spans.
    pub fn same_shape(&self, other: &QueryAst) -> bool {
        match (&self.node, &other.node) {
            (Node::Term(a), Node::Term(b)) => a == b,
            (Node::Phrase(a), Node::Phrase(b)) => a == b,
            (Node::And { children: a }, Node::And { children: b })
            | (Node::Or { children: a }, Node::Or { children: b }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_shape(y))
            }
            (Node::Not { child: a }, Node::Not { child: b })
            | (Node::Group { child: a }, Node::Group { child: b }) => a.same_shape(b),
            _ => false,
        }
    }

    /// The same tree with every `Group` replaced by its child.
    pub fn without_groups(&self) -> QueryAst {
        let node = match &self.node {
            Node::Group { child } => return child.without_groups(),
            Node::And { children } => Node::And { children: children.iter().map(Self::without_groups).collect() },
            Node::Or { children } => Node::Or { children: children.iter().map(Self::without_groups).collect() },
            Node::Not { child } => Node::Not { child: Box::new(child.without_groups()) },
            leaf => leaf.clone(),
        };
        QueryAst::new(node, self.span)
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a QueryAst)) {
        visit(self);
        match &self.node {
            Node::And { children } | Node::Or { children } => children.iter().for_each(|c| c.walk(visit)),
            Node::Not { child } | Node::Group { child } => child.walk(visit),
            Node::Term(_) | Node::Phrase(_) => {}
        }
    }

    /// Leaves in source order.
    pub fn leaves(&self) -> Vec<&QueryAst> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if matches!(n.node, Node::Term(_) | Node::Phrase(_)) {
                out.push(n);
            }
        });
        out
    }

    /// Leaves not under any `Not`; these are the parts of the query a hit can match positively.
    pub fn positive_leaves(&self) -> Vec<&QueryAst> {
        fn go<'a>(n: &'a QueryAst, out: &mut Vec<&'a QueryAst>) {
            match &n.node {
                Node::Term(_) | Node::Phrase(_) => out.push(n),
                Node::And { children } | Node::Or { children } => children.iter().for_each(|c| go(c, out)),
                Node::Group { child } => go(child, out),
                Node::Not { .. } => {}
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

fn write_field(f: &mut fmt::Formatter<'_>, field: &Option<String>) -> fmt::Result {
    match field {
        Some(name) => write!(f, "{name}:"),
        None => Ok(()),
    }
}

/// Pretty-prints in the query language; the output re-parses to the same shape.
impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Term(t) => {
                write_field(f, &t.field)?;
                f.write_str(&t.text)
            }
            Node::Phrase(p) => {
                write_field(f, &p.field)?;
                write!(f, "\"{}\"", p.terms.join(" "))
            }
            Node::And { children } | Node::Or { children } => {
                let op = if matches!(self.node, Node::And { .. }) { " AND " } else { " OR " };
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            Node::Not { child } => write!(f, "NOT {child}"),
            Node::Group { child } => write!(f, "({child})"),
        }
    }
}
