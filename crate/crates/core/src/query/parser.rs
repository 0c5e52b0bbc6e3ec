//! Recursive-descent parser. Precedence: NOT > AND (explicit or adjacency) > OR.

use super::ast::{Node, PhraseNode, QueryAst, Span, TermNode};
use super::lexer::{lex, Lexed, Lexeme, Op};
use super::{QueryError, DEFAULT_MAX_QUERY_CHARS};
use crate::analysis::{has_wildcard, tokenize_with, TokenizeMode};

/// Parses with the default length limit.
pub fn parse_query(raw: &str) -> Result<QueryAst, QueryError> {
    parse_query_with_limit(raw, DEFAULT_MAX_QUERY_CHARS)
}

pub fn parse_query_with_limit(raw: &str, max_chars: usize) -> Result<QueryAst, QueryError> {
    let len = raw.chars().count();
    if len > max_chars {
        return Err(QueryError::TooLong { length: len, max: max_chars });
    }
    if raw.trim().is_empty() {
        return Err(QueryError::Empty);
    }
    let tokens = lex(raw, false)?;
    let mut parser = Parser { tokens, pos: 0, input_len: raw.len() };
    let ast = parser.parse_or()?;
    if let Some(tok) = parser.peek() {
        return Err(match tok.lexeme {
            Lexeme::RParen => QueryError::UnbalancedParen { position: tok.span.start },
            _ => QueryError::Unexpected { position: tok.span.start },
        });
    }
    Ok(ast)
}

pub(crate) fn phrase_terms(text: &str) -> Vec<String> {
    tokenize_with(text, TokenizeMode::Document).into_iter().map(|t| t.text).collect()
}

struct Parser {
    tokens: Vec<Lexed>,
    pos: usize,
    input_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lexed> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn peek_op(&self) -> Option<Op> {
        match self.peek() {
            Some(Lexed { lexeme: Lexeme::Op(op), .. }) => Some(*op),
            _ => None,
        }
    }

    fn starts_unary(&self) -> bool {
        matches!(
            self.peek().map(|t| &t.lexeme),
            Some(Lexeme::Word(_) | Lexeme::Phrase(_) | Lexeme::Field(_) | Lexeme::LParen | Lexeme::Op(Op::Not))
        )
    }

    fn dangling(&self, op: &Lexed) -> QueryError {
        QueryError::DanglingOperator { position: op.span.start }
    }

    fn parse_or(&mut self) -> Result<QueryAst, QueryError> {
        let first = self.parse_and()?;
        let mut children = vec![first];
        while self.peek_op() == Some(Op::Or) {
            let op = self.next().unwrap();
            if !self.starts_unary() && self.peek_op() != Some(Op::Plus) {
                return Err(self.dangling(&op));
            }
            children.push(self.parse_and()?);
        }
        Ok(combine(children, |children| Node::Or { children }))
    }

    fn parse_and(&mut self) -> Result<QueryAst, QueryError> {
        if self.peek_op() == Some(Op::Plus) {
            let op = self.next().unwrap();
            if !self.starts_unary() {
                return Err(self.dangling(&op));
            }
        }
        let mut children = vec![self.parse_unary()?];
        loop {
            match self.peek_op() {
                Some(Op::And) | Some(Op::Plus) => {
                    let op = self.next().unwrap();
                    if !self.starts_unary() {
                        return Err(self.dangling(&op));
                    }
                    children.push(self.parse_unary()?);
                }
                _ if self.starts_unary() => children.push(self.parse_unary()?),
                _ => break,
            }
        }
        Ok(combine(children, |children| Node::And { children }))
    }

    fn parse_unary(&mut self) -> Result<QueryAst, QueryError> {
        if self.peek_op() == Some(Op::Not) {
            let op = self.next().unwrap();
            if !self.starts_unary() {
                return Err(self.dangling(&op));
            }
            let child = self.parse_unary()?;
            let span = op.span.join(child.span);
            return Ok(QueryAst::new(Node::Not { child: Box::new(child) }, span));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<QueryAst, QueryError> {
        let Some(tok) = self.next() else {
            return Err(QueryError::Unexpected { position: self.input_len });
        };
        match tok.lexeme {
            Lexeme::LParen => {
                if matches!(self.peek().map(|t| &t.lexeme), Some(Lexeme::RParen)) {
                    return Err(QueryError::EmptyGroup { position: tok.span.start });
                }
                let inner = self.parse_or()?;
                match self.next() {
                    Some(Lexed { lexeme: Lexeme::RParen, span }) => {
                        Ok(QueryAst::new(Node::Group { child: Box::new(inner) }, tok.span.join(span)))
                    }
                    _ => Err(QueryError::UnbalancedParen { position: tok.span.start }),
                }
            }
            Lexeme::RParen => Err(QueryError::UnbalancedParen { position: tok.span.start }),
            Lexeme::Word(text) => Ok(term(None, text, tok.span)),
            Lexeme::Phrase(text) => phrase(None, &text, tok.span),
            Lexeme::Field(name) => match self.next() {
                Some(Lexed { lexeme: Lexeme::Word(text), span }) => Ok(term(Some(name), text, tok.span.join(span))),
                Some(Lexed { lexeme: Lexeme::Phrase(text), span }) => phrase(Some(name), &text, tok.span.join(span)),
                _ => Err(QueryError::EmptyFieldValue { field: name, position: tok.span.start }),
            },
            Lexeme::Op(_) => Err(self.dangling(&tok)),
        }
    }
}

fn combine(mut children: Vec<QueryAst>, make: impl FnOnce(Vec<QueryAst>) -> Node) -> QueryAst {
    if children.len() == 1 {
        return children.pop().unwrap();
    }
    let span = children.iter().map(|c| c.span).reduce(Span::join).unwrap();
    QueryAst::new(make(children), span)
}

fn term(field: Option<String>, text: String, span: Span) -> QueryAst {
    let wildcard = has_wildcard(&text);
    QueryAst::new(Node::Term(TermNode { field, text, wildcard }), span)
}

fn phrase(field: Option<String>, text: &str, span: Span) -> Result<QueryAst, QueryError> {
    let terms = phrase_terms(text);
    if terms.is_empty() {
        return Err(QueryError::EmptyPhrase { position: span.start });
    }
    Ok(QueryAst::new(Node::Phrase(PhraseNode { field, terms }), span))
}
