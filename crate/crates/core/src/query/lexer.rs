use super::ast::Span;
use super::QueryError;
use crate::schema::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    And,
    Or,
    Not,
    /// `+`: conjunction marker.
    Plus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lexeme {
    Word(String),
    /// Raw text between the quotes.
    Phrase(String),
    /// `Name:` immediately followed by a value.
    Field(String),
    Op(Op),
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexed {
    pub lexeme: Lexeme,
    pub span: Span,
}

fn is_special(c: char) -> bool {
    c == '(' || c == ')' || c == '"'
}

fn symbol_op(c: char) -> Option<Op> {
    match c {
        '&' => Some(Op::And),
        '|' => Some(Op::Or),
        '!' | '-' => Some(Op::Not),
        '+' => Some(Op::Plus),
        _ => None,
    }
}

fn word_op(w: &str) -> Option<Op> {
    match w {
        "AND" | "&&" | "&" => Some(Op::And),
        "OR" | "||" | "|" => Some(Op::Or),
        "NOT" | "!" | "-" => Some(Op::Not),
        "+" => Some(Op::Plus),
        _ => None,
    }
}

/// Splits a raw query into lexemes.
///
/// Operator symbols only bind at word boundaries: `-x` and `a - b` negate,
/// `T2-weighted` is one word. In lenient mode an unterminated quote runs to
/// the end of input instead of failing.
pub fn lex(raw: &str, lenient: bool) -> Result<Vec<Lexed>, QueryError> {
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(raw.len(), |(o, _)| *o);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                out.push(Lexed { lexeme: Lexeme::LParen, span: Span::new(off, off + 1) });
                i += 1;
            }
            ')' => {
                out.push(Lexed { lexeme: Lexeme::RParen, span: Span::new(off, off + 1) });
                i += 1;
            }
            '"' => {
                let close = (i + 1..chars.len()).find(|&j| chars[j].1 == '"');
                match close {
                    Some(j) => {
                        out.push(Lexed {
                            lexeme: Lexeme::Phrase(raw[off + 1..chars[j].0].to_string()),
                            span: Span::new(off, chars[j].0 + 1),
                        });
                        i = j + 1;
                    }
                    None if lenient => {
                        out.push(Lexed { lexeme: Lexeme::Phrase(raw[off + 1..].to_string()), span: Span::new(off, raw.len()) });
                        i = chars.len();
                    }
                    None => return Err(QueryError::UnbalancedQuote { position: off }),
                }
            }
            _ => {
                // prefix operator glued to a word: -x, !x, +x
                if let Some(op) = symbol_op(c) {
                    let next = chars.get(i + 1).map(|(_, n)| *n);
                    if next.is_some_and(|n| !n.is_whitespace() && n != ')') && op != Op::And && op != Op::Or {
                        out.push(Lexed { lexeme: Lexeme::Op(op), span: Span::new(off, off + c.len_utf8()) });
                        i += 1;
                        continue;
                    }
                }
                let start = i;
                while i < chars.len() && !chars[i].1.is_whitespace() && !is_special(chars[i].1) {
                    i += 1;
                }
                let word = &raw[off..end_of(i)];
                let span = Span::new(off, end_of(i));
                if let Some(op) = word_op(word) {
                    out.push(Lexed { lexeme: Lexeme::Op(op), span });
                    continue;
                }
                if let Some(colon) = word.find(':') {
                    let name = &word[..colon];
                    if is_identifier(name) {
                        let rest = &word[colon + 1..];
                        let field_span = Span::new(off, off + colon + 1);
                        let value_follows = !rest.is_empty() || chars.get(i).is_some_and(|(_, n)| *n == '"');
                        if !value_follows && !lenient {
                            return Err(QueryError::EmptyFieldValue { field: name.to_string(), position: off });
                        }
                        if value_follows {
                            out.push(Lexed { lexeme: Lexeme::Field(name.to_string()), span: field_span });
                        }
                        if !rest.is_empty() {
                            out.push(Lexed { lexeme: Lexeme::Word(rest.to_string()), span: Span::new(off + colon + 1, span.end) });
                        }
                        continue;
                    }
                }
                debug_assert!(i > start);
                out.push(Lexed { lexeme: Lexeme::Word(word.to_string()), span });
            }
        }
    }
    Ok(out)
}
