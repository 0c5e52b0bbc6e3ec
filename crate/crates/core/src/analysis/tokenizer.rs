use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub position: u32,
    /// Byte offsets `[start, end)` into the source text.
    pub char_span: (usize, usize),
}

impl Token {
    pub fn has_wildcard(&self) -> bool {
        has_wildcard(&self.text)
    }
}

pub fn has_wildcard(s: &str) -> bool {
    s.contains(['?', '*'])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    /// `?` and `*` are kept inside tokens.
    Query,
    /// `?` and `*` are separators, as in stored report text.
    Document,
}

/// Splits on whitespace and punctuation, folds to lowercase ASCII where a
/// fold exists, and keeps wildcard characters inside tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, TokenizeMode::Query)
}

pub fn tokenize_with(text: &str, mode: TokenizeMode) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let is_word = |c: char| {
        c.is_alphanumeric() || is_combining_mark(c) || (mode == TokenizeMode::Query && (c == '?' || c == '*'))
    };
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word(chars[i].1) {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if is_word(c) {
                j += 1;
            } else if is_apostrophe(c) && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |(off, _)| *off);
        let folded = fold(&text[start..end]);
        if !folded.is_empty() {
            tokens.push(Token { text: folded, position: tokens.len() as u32, char_span: (start, end) });
        }
        i = j;
    }
    tokens
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// NFC normalisation, lowercasing and diacritic removal.
pub fn fold(s: &str) -> String {
    let stripped: String = s
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .flat_map(char::to_lowercase)
        .collect();
    stripped.nfc().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<(&str, u32)> {
        tokens.iter().map(|t| (t.text.as_str(), t.position)).collect()
    }

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(texts(&tokenize("IVC stent")), vec![("ivc", 0), ("stent", 1)]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ,.;  ").is_empty());
    }

    #[test]
    fn wildcards_pass_through_in_query_mode() {
        let tokens = tokenize("hyp* injury");
        assert_eq!(texts(&tokens), vec![("hyp*", 0), ("injury", 1)]);
        let doc = tokenize_with("mass? yes*", TokenizeMode::Document);
        assert_eq!(texts(&doc), vec![("mass", 0), ("yes", 1)]);
    }

    #[test]
    fn apostrophes_inside_words() {
        let tokens = tokenize("patient's 'quoted' T2-weighted");
        assert_eq!(
            texts(&tokens),
            vec![("patient's", 0), ("quoted", 1), ("t2", 2), ("weighted", 3)]
        );
    }

    #[test]
    fn diacritics_fold() {
        let tokens = tokenize("Café NAÏVE e\u{301}");
        assert_eq!(texts(&tokens), vec![("cafe", 0), ("naive", 1), ("e", 2)]);
    }

    #[test]
    fn spans_reproduce_source() {
        let src = "Hyp* INJURY, no (evidence) of l'ésion";
        for t in tokenize(src) {
            assert!(t.char_span.0 < t.char_span.1);
            assert_eq!(fold(&src[t.char_span.0..t.char_span.1]), t.text);
        }
    }
}
