//! Brute-force reference evaluation: re-analyses every stored document and
//! checks the query tree against it directly, without touching postings.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use radsearch_core::analysis::{analyze_value, fold, has_wildcard, tokenize_with, AnalyzerConfig, TokenizeMode};
use radsearch_core::query::{Node, QueryAst};
use radsearch_core::schema::{FieldKind, ReportDocument, Schema};
use regex::Regex;

type FieldTerms = BTreeMap<String, Vec<u32>>;

pub struct NaiveDoc {
    pub doc_id: String,
    fields: BTreeMap<String, FieldTerms>,
}

pub fn prepare(docs: &[ReportDocument], schema: &Schema, analyzer: &AnalyzerConfig) -> Vec<NaiveDoc> {
    docs.iter()
        .map(|doc| {
            let mut fields = BTreeMap::new();
            for (_, def) in schema.fields() {
                let Some(text) = doc.get(&def.name).and_then(|v| v.as_text()) else { continue };
                let analyzed = analyze_value(text, &analyzer.for_field(def), analyzer);
                let mut terms: FieldTerms = BTreeMap::new();
                for (t, p) in analyzed.words.into_iter().chain(analyzed.stopwords) {
                    terms.entry(t).or_default().push(p);
                }
                fields.insert(def.name.clone(), terms);
            }
            NaiveDoc { doc_id: doc.doc_id.clone(), fields }
        })
        .collect()
}

fn glob_regex(pattern: &str) -> Regex {
    let mut re = String::from("^");
    for c in pattern.chars() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).unwrap()
}

struct Ctx<'a> {
    schema: &'a Schema,
    analyzer: &'a AnalyzerConfig,
    globs: RefCell<HashMap<String, Regex>>,
}

impl Ctx<'_> {
    fn fields(&self, field: &Option<String>) -> Vec<String> {
        match field {
            Some(f) => self
                .schema
                .lookup(f)
                .filter(|(_, d)| d.kind != FieldKind::Datetime)
                .map(|(_, d)| vec![d.name.clone()])
                .unwrap_or_default(),
            None => self
                .schema
                .fields()
                .filter(|(_, d)| d.kind == FieldKind::AnalyzedText)
                .map(|(_, d)| d.name.clone())
                .collect(),
        }
    }

    /// Positions of a folded query word in one field of one document.
    fn word_positions(&self, doc: &NaiveDoc, field: &str, word: &str) -> Vec<u32> {
        let (_, def) = self.schema.lookup(field).unwrap();
        let fa = self.analyzer.for_field(def);
        let Some(terms) = doc.fields.get(&def.name) else { return vec![] };
        if has_wildcard(word) {
            let mut globs = self.globs.borrow_mut();
            let re = globs.entry(word.to_string()).or_insert_with(|| glob_regex(word));
            let mut out: Vec<u32> = terms.iter().filter(|(t, _)| re.is_match(t)).flat_map(|(_, p)| p.clone()).collect();
            out.sort_unstable();
            return out;
        }
        terms.get(&fa.normalize_word(word)).cloned().unwrap_or_default()
    }

    fn phrase_in(&self, doc: &NaiveDoc, field: &str, words: &[String]) -> bool {
        let (_, def) = self.schema.lookup(field).unwrap();
        if def.kind != FieldKind::AnalyzedText {
            let joined = words.join(" ");
            return doc.fields.get(&def.name).is_some_and(|t| t.contains_key(&joined));
        }
        let required: Vec<(u32, Vec<u32>)> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (i as u32, self.word_positions(doc, field, w)))
            .collect();
        if required.is_empty() {
            return false;
        }
        let (off0, first) = &required[0];
        first.iter().any(|&p| {
            p >= *off0 && required.iter().all(|(off, ps)| ps.contains(&(p - off0 + off)))
        })
    }

    fn term_words(&self, field: &Option<String>, text: &str) -> Vec<String> {
        let kind = field.as_ref().and_then(|f| self.schema.lookup(f)).map(|(_, d)| d.kind);
        match kind {
            Some(FieldKind::Identifier | FieldKind::ExactKeyword) => {
                let f = fold(text.trim());
                if f.is_empty() { vec![] } else { vec![f] }
            }
            _ => tokenize_with(text, TokenizeMode::Query).into_iter().map(|t| t.text).collect(),
        }
    }

    fn eval(&self, doc: &NaiveDoc, node: &QueryAst) -> bool {
        match &node.node {
            Node::Term(t) => {
                let words = self.term_words(&t.field, &t.text);
                let fields = self.fields(&t.field);
                let word_hit = |w: &String| fields.iter().any(|f| !self.word_positions(doc, f, w).is_empty());
                match words.len() {
                    0 => false,
                    1 => word_hit(&words[0]),
                    _ if words.iter().any(|w| has_wildcard(w)) => words.iter().all(word_hit),
                    _ => fields.iter().any(|f| self.phrase_in(doc, f, &words)),
                }
            }
            Node::Phrase(p) => self.fields(&p.field).iter().any(|f| self.phrase_in(doc, f, &p.terms)),
            Node::And { children } => children.iter().all(|c| self.eval(doc, c)),
            Node::Or { children } => children.iter().any(|c| self.eval(doc, c)),
            Node::Not { child } => !self.eval(doc, child),
            Node::Group { child } => self.eval(doc, child),
        }
    }
}

/// Doc ids satisfying the query tree, by direct per-document evaluation.
pub fn matching_ids(docs: &[NaiveDoc], ast: &QueryAst, schema: &Schema, analyzer: &AnalyzerConfig) -> BTreeSet<String> {
    let ctx = Ctx { schema, analyzer, globs: RefCell::default() };
    docs.iter().filter(|d| ctx.eval(d, ast)).map(|d| d.doc_id.clone()).collect()
}
