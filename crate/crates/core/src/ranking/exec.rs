//! Query execution over a snapshot: leaf matching, Boolean set algebra and
//! per-component scoring.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use fixedbitset::FixedBitSet;

use super::bm25::{bm25, idf, Bm25Params};
use super::passage::passage_score;
use super::RankingConfig;
use crate::analysis::{has_wildcard, FieldAnalysis, SHINGLE_SEPARATOR};
use crate::index::{DocNum, IndexError, Snapshot, WildcardPolicy};
use crate::query::{Keyword, Node, QueryAst};
use crate::schema::{names, FieldId, FieldKind};
use crate::Scalar;

pub(crate) const SHINGLE_FIELDS: [&str; 3] = [names::PATIENT_NAME, names::AUTHOR, names::STUDY_DESCRIPTION];
pub(crate) const PASSAGE_FIELDS: [&str; 2] = [names::FINDINGS, names::IMPRESSION];

/// Documents matched by one query leaf with their base relevance.
#[derive(Debug)]
pub(crate) struct LeafMatch<S> {
    pub docs: FixedBitSet,
    pub scores: Vec<S>,
}

impl<S: Scalar> LeafMatch<S> {
    fn empty(max_doc: usize) -> Self {
        LeafMatch { docs: FixedBitSet::with_capacity(max_doc), scores: vec![S::zero(); max_doc] }
    }
}

pub(crate) struct Executor<'a, S: Scalar> {
    pub snap: &'a Snapshot,
    cfg: &'a RankingConfig<S>,
    policy: &'a WildcardPolicy,
    weights: Vec<S>,
    avg_len: Vec<S>,
    analysis: Vec<FieldAnalysis>,
    params: Bm25Params<S>,
    max_doc: usize,
    cache: RefCell<HashMap<(Option<String>, String), Rc<LeafMatch<S>>>>,
    pub warnings: RefCell<Vec<String>>,
}

impl<'a, S: Scalar> Executor<'a, S> {
    pub fn new(snap: &'a Snapshot, cfg: &'a RankingConfig<S>, policy: &'a WildcardPolicy) -> Self {
        let schema = snap.schema();
        let weights = schema.fields().map(|(_, def)| cfg.field_weight(&def.name)).collect();
        let avg_len = schema.fields().map(|(fid, _)| S::lit(snap.avg_field_length(fid))).collect();
        let analysis = schema.fields().map(|(_, def)| snap.analyzer().for_field(def)).collect();
        Executor {
            snap,
            cfg,
            policy,
            weights,
            avg_len,
            analysis,
            params: Bm25Params { k1: cfg.k1, b: cfg.b },
            max_doc: snap.max_doc() as usize,
            cache: RefCell::new(HashMap::new()),
            warnings: RefCell::new(Vec::new()),
        }
    }

    fn fields_for(&self, field: Option<&str>) -> Vec<FieldId> {
        let schema = self.snap.schema();
        match field {
            Some(name) => schema
                .lookup(name)
                .filter(|(_, def)| def.kind.is_indexed())
                .map(|(fid, _)| vec![fid])
                .unwrap_or_default(),
            None => schema.default_search_fields(),
        }
    }

    fn field_kind(&self, field: Option<&str>) -> Option<FieldKind> {
        field.and_then(|f| self.snap.schema().lookup(f)).map(|(_, d)| d.kind)
    }

    fn score(&self, fid: FieldId, doc: DocNum, tf: u32, idf: S) -> S {
        let i = fid.0 as usize;
        bm25(tf, self.snap.field_length(fid, doc), self.avg_len[i], idf, self.params) * self.weights[i]
    }

    /// Index terms a folded query word stands for in one field.
    pub fn terms_in_field(&self, fid: FieldId, word: &str) -> Result<Vec<String>, IndexError> {
        let analysis = &self.analysis[fid.0 as usize];
        if has_wildcard(word) {
            let expansion = self.snap.expand_wildcard_in(fid, word, self.policy)?;
            if expansion.truncated {
                let name = &self.snap.schema().def(fid).name;
                self.warnings.borrow_mut().push(format!(
                    "wildcard {word} in {name} matched more than {} terms; results use the first {}",
                    self.policy.max_expansions, self.policy.max_expansions
                ));
            }
            return Ok(expansion.terms);
        }
        Ok(vec![analysis.normalize_word(word)])
    }

    /// Single-word match; wildcard expansions score as their best expansion per field.
    pub fn keyword(&self, field: Option<&str>, word: &str) -> Result<Rc<LeafMatch<S>>, IndexError> {
        let key = (field.map(str::to_string), word.to_string());
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let n = self.snap.doc_count();
        let mut out = LeafMatch::empty(self.max_doc);
        for fid in self.fields_for(field) {
            let terms = self.terms_in_field(fid, word)?;
            let mut best: HashMap<DocNum, S> = HashMap::new();
            for term in &terms {
                let df = self.snap.doc_freq(fid, term);
                if df == 0 {
                    continue;
                }
                let term_idf = idf::<S>(n, df);
                for (doc, positions) in self.snap.term_docs(fid, term) {
                    let s = self.score(fid, doc, positions.len() as u32, term_idf);
                    if terms.len() == 1 {
                        out.scores[doc as usize] = out.scores[doc as usize] + s;
                        out.docs.insert(doc as usize);
                    } else {
                        let e = best.entry(doc).or_insert(S::zero());
                        *e = e.max(s);
                    }
                }
            }
            for (doc, s) in best {
                out.scores[doc as usize] = out.scores[doc as usize] + s;
                out.docs.insert(doc as usize);
            }
        }
        let out = Rc::new(out);
        self.cache.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    /// Ordered words at consecutive positions, stopwords included.
    pub fn phrase(&self, field: Option<&str>, words: &[String]) -> LeafMatch<S> {
        let n = self.snap.doc_count();
        let mut out = LeafMatch::empty(self.max_doc);
        for fid in self.fields_for(field) {
            let analysis = &self.analysis[fid.0 as usize];
            let required: Vec<(u32, String)> = match analysis.kind {
                FieldKind::AnalyzedText => {
                    words.iter().enumerate().map(|(i, w)| (i as u32, analysis.normalize_word(w))).collect()
                }
                _ => vec![(0, words.join(" "))],
            };
            if required.is_empty() {
                continue;
            }
            let maps: Vec<HashMap<DocNum, &[u32]>> =
                required.iter().map(|(_, t)| self.snap.term_docs(fid, t).collect()).collect();
            let driver = (0..maps.len()).min_by_key(|&i| maps[i].len()).unwrap();
            let mut matched: Vec<(DocNum, u32)> = Vec::new();
            for (&doc, _) in &maps[driver] {
                if maps.iter().any(|m| !m.contains_key(&doc)) {
                    continue;
                }
                let (off0, _) = required[0];
                let tf = maps[0][&doc]
                    .iter()
                    .filter(|&&p| p >= off0)
                    .filter(|&&p| {
                        let start = p - off0;
                        required.iter().zip(&maps).skip(1).all(|((off, _), m)| m[&doc].binary_search(&(start + off)).is_ok())
                    })
                    .count() as u32;
                if tf > 0 {
                    matched.push((doc, tf));
                }
            }
            if matched.is_empty() {
                continue;
            }
            let phrase_idf = idf::<S>(n, matched.len());
            for (doc, tf) in matched {
                out.scores[doc as usize] = out.scores[doc as usize] + self.score(fid, doc, tf, phrase_idf);
                out.docs.insert(doc as usize);
            }
        }
        out
    }

    /// Match for a parsed leaf. A term that splits into several words
    /// (`T2-weighted`) behaves as a phrase of those words.
    pub fn leaf(&self, node: &QueryAst) -> Result<Rc<LeafMatch<S>>, IndexError> {
        match &node.node {
            Node::Term(t) => {
                let field = t.field.as_deref();
                let words = crate::query::plan::term_words(&t.text, self.field_kind(field));
                match words.len() {
                    0 => Ok(Rc::new(LeafMatch::empty(self.max_doc))),
                    1 => self.keyword(field, &words[0]),
                    _ if words.iter().any(|w| has_wildcard(w)) => {
                        let mut acc: Option<LeafMatch<S>> = None;
                        for w in &words {
                            let m = self.keyword(field, w)?;
                            acc = Some(match acc {
                                None => LeafMatch { docs: m.docs.clone(), scores: m.scores.clone() },
                                Some(mut a) => {
                                    a.docs.intersect_with(&m.docs);
                                    a.scores.iter_mut().zip(&m.scores).for_each(|(x, y)| *x = *x + *y);
                                    a
                                }
                            });
                        }
                        Ok(Rc::new(acc.expect("at least two words")))
                    }
                    _ => Ok(Rc::new(self.phrase(field, &words))),
                }
            }
            Node::Phrase(p) => Ok(Rc::new(self.phrase(p.field.as_deref(), &p.terms))),
            _ => unreachable!("not a leaf"),
        }
    }

    /// Documents satisfying the expression. `NOT` complements within the live documents.
    pub fn eval(&self, node: &QueryAst) -> Result<FixedBitSet, IndexError> {
        Ok(match &node.node {
            Node::Term(_) | Node::Phrase(_) => self.leaf(node)?.docs.clone(),
            Node::And { children } => {
                let mut acc = self.eval(&children[0])?;
                for c in &children[1..] {
                    acc.intersect_with(&self.eval(c)?);
                }
                acc
            }
            Node::Or { children } => {
                let mut acc = FixedBitSet::with_capacity(self.max_doc);
                for c in children {
                    acc.union_with(&self.eval(c)?);
                }
                acc
            }
            Node::Not { child } => {
                let mut live = self.snap.live_docs();
                live.difference_with(&self.eval(child)?);
                live
            }
            Node::Group { child } => self.eval(child)?,
        })
    }

    /// Shingle credit for `n`-word runs of consecutive query keywords on the name and title fields.
    pub fn shingle_component(&self, keywords: &[Keyword], n: usize, candidates: &FixedBitSet) -> HashMap<DocNum, S> {
        let mut out = HashMap::new();
        if keywords.len() < n {
            return out;
        }
        let schema = self.snap.schema();
        let doc_count = self.snap.doc_count();
        for name in SHINGLE_FIELDS {
            let Some((fid, def)) = schema.lookup(name) else { continue };
            let analysis = &self.analysis[fid.0 as usize];
            if def.kind != FieldKind::AnalyzedText || !analysis.shingle_sizes.contains(&n) {
                continue;
            }
            for window in keywords.windows(n) {
                let usable = window.iter().all(|k| {
                    !k.wildcard
                        && k.field.as_deref().is_none_or(|f| f == def.name)
                        && !(analysis.remove_stopwords && self.snap.analyzer().is_stopword(&k.text))
                });
                if !usable {
                    continue;
                }
                let term = window
                    .iter()
                    .map(|k| analysis.normalize_word(&k.text))
                    .collect::<Vec<_>>()
                    .join(&SHINGLE_SEPARATOR.to_string());
                let df = self.snap.doc_freq(fid, &term);
                if df == 0 {
                    continue;
                }
                let term_idf = idf::<S>(doc_count, df);
                for (doc, positions) in self.snap.term_docs(fid, &term) {
                    if candidates.contains(doc as usize) {
                        let s = self.score(fid, doc, positions.len() as u32, term_idf);
                        let e = out.entry(doc).or_insert(S::zero());
                        *e = *e + s;
                    }
                }
            }
        }
        out
    }

    /// Proximity credit over findings and impression: the best field's best window.
    pub fn passage_component(&self, keywords: &[Keyword], candidates: &FixedBitSet) -> Result<HashMap<DocNum, S>, IndexError> {
        let mut out: HashMap<DocNum, S> = HashMap::new();
        let schema = self.snap.schema();
        for name in PASSAGE_FIELDS {
            let Some((fid, def)) = schema.lookup(name) else { continue };
            if def.kind != FieldKind::AnalyzedText {
                continue;
            }
            let mut distinct: Vec<&str> = keywords
                .iter()
                .filter(|k| k.field.as_deref().is_none_or(|f| f == def.name))
                .map(|k| k.text.as_str())
                .collect();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.is_empty() {
                continue;
            }
            let mut occurrences: HashMap<DocNum, Vec<(u32, usize)>> = HashMap::new();
            for (i, word) in distinct.iter().enumerate() {
                for term in self.terms_in_field(fid, word)? {
                    for (doc, positions) in self.snap.term_docs(fid, &term) {
                        if candidates.contains(doc as usize) {
                            occurrences.entry(doc).or_default().extend(positions.iter().map(|&p| (p, i)));
                        }
                    }
                }
            }
            for (doc, mut occ) in occurrences {
                let s = passage_score::<S>(&mut occ, distinct.len(), self.cfg.passage_window);
                let e = out.entry(doc).or_insert(S::zero());
                *e = e.max(s);
            }
        }
        Ok(out)
    }
}
