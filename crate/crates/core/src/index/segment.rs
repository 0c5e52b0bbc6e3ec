use std::collections::BTreeMap;

use crate::analysis::{analyze_value, AnalyzerConfig, SHINGLE_SEPARATOR};
use crate::schema::{FieldId, ReportDocument, Schema};

/// Occurrences of one term in one document of a segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawPosting {
    pub ord: u32,
    pub positions: Vec<u32>,
}

#[derive(Debug, Default)]
pub(crate) struct FieldIndex {
    pub terms: BTreeMap<String, Vec<RawPosting>>,
    /// Word count per document ordinal; 0 when the field is absent.
    pub lengths: Vec<u32>,
}

/// An immutable batch of documents with its own term dictionary.
#[derive(Debug)]
pub(crate) struct Segment {
    pub id: u64,
    pub docs: Vec<ReportDocument>,
    pub fields: Vec<FieldIndex>,
}

impl Segment {
    pub fn build(id: u64, docs: Vec<ReportDocument>, schema: &Schema, analyzer: &AnalyzerConfig) -> Segment {
        let mut fields: Vec<FieldIndex> = (0..schema.len())
            .map(|_| FieldIndex { terms: BTreeMap::new(), lengths: vec![0; docs.len()] })
            .collect();
        for (ord, doc) in docs.iter().enumerate() {
            let ord = ord as u32;
            for (name, value) in &doc.fields {
                let Some((fid, def)) = schema.lookup(name) else { continue };
                if !def.kind.is_indexed() {
                    continue;
                }
                let Some(text) = value.as_text() else { continue };
                let analyzed = analyze_value(text, &analyzer.for_field(def), analyzer);
                let field = &mut fields[fid.0 as usize];
                field.lengths[ord as usize] += analyzed.length();
                let mut per_term: BTreeMap<String, Vec<u32>> = BTreeMap::new();
                for (term, pos) in analyzed.words.into_iter().chain(analyzed.shingles).chain(analyzed.stopwords) {
                    per_term.entry(term).or_default().push(pos);
                }
                for (term, mut positions) in per_term {
                    positions.sort_unstable();
                    positions.dedup();
                    let list = field.terms.entry(term).or_default();
                    match list.last_mut() {
                        // same field name appearing twice under different casing
                        Some(last) if last.ord == ord => {
                            last.positions.extend(positions);
                            last.positions.sort_unstable();
                            last.positions.dedup();
                        }
                        _ => list.push(RawPosting { ord, positions }),
                    }
                }
            }
        }
        Segment { id, docs, fields }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn field(&self, field: FieldId) -> Option<&FieldIndex> {
        self.fields.get(field.0 as usize)
    }

    pub fn postings(&self, field: FieldId, term: &str) -> &[RawPosting] {
        self.field(field).and_then(|f| f.terms.get(term)).map_or(&[], Vec::as_slice)
    }

    /// Word terms (not shingles) starting with `prefix`, in lexicographic order.
    pub fn terms_with_prefix<'a>(&'a self, field: FieldId, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.field(field)
            .into_iter()
            .flat_map(move |f| f.terms.range::<str, _>((std::ops::Bound::Included(prefix), std::ops::Bound::Unbounded)))
            .take_while(move |(t, _)| t.starts_with(prefix))
            .filter(|(t, _)| !t.contains(SHINGLE_SEPARATOR))
            .map(|(t, _)| t.as_str())
    }
}
