use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use super::segment::Segment;
use super::wildcard::{glob_match, is_wildcard_char, literal_prefix};
use super::{IndexError, Posting, WildcardExpansion, WildcardPolicy};
use crate::analysis::AnalyzerConfig;
use crate::schema::{FieldId, ReportDocument, Schema};

/// Dense document number within one snapshot: segment base + ordinal.
pub type DocNum = u32;

#[derive(Debug, Clone)]
pub(crate) struct SegmentView {
    pub segment: Arc<Segment>,
    pub deleted: Arc<FixedBitSet>,
    pub base: DocNum,
}

impl SegmentView {
    pub fn is_live(&self, ord: u32) -> bool {
        !self.deleted.contains(ord as usize)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldStats {
    /// Sum of word counts over live documents.
    pub total_terms: u64,
    /// Live documents with a non-empty value.
    pub doc_count: u64,
}

#[derive(Debug)]
pub(crate) struct SnapshotInner {
    pub id: u64,
    pub schema: Arc<Schema>,
    pub analyzer: Arc<AnalyzerConfig>,
    pub segments: Vec<SegmentView>,
    pub locations: HashMap<String, DocNum>,
    pub field_stats: Vec<FieldStats>,
    pub max_doc: DocNum,
}

/// Immutable point-in-time view of the index. Cheap to clone and share across threads.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub(crate) inner: Arc<SnapshotInner>,
}

impl Snapshot {
    pub(crate) fn build(
        id: u64,
        schema: Arc<Schema>,
        analyzer: Arc<AnalyzerConfig>,
        segments: Vec<(Arc<Segment>, Arc<FixedBitSet>)>,
    ) -> Snapshot {
        let mut views = Vec::with_capacity(segments.len());
        let mut base = 0;
        let mut locations = HashMap::new();
        let mut field_stats = vec![FieldStats::default(); schema.len()];
        for (segment, deleted) in segments {
            for (ord, doc) in segment.docs.iter().enumerate() {
                if deleted.contains(ord) {
                    continue;
                }
                locations.insert(doc.doc_id.clone(), base + ord as DocNum);
                for (fid, stats) in field_stats.iter_mut().enumerate() {
                    if let Some(f) = segment.fields.get(fid) {
                        let len = f.lengths[ord] as u64;
                        stats.total_terms += len;
                        stats.doc_count += (len > 0) as u64;
                    }
                }
            }
            let len = segment.len() as DocNum;
            views.push(SegmentView { segment, deleted, base });
            base += len;
        }
        Snapshot {
            inner: Arc::new(SnapshotInner {
                id,
                schema,
                analyzer,
                segments: views,
                locations,
                field_stats,
                max_doc: base,
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    /// Live (non-deleted) documents.
    pub fn doc_count(&self) -> usize {
        self.inner.locations.len()
    }

    /// Upper bound of document numbers, deleted slots included.
    pub fn max_doc(&self) -> DocNum {
        self.inner.max_doc
    }

    pub fn schema(&self) -> &Schema {
        &self.inner.schema
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.inner.analyzer
    }

    pub fn segment_count(&self) -> usize {
        self.inner.segments.len()
    }

    pub fn field_stats(&self, field: FieldId) -> FieldStats {
        self.inner.field_stats.get(field.0 as usize).copied().unwrap_or_default()
    }

    /// Mean word count of a field over live documents (0 for an empty index).
    pub fn avg_field_length(&self, field: FieldId) -> f64 {
        let n = self.doc_count();
        if n == 0 {
            0.0
        } else {
            self.field_stats(field).total_terms as f64 / n as f64
        }
    }

    fn locate(&self, doc: DocNum) -> (&SegmentView, u32) {
        let segs = &self.inner.segments;
        let idx = segs.partition_point(|s| s.base <= doc) - 1;
        (&segs[idx], doc - segs[idx].base)
    }

    pub fn is_live(&self, doc: DocNum) -> bool {
        if doc >= self.inner.max_doc {
            return false;
        }
        let (seg, ord) = self.locate(doc);
        seg.is_live(ord)
    }

    pub fn doc(&self, doc: DocNum) -> &ReportDocument {
        let (seg, ord) = self.locate(doc);
        &seg.segment.docs[ord as usize]
    }

    pub fn field_length(&self, field: FieldId, doc: DocNum) -> u32 {
        let (seg, ord) = self.locate(doc);
        seg.segment.field(field).map_or(0, |f| f.lengths[ord as usize])
    }

    pub fn doc_num(&self, doc_id: &str) -> Option<DocNum> {
        self.inner.locations.get(doc_id).copied()
    }

    pub fn live_docs(&self) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.inner.max_doc as usize);
        for seg in &self.inner.segments {
            for ord in 0..seg.segment.len() as u32 {
                if seg.is_live(ord) {
                    set.insert((seg.base + ord) as usize);
                }
            }
        }
        set
    }

    /// Iterates documents (ascending document number) in live order.
    pub fn live_doc_nums(&self) -> impl Iterator<Item = DocNum> + '_ {
        self.inner.segments.iter().flat_map(|seg| {
            (0..seg.segment.len() as u32).filter(move |&o| seg.is_live(o)).map(move |o| seg.base + o)
        })
    }

    /// Live postings of a term as `(doc, positions)` in ascending document number.
    pub fn term_docs<'a>(&'a self, field: FieldId, term: &'a str) -> impl Iterator<Item = (DocNum, &'a [u32])> + 'a {
        self.inner.segments.iter().flat_map(move |seg| {
            seg.segment
                .postings(field, term)
                .iter()
                .filter(move |p| seg.is_live(p.ord))
                .map(move |p| (seg.base + p.ord, p.positions.as_slice()))
        })
    }

    pub fn doc_freq(&self, field: FieldId, term: &str) -> usize {
        self.term_docs(field, term).count()
    }

    /// Postings for `(field, term)` sorted by external doc id. Empty for absent terms.
    pub fn postings(&self, field: &str, term: &str) -> Result<Vec<Posting>, IndexError> {
        let (fid, _) = self.schema().resolve(field)?;
        let mut out: Vec<Posting> = self
            .term_docs(fid, term)
            .map(|(doc, positions)| Posting {
                doc_id: self.doc(doc).doc_id.clone(),
                term_frequency: positions.len() as u32,
                positions: positions.to_vec(),
            })
            .collect();
        out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(out)
    }

    /// All word terms of the field with at least one live posting, sorted.
    pub fn dictionary(&self, field: FieldId) -> BTreeSet<String> {
        self.inner
            .segments
            .iter()
            .flat_map(|seg| seg.segment.terms_with_prefix(field, ""))
            .filter(|t| self.term_docs(field, t).next().is_some())
            .map(str::to_string)
            .collect()
    }

    /// Expands a glob against the field dictionary.
    pub fn expand_wildcard(
        &self,
        field: &str,
        pattern: &str,
        policy: &WildcardPolicy,
    ) -> Result<WildcardExpansion, IndexError> {
        let (fid, _) = self.schema().resolve(field)?;
        self.expand_wildcard_in(fid, pattern, policy)
    }

    pub fn expand_wildcard_in(
        &self,
        field: FieldId,
        pattern: &str,
        policy: &WildcardPolicy,
    ) -> Result<WildcardExpansion, IndexError> {
        if !pattern.contains(is_wildcard_char) {
            return Err(IndexError::NotAWildcard(pattern.to_string()));
        }
        if pattern.chars().all(is_wildcard_char) {
            return Err(IndexError::DegenerateWildcard(pattern.to_string()));
        }
        let prefix = literal_prefix(pattern);
        if prefix.is_empty() && !policy.allow_leading {
            return Err(IndexError::LeadingWildcard(pattern.to_string()));
        }
        let mut matched = BTreeSet::new();
        for seg in &self.inner.segments {
            for term in seg.segment.terms_with_prefix(field, prefix) {
                if !matched.contains(term)
                    && glob_match(pattern, term)
                    && seg.segment.postings(field, term).iter().any(|p| seg.is_live(p.ord))
                {
                    matched.insert(term.to_string());
                }
            }
        }
        let truncated = matched.len() > policy.max_expansions;
        let terms = matched.into_iter().take(policy.max_expansions).collect();
        Ok(WildcardExpansion { terms, truncated })
    }

    pub fn get_document(&self, doc_id: &str) -> Option<&ReportDocument> {
        self.doc_num(doc_id).map(|d| self.doc(d))
    }
}
