//! Document store and inverted index with snapshot isolation.
//!
//! Each commit seals pending documents into an immutable segment and publishes
//! a new [`Snapshot`]. Replaced and deleted documents are tombstoned in older
//! segments; tombstones are purged when segments are merged.

mod segment;
mod snapshot;
pub mod storage;
pub mod wildcard;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use parking_lot::{Mutex, MutexGuard, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalyzerConfig;
use crate::schema::{FieldDef, FieldKind, FieldValue, ReportDocument, Schema, SchemaError};
use segment::Segment;
use storage::{DirectoryStorage, Manifest, MemoryStorage, SegmentEntry, Storage, MANIFEST_FORMAT};

pub use snapshot::{DocNum, FieldStats, Snapshot};

pub const DEFAULT_MAX_EXPANSIONS: usize = 1024;
pub const DEFAULT_MAX_SEGMENTS: usize = 8;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("document id must be non-empty")]
    EmptyDocId,
    #[error("field `{field}` expects a {expected} value")]
    MalformedValue { field: String, expected: FieldKind },
    #[error("`{0}` contains no wildcard character")]
    NotAWildcard(String),
    #[error("wildcard pattern `{0}` has no literal characters")]
    DegenerateWildcard(String),
    #[error("wildcard pattern `{0}` starts with a wildcard; leading wildcards are disabled")]
    LeadingWildcard(String),
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: String,
    pub term_frequency: u32,
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WildcardPolicy {
    pub allow_leading: bool,
    pub max_expansions: usize,
}

impl Default for WildcardPolicy {
    fn default() -> Self {
        WildcardPolicy { allow_leading: false, max_expansions: DEFAULT_MAX_EXPANSIONS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WildcardExpansion {
    /// Matching terms in lexicographic order, at most `max_expansions`.
    pub terms: Vec<String>,
    /// More terms matched than the cap allowed.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOptions {
    pub max_segments: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { max_segments: DEFAULT_MAX_SEGMENTS }
    }
}

#[derive(Debug)]
struct WriterState {
    next_segment_id: u64,
    write_seq: u64,
}

/// Shared handle: many readers, one writer at a time.
#[derive(Debug)]
pub struct Index {
    current: RwLock<Snapshot>,
    writer: Mutex<WriterState>,
    storage: Box<dyn Storage>,
    options: IndexOptions,
}

impl Index {
    pub fn in_memory(schema: Schema, analyzer: AnalyzerConfig) -> Index {
        Self::with_storage(Box::new(MemoryStorage), schema, analyzer, IndexOptions::default())
    }

    pub fn with_storage(
        storage: Box<dyn Storage>,
        schema: Schema,
        analyzer: AnalyzerConfig,
        options: IndexOptions,
    ) -> Index {
        let snapshot = Snapshot::build(0, Arc::new(schema), Arc::new(analyzer), vec![]);
        Index {
            current: RwLock::new(snapshot),
            writer: Mutex::new(WriterState { next_segment_id: 1, write_seq: 0 }),
            storage,
            options,
        }
    }

    /// Opens the index stored in `dir`, creating an empty one with `schema` and
    /// `analyzer` when the directory holds none.
    pub fn open_or_create(dir: impl AsRef<Path>, schema: Schema, analyzer: AnalyzerConfig) -> Result<Index, IndexError> {
        let storage = DirectoryStorage::new(dir.as_ref())?;
        let Some(manifest) = storage.read_manifest()? else {
            let index = Self::with_storage(Box::new(storage), schema, analyzer, IndexOptions::default());
            index.writer().commit()?;
            return Ok(index);
        };
        let schema = Arc::new(manifest.schema.clone());
        let analyzer = Arc::new(manifest.analyzer.clone());
        let mut segments = Vec::new();
        for entry in &manifest.segments {
            let docs = storage.read_segment(entry.id)?;
            let segment = Segment::build(entry.id, docs, &schema, &analyzer);
            let mut deleted = FixedBitSet::with_capacity(segment.len());
            for &ord in &entry.deleted {
                deleted.insert(ord as usize);
            }
            segments.push((Arc::new(segment), Arc::new(deleted)));
        }
        let snapshot = Snapshot::build(manifest.snapshot_id, schema, analyzer, segments);
        Ok(Index {
            current: RwLock::new(snapshot),
            writer: Mutex::new(WriterState { next_segment_id: manifest.next_segment_id, write_seq: 0 }),
            storage: Box::new(storage),
            options: IndexOptions::default(),
        })
    }

    pub fn with_options(mut self, options: IndexOptions) -> Self {
        self.options = options;
        self
    }

    /// The most recently committed snapshot.
    pub fn snapshot(&self) -> Snapshot {
        self.current.read().clone()
    }

    /// Acquires the single writer, blocking while another writer is active.
    pub fn writer(&self) -> IndexWriter<'_> {
        IndexWriter::new(self, self.writer.lock())
    }

    /// Like [`Index::writer`] but returns `None` instead of blocking.
    pub fn try_writer(&self) -> Option<IndexWriter<'_>> {
        self.writer.try_lock().map(|guard| IndexWriter::new(self, guard))
    }

    /// Adds a field to the schema and publishes it. Existing documents are not reindexed.
    pub fn register_field(&self, def: FieldDef) -> Result<u64, IndexError> {
        let mut writer = self.writer();
        let version = writer.register_field(def)?;
        writer.commit()?;
        Ok(version)
    }
}

/// Exclusive write session. Changes become visible on [`IndexWriter::commit`];
/// dropping the writer discards them.
pub struct IndexWriter<'a> {
    index: &'a Index,
    state: MutexGuard<'a, WriterState>,
    schema: Schema,
    /// doc_id → latest pending version; `None` marks a delete.
    pending: BTreeMap<String, (u64, Option<ReportDocument>)>,
    replace_all: bool,
}

impl<'a> IndexWriter<'a> {
    fn new(index: &'a Index, state: MutexGuard<'a, WriterState>) -> Self {
        let schema = index.snapshot().schema().clone();
        IndexWriter { index, state, schema, pending: BTreeMap::new(), replace_all: false }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn register_field(&mut self, def: FieldDef) -> Result<u64, IndexError> {
        Ok(self.schema.register(def)?)
    }

    /// Validates field names and value kinds against the schema.
    pub fn validate(&self, doc: &ReportDocument) -> Result<(), IndexError> {
        if doc.doc_id.trim().is_empty() {
            return Err(IndexError::EmptyDocId);
        }
        for (name, value) in &doc.fields {
            let (_, def) = self.schema.resolve(name)?;
            let ok = match def.kind {
                FieldKind::Datetime => matches!(value, FieldValue::Datetime(_)),
                _ => !matches!(value, FieldValue::Datetime(_)),
            };
            if !ok {
                return Err(IndexError::MalformedValue { field: name.clone(), expected: def.kind });
            }
        }
        Ok(())
    }

    /// Stages a full replacement of the document with this id.
    /// Returns a write sequence number.
    pub fn upsert(&mut self, doc: ReportDocument) -> Result<u64, IndexError> {
        self.validate(&doc)?;
        self.state.write_seq += 1;
        let seq = self.state.write_seq;
        self.pending.insert(doc.doc_id.clone(), (seq, Some(doc)));
        Ok(seq)
    }

    pub fn delete(&mut self, doc_id: &str) -> u64 {
        self.state.write_seq += 1;
        let seq = self.state.write_seq;
        self.pending.insert(doc_id.to_string(), (seq, None));
        seq
    }

    /// Drops every committed document when this writer commits, so the commit
    /// publishes exactly the documents staged here.
    pub fn replace_all(&mut self) {
        self.replace_all = true;
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn rollback(mut self) {
        self.pending.clear();
    }

    /// Publishes all staged changes atomically as a new snapshot.
    pub fn commit(mut self) -> Result<Snapshot, IndexError> {
        let base = self.index.snapshot();
        let schema = Arc::new(self.schema.clone());
        let analyzer = base.inner.analyzer.clone();

        // tombstone every committed version that is replaced or deleted
        let mut segments: Vec<(Arc<Segment>, Arc<FixedBitSet>)> = Vec::new();
        let mut touched: HashMap<usize, FixedBitSet> = HashMap::new();
        for (i, view) in base.inner.segments.iter().enumerate() {
            if self.replace_all {
                let mut all = FixedBitSet::with_capacity(view.segment.len());
                all.insert_range(..);
                touched.insert(i, all);
                continue;
            }
            for (ord, doc) in view.segment.docs.iter().enumerate() {
                if view.is_live(ord as u32) && self.pending.contains_key(&doc.doc_id) {
                    touched.entry(i).or_insert_with(|| (*view.deleted).clone()).insert(ord);
                }
            }
        }
        for (i, view) in base.inner.segments.iter().enumerate() {
            let deleted = touched.remove(&i).map(Arc::new).unwrap_or_else(|| view.deleted.clone());
            if deleted.count_ones(..) < view.segment.len() {
                segments.push((view.segment.clone(), deleted));
            }
        }

        let docs: Vec<ReportDocument> = std::mem::take(&mut self.pending)
            .into_values()
            .filter_map(|(_, doc)| doc)
            .collect();
        let mut new_segment_ids = Vec::new();
        if !docs.is_empty() {
            let id = self.state.next_segment_id;
            let segment = Segment::build(id, docs, &schema, &analyzer);
            self.index.storage.write_segment(id, &segment.docs)?;
            new_segment_ids.push(id);
            let deleted = FixedBitSet::with_capacity(segment.len());
            segments.push((Arc::new(segment), Arc::new(deleted)));
        }

        if segments.len() > self.index.options.max_segments {
            let live: Vec<ReportDocument> = segments
                .iter()
                .flat_map(|(seg, del)| {
                    seg.docs.iter().enumerate().filter(|(o, _)| !del.contains(*o)).map(|(_, d)| d.clone())
                })
                .collect();
            let id = self.state.next_segment_id + new_segment_ids.len() as u64;
            let merged = Segment::build(id, live, &schema, &analyzer);
            self.index.storage.write_segment(id, &merged.docs)?;
            new_segment_ids.push(id);
            let deleted = FixedBitSet::with_capacity(merged.len());
            segments = vec![(Arc::new(merged), Arc::new(deleted))];
        }

        let snapshot_id = base.id() + 1;
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            snapshot_id,
            next_segment_id: self.state.next_segment_id + new_segment_ids.len() as u64,
            schema: (*schema).clone(),
            analyzer: (*analyzer).clone(),
            segments: segments
                .iter()
                .map(|(seg, del)| SegmentEntry {
                    id: seg.id,
                    doc_count: seg.len(),
                    deleted: del.ones().map(|o| o as u32).collect(),
                })
                .collect(),
        };
        self.index.storage.write_manifest(&manifest)?;
        self.state.next_segment_id = manifest.next_segment_id;

        let snapshot = Snapshot::build(snapshot_id, schema, analyzer, segments);
        for view in &base.inner.segments {
            if snapshot.inner.segments.iter().all(|s| s.segment.id != view.segment.id) {
                if let Err(e) = self.index.storage.remove_segment(view.segment.id) {
                    tracing::warn!(segment = view.segment.id, error = %e, "could not remove merged segment");
                }
            }
        }
        *self.index.current.write() = snapshot.clone();
        Ok(snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::names;

    fn index() -> Index {
        Index::in_memory(Schema::radiology(), AnalyzerConfig::default())
    }

    fn doc(id: &str, findings: &str) -> ReportDocument {
        ReportDocument::new(id).with_text(names::FINDINGS, findings)
    }

    #[test]
    fn upsert_visible_only_after_commit() {
        let index = index();
        let mut w = index.writer();
        w.upsert(doc("a", "ivc filter")).unwrap();
        assert_eq!(index.snapshot().doc_count(), 0);
        let snap = w.commit().unwrap();
        assert_eq!(snap.doc_count(), 1);
        let postings = snap.postings("findings", "filter").unwrap();
        assert_eq!(postings, vec![Posting { doc_id: "a".into(), term_frequency: 1, positions: vec![1] }]);
        assert!(snap.postings("findings", "zzz").unwrap().is_empty());
        assert!(matches!(snap.postings("nope", "x"), Err(IndexError::Schema(_))));
    }

    #[test]
    fn replacement_is_whole_document() {
        let index = index();
        let mut w = index.writer();
        w.upsert(doc("a", "old text").with_text(names::IMPRESSION, "kept?")).unwrap();
        w.commit().unwrap();
        let mut w = index.writer();
        w.upsert(doc("a", "new text")).unwrap();
        let snap = w.commit().unwrap();
        assert_eq!(snap.doc_count(), 1);
        let stored = snap.get_document("a").unwrap();
        assert_eq!(stored.text(names::FINDINGS), Some("new text"));
        assert!(stored.get(names::IMPRESSION).is_none());
        assert!(snap.postings("Findings", "old").unwrap().is_empty());
    }

    #[test]
    fn unknown_field_and_bad_datetime_rejected() {
        let index = index();
        let mut w = index.writer();
        let err = w.upsert(doc("a", "x").with_text("Mystery", "y")).unwrap_err();
        assert!(err.to_string().contains("Mystery"));
        let err = w.upsert(doc("b", "x").with_text(names::STUDY_DATETIME, "yesterday")).unwrap_err();
        assert!(matches!(err, IndexError::MalformedValue { .. }));
        assert!(matches!(w.upsert(ReportDocument::new(" ")), Err(IndexError::EmptyDocId)));
    }

    #[test]
    fn empty_commit_keeps_stats() {
        let index = index();
        let mut w = index.writer();
        w.upsert(doc("a", "one two")).unwrap();
        let s1 = w.commit().unwrap();
        let s2 = index.writer().commit().unwrap();
        assert_eq!(s2.id(), s1.id() + 1);
        assert_eq!(s1.doc_count(), s2.doc_count());
        let (fid, _) = s1.schema().resolve("findings").unwrap();
        assert_eq!(s1.field_stats(fid), s2.field_stats(fid));
    }

    #[test]
    fn deletes_and_snapshot_isolation() {
        let index = index();
        let mut w = index.writer();
        w.upsert(doc("a", "x")).unwrap();
        w.upsert(doc("b", "x")).unwrap();
        let old = w.commit().unwrap();
        let mut w = index.writer();
        w.delete("a");
        w.upsert(doc("c", "x")).unwrap();
        let new = w.commit().unwrap();
        assert!(old.get_document("a").is_some());
        assert!(old.get_document("c").is_none());
        assert!(new.get_document("a").is_none());
        assert_eq!(old.postings("findings", "x").unwrap().len(), 2);
        assert_eq!(new.postings("findings", "x").unwrap().len(), 2);
    }

    #[test]
    fn merge_purges_tombstones() {
        let index = index().with_options(IndexOptions { max_segments: 2 });
        for i in 0..5 {
            let mut w = index.writer();
            w.upsert(doc(&format!("d{i}"), "common")).unwrap();
            w.upsert(doc("shared", &format!("version {i}"))).unwrap();
            w.commit().unwrap();
        }
        let snap = index.snapshot();
        assert!(snap.segment_count() <= 2);
        assert_eq!(snap.doc_count(), 6);
        assert_eq!(snap.max_doc() as usize, snap.live_doc_nums().count() + snap.live_docs().count_zeroes(..));
        assert_eq!(snap.get_document("shared").unwrap().text(names::FINDINGS), Some("version 4"));
    }

    #[test]
    fn register_field_later() {
        let index = Index::in_memory(Schema::preliminary(), AnalyzerConfig::default());
        let mut w = index.writer();
        w.upsert(doc("old", "x")).unwrap();
        w.commit().unwrap();
        index.register_field(FieldDef::new(names::PATIENT_DOB, FieldKind::Datetime)).unwrap();
        assert!(matches!(
            index.register_field(FieldDef::text(names::PATIENT_DOB)),
            Err(IndexError::Schema(SchemaError::KindConflict { .. }))
        ));
        let snap = index.snapshot();
        assert!(snap.get_document("old").is_some());
        assert!(snap.schema().lookup(names::PATIENT_DOB).is_some());
    }

    #[test]
    fn wildcard_expansion() {
        let index = index();
        let mut w = index.writer();
        w.upsert(doc("a", "hypoxic hypodense hepatic")).unwrap();
        let snap = w.commit().unwrap();
        let policy = WildcardPolicy::default();
        // dictionary holds stems: hypox, hypodens, hepat
        let exp = snap.expand_wildcard("findings", "hyp*", &policy).unwrap();
        assert_eq!(exp.terms, vec!["hypodens", "hypox"]);
        assert!(!exp.truncated);
        assert_eq!(snap.expand_wildcard("findings", "h?pat", &policy).unwrap().terms, vec!["hepat"]);
        assert!(matches!(snap.expand_wildcard("findings", "*", &policy), Err(IndexError::DegenerateWildcard(_))));
        assert!(matches!(snap.expand_wildcard("findings", "*pat", &policy), Err(IndexError::LeadingWildcard(_))));
        let open = WildcardPolicy { allow_leading: true, max_expansions: 1 };
        let exp = snap.expand_wildcard("findings", "*p*", &open).unwrap();
        assert_eq!(exp.terms.len(), 1);
        assert!(exp.truncated);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        {
            let index = Index::open_or_create(dir.path(), Schema::radiology(), AnalyzerConfig::default()).unwrap();
            let mut w = index.writer();
            w.upsert(doc("a", "ivc filter")).unwrap();
            w.upsert(doc("b", "ivc stent")).unwrap();
            w.commit().unwrap();
            let mut w = index.writer();
            w.delete("b");
            w.commit().unwrap();
        }
        let index = Index::open_or_create(dir.path(), Schema::new(), AnalyzerConfig::default()).unwrap();
        let snap = index.snapshot();
        assert_eq!(snap.doc_count(), 1);
        assert_eq!(snap.postings("findings", "ivc").unwrap().len(), 1);
        assert!(snap.get_document("b").is_none());
    }

    #[test]
    fn single_writer() {
        let index = index();
        let w = index.writer();
        assert!(index.try_writer().is_none());
        drop(w);
        assert!(index.try_writer().is_some());
    }
}
